"""Sampling of the Gaussian landscape's time increments.

The landscape B is white in time and correlated in space: over one grid step
of width dt the increment field dB(x) is a centered Gaussian field with
covariance dt * Q(x - y), independent across steps.  Two samplers are
provided:

* ``exact-cholesky`` draws the joint Gaussian for each queried point set by
  factorizing the covariance matrix.  It is the small-m oracle.  Two
  different point sets queried at the same step are NOT mutually consistent
  in this mode: each query draws its own joint vector from the step's stream.
  Use it for single-ensemble runs where each step is queried exactly once.

* ``spectral`` freezes K random frequencies drawn from the kernel's spectral
  measure and writes the increment as a random-feature sum.  It is a single
  consistent landscape: any point, any query order, same answer.  Conditional
  on the frequencies its covariance is dt * Q_K(x - y) with
  Q_K(r) = (Q(0)/K) * sum_k cos(lambda_k . r) and Q_K(0) = Q(0) exactly;
  averaged over the frequencies the covariance is exactly dt * Q(x - y).

Realizations are immutable; every query is a pure function of
(seed, step, points), so replay is bit-identical regardless of query order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import seeding
from .errors import CholeskyError, DimensionMismatchError, ModeError, UnsupportedFamilyError
from .kernels import CovarianceKernel, eval_kernel_r2, sample_frequency

MODE_EXACT = "exact-cholesky"
MODE_SPECTRAL = "spectral"
MODES = (MODE_EXACT, MODE_SPECTRAL)

# jitter ladder: first retry adds JITTER_START * dt * Q(0) to the diagonal,
# each further retry multiplies by 10, giving up past JITTER_STOP * dt * Q(0)
JITTER_START = 1e-10
JITTER_STOP = 1e-6


@dataclass(frozen=True)
class EnvironmentRealization:
    """One frozen sample of the landscape restricted to the time grid."""

    kernel: CovarianceKernel
    mode: str
    n_steps: int
    dt: float
    seed: int
    k_features: Optional[int] = None
    frequencies: Optional[np.ndarray] = None  # (K, dim), spectral mode only
    _frequencies32: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def q0(self) -> float:
        return self.kernel.sigma2


def make_environment(
    kernel: CovarianceKernel,
    mode: str,
    n_steps: int,
    dt: float,
    k_features: Optional[int] = None,
    seed: int = 0,
) -> EnvironmentRealization:
    """Create a realization.  Spectral mode draws its K frequencies once, from
    the stream (seed, frequencies, 0), and freezes them for the realization's
    lifetime; exact mode defers all cost to queries."""
    if mode not in MODES:
        raise ValueError(f"unknown environment mode {mode!r}")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    freqs = None
    freqs32 = None
    if mode == MODE_SPECTRAL:
        if k_features is None or k_features < 1:
            raise ValueError("spectral mode needs k_features >= 1")
        if not kernel.has_spectral_sampler:
            raise UnsupportedFamilyError(
                "spectral mode requires a kernel with a spectral sampler; "
                "user-radial kernels must use exact-cholesky"
            )
        rng = seeding.stream(seed, seeding.PURPOSE_FREQUENCIES, 0)
        freqs = sample_frequency(kernel, rng, size=k_features)
        freqs.setflags(write=False)
        freqs32 = freqs.astype(np.float32)
        freqs32.setflags(write=False)
    else:
        k_features = None
    return EnvironmentRealization(
        kernel=kernel,
        mode=mode,
        n_steps=int(n_steps),
        dt=float(dt),
        seed=int(seed),
        k_features=k_features,
        frequencies=freqs,
        _frequencies32=freqs32,
    )


def _check_step(env: EnvironmentRealization, step: int):
    if not 0 <= step < env.n_steps:
        raise ValueError(f"step {step} out of range [0, {env.n_steps})")


def _check_env_points(env: EnvironmentRealization, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None] if env.kernel.dim == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != env.kernel.dim:
        raise DimensionMismatchError(
            f"points must have shape (m, {env.kernel.dim}), got {np.shape(points)}"
        )
    return pts


def cholesky_with_jitter(cov: np.ndarray, scale: float) -> np.ndarray:
    """Lower Cholesky factor, climbing the diagonal jitter ladder on failure.

    ``scale`` sets the ladder unit (dt * Q(0) for increment covariances); the
    largest jitter tried is JITTER_STOP * scale, far below Monte Carlo noise.
    """
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * scale
    eye = np.eye(cov.shape[0])
    while jitter <= JITTER_STOP * scale * (1 + 1e-12):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise CholeskyError(
        f"covariance not factorizable after jitter ladder up to {JITTER_STOP * scale:g}"
    )


def _step_coefficients(env: EnvironmentRealization, step: int):
    """Per-step feature coefficients (xi, eta), each (K,), from the stream
    (seed, coefficients, step).  xi is drawn first, then eta."""
    rng = seeding.stream(env.seed, seeding.PURPOSE_COEFFICIENTS, step)
    z = rng.standard_normal(2 * env.k_features)
    return z[: env.k_features], z[env.k_features :]


def spectral_increment_block(
    env: EnvironmentRealization, first_step: int, positions: np.ndarray
) -> np.ndarray:
    """Increments dB_i(x) for a block of steps in spectral mode.

    ``positions`` has shape (m, S, dim): point a's location for each of the S
    steps first_step..first_step+S-1.  Returns (m, S) float64.  The trig work
    runs in float32 (error ~1e-6 per feature, far below sampling noise); the
    feature sums are identical for any block partition, so callers may block
    however they like without changing results.
    """
    if env.mode != MODE_SPECTRAL:
        raise ModeError("spectral_increment_block requires spectral mode")
    m, s, d = positions.shape
    k = env.k_features
    xi = np.empty((s, k, 1), dtype=np.float32)
    eta = np.empty((s, k, 1), dtype=np.float32)
    for j in range(s):
        a, b = _step_coefficients(env, first_step + j)
        xi[j, :, 0] = a
        eta[j, :, 0] = b
    pos32 = np.ascontiguousarray(positions.transpose(1, 0, 2), dtype=np.float32)  # (S, m, d)
    phases = pos32 @ env._frequencies32.T  # (S, m, K), contiguous
    trig = np.cos(phases)
    vals = np.matmul(trig, xi)[:, :, 0]  # (S, m)
    np.sin(phases, out=trig)
    vals += np.matmul(trig, eta)[:, :, 0]
    amp = np.sqrt(env.dt * env.q0 / k)
    return amp * vals.T.astype(np.float64)


def increments_at(env: EnvironmentRealization, step: int, points) -> np.ndarray:
    """A draw of the increment field over [t_step, t_step + dt) at m points.

    exact-cholesky mode: one joint Gaussian with covariance dt * Q(x_a - x_b)
    from the step's stream; bitwise-duplicate points are collapsed before
    factorization so coincident queries return exactly equal values.
    spectral mode: the frozen random-feature field, consistent across queries.
    """
    _check_step(env, step)
    pts = _check_env_points(env, points)
    if env.mode == MODE_SPECTRAL:
        return spectral_increment_block(env, step, pts[:, None, :])[:, 0]

    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    diff = uniq[:, None, :] - uniq[None, :, :]
    cov = env.dt * eval_kernel_r2(env.kernel, np.sum(np.square(diff), axis=-1))
    factor = cholesky_with_jitter(cov, env.dt * env.q0)
    rng = seeding.stream(env.seed, seeding.PURPOSE_ENVIRONMENT, step)
    z = rng.standard_normal(len(uniq))
    return (factor @ z)[inverse]


def spectral_covariance_error(env: EnvironmentRealization, pairs) -> float:
    """max over pairs of |Q_K(x - y) - Q(x - y)| for the frozen frequencies.

    Used to size K: the feature-averaging error scales like Q(0) / sqrt(K).
    """
    if env.mode != MODE_SPECTRAL:
        raise ModeError("spectral_covariance_error requires spectral mode")
    worst = 0.0
    for x, y in pairs:
        r = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        if r.ndim == 0:
            r = r[None]
        if r.shape != (env.kernel.dim,):
            raise DimensionMismatchError("pair entries must be points of the kernel dimension")
        qk = env.q0 * float(np.mean(np.cos(env.frequencies @ r)))
        q = float(eval_kernel_r2(env.kernel, float(np.dot(r, r))))
        worst = max(worst, abs(qk - q))
    return worst
