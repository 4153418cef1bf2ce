"""Replica path ensembles, Hamiltonian accumulation, and partition statistics.

The Hamiltonian of a path is minus the landscape accumulated along it with the
left-endpoint (Ito) rule:

    -H[j, i+1] = -H[j, i] + dB_i(x_{j,i})

where x_{j,i} is replica j's position at grid index i.  At each step the
increments of all replicas are drawn jointly, so every replica sees the same
frozen landscape.  For a frozen path, H at grid time t is exactly centered
Gaussian with variance t * Q(0) in both sampling modes.

All exponential reductions are max-shifted; the per-replica sum inside the
partition estimate uses compensated (exact) summation in replica-index order.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .environment import (
    MODE_SPECTRAL,
    EnvironmentRealization,
    increments_at,
    spectral_increment_block,
)
from .errors import GridMismatchError, WeightDegeneracyError
from .kernels import eval_kernel_r2

_STEP_BLOCK = 32


@dataclass(frozen=True)
class PathEnsemble:
    """N replica Brownian paths on a common grid of n_steps * dt.

    positions has shape (n_paths, n_steps + 1, dim); every replica starts at
    x0 and its increments are i.i.d. centered Gaussian with covariance
    dt * Identity.
    """

    n_paths: int
    n_steps: int
    dt: float
    dim: int
    x0: np.ndarray
    positions: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


def sample_paths(
    n_paths: int,
    n_steps: int,
    dt: float,
    dim: int,
    x0=0.0,
    rng: np.random.Generator = None,
) -> PathEnsemble:
    """Draw a replica ensemble.  The stream is consumed in replica-major,
    step-minor order (one standard-normal block of shape (N, n_steps, dim))."""
    if n_paths < 1 or dim < 1 or n_steps < 0:
        raise ValueError("n_paths, dim must be >= 1 and n_steps >= 0")
    if not dt > 0:
        raise ValueError("dt must be positive")
    start = np.broadcast_to(np.atleast_1d(np.asarray(x0, dtype=float)), (dim,)).copy()
    increments = rng.standard_normal((n_paths, n_steps, dim)) * math.sqrt(dt)
    positions = np.empty((n_paths, n_steps + 1, dim))
    positions[:, 0, :] = start
    np.cumsum(increments, axis=1, out=positions[:, 1:, :])
    positions[:, 1:, :] += start
    positions.setflags(write=False)
    return PathEnsemble(
        n_paths=n_paths, n_steps=n_steps, dt=float(dt), dim=dim, x0=start, positions=positions
    )


@dataclass(frozen=True)
class PolymerRun:
    """A replica ensemble coupled to one environment at inverse temperature
    beta, with the per-replica Hamiltonian filled on the whole grid."""

    ensemble: PathEnsemble
    environment: EnvironmentRealization
    beta: float
    hamiltonian: np.ndarray  # (n_paths, n_steps + 1), hamiltonian[:, 0] == 0

    @property
    def q0(self) -> float:
        return self.environment.q0

    def with_beta(self, beta: float) -> "PolymerRun":
        """Same paths and environment at a different temperature (H is
        beta-independent, so this is free)."""
        if beta < 0:
            raise ValueError("beta must be >= 0")
        return dataclasses.replace(self, beta=float(beta))


def accumulate_hamiltonian(
    ensemble: PathEnsemble, env: EnvironmentRealization, beta: float = 1.0
) -> PolymerRun:
    """Accumulate H along every replica against one environment realization.

    The field increment for step i is evaluated at the replicas' left-endpoint
    positions, jointly across replicas.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if ensemble.n_steps != env.n_steps or not math.isclose(
        ensemble.dt, env.dt, rel_tol=1e-12
    ):
        raise GridMismatchError(
            f"ensemble grid ({ensemble.n_steps}, {ensemble.dt}) != "
            f"environment grid ({env.n_steps}, {env.dt})"
        )
    if ensemble.dim != env.kernel.dim:
        raise GridMismatchError("ensemble and environment disagree on the spatial dimension")

    n, t = ensemble.n_paths, ensemble.n_steps
    neg_h_increments = np.empty((n, t))
    if env.mode == MODE_SPECTRAL:
        for i0 in range(0, t, _STEP_BLOCK):
            i1 = min(i0 + _STEP_BLOCK, t)
            block = ensemble.positions[:, i0:i1, :]
            neg_h_increments[:, i0:i1] = spectral_increment_block(env, i0, block)
    else:
        for i in range(t):
            neg_h_increments[:, i] = increments_at(env, i, ensemble.positions[:, i, :])

    hamiltonian = np.empty((n, t + 1))
    hamiltonian[:, 0] = 0.0
    np.cumsum(-neg_h_increments, axis=1, out=hamiltonian[:, 1:])
    hamiltonian.setflags(write=False)
    return PolymerRun(ensemble=ensemble, environment=env, beta=float(beta), hamiltonian=hamiltonian)


class PartitionValue(NamedTuple):
    value: float
    log: float


def _check_t_index(run: PolymerRun, t_index: int, minimum: int = 0):
    if not minimum <= t_index <= run.ensemble.n_steps:
        raise ValueError(f"t_index {t_index} out of range [{minimum}, {run.ensemble.n_steps}]")


def partition_estimate(run: PolymerRun, t_index: int) -> PartitionValue:
    """Z at grid index t_index: the replica average of exp(-beta * H).

    Computed max-shifted (log-sum-exp), with the shifted exponentials summed
    by exact compensated summation in replica-index order.  Returns the value
    and its log.
    """
    _check_t_index(run, t_index)
    energies = -run.beta * run.hamiltonian[:, t_index]
    shift = float(np.max(energies))
    total = math.fsum(np.exp(energies - shift))
    log_z = shift + math.log(total / run.ensemble.n_paths)
    return PartitionValue(value=math.exp(log_z), log=log_z)


def normalized_partition(run: PolymerRun, t_index: int) -> PartitionValue:
    """W at grid index t_index: Z discounted by its annealed mean
    exp(beta^2 Q(0) t / 2).  W starts at 1 and its mean stays 1."""
    z = partition_estimate(run, t_index)
    t = t_index * run.ensemble.dt
    log_w = z.log - 0.5 * run.beta**2 * run.q0 * t
    return PartitionValue(value=math.exp(log_w), log=log_w)


def _shifted_weights(run: PolymerRun, t_index: int) -> np.ndarray:
    energies = -run.beta * run.hamiltonian[:, t_index]
    return np.exp(energies - np.max(energies))


def gibbs_pair_average(run: PolymerRun, t_index: int, f: Callable) -> float:
    """Two-replica Gibbs average of a pair observable at grid index t_index.

    ``f`` receives the two replica path blocks with broadcastable shapes
    (N, 1, n_steps + 1, dim) and (1, N, n_steps + 1, dim) and must return the
    (N, N) matrix of pair values.  The diagonal j == k is excluded: replicas
    are independent configurations, and including it would inject an O(1/N)
    bias.
    """
    n = run.ensemble.n_paths
    if n < 2:
        raise ValueError("pair averages need at least 2 replicas")
    _check_t_index(run, t_index)
    pos = run.ensemble.positions
    values = np.asarray(f(pos[:, None, :, :], pos[None, :, :, :]), dtype=float)
    if values.shape != (n, n):
        raise ValueError(f"pair observable must return shape ({n}, {n})")
    u = _shifted_weights(run, t_index)
    # identical reduction structure for numerator and denominator, so f == 1
    # yields exactly 1.0
    pair_w = np.outer(u, u)
    weighted = pair_w * values
    num = float(np.sum(weighted)) - float(np.sum(np.diagonal(weighted)))
    denom = float(np.sum(pair_w)) - float(np.sum(np.diagonal(pair_w)))
    if denom <= 0.0 or not np.isfinite(denom):
        raise WeightDegeneracyError(
            f"Gibbs weights at t_index={t_index} collapsed onto a single replica"
        )
    return num / denom


def _pair_kernel_series(run: PolymerRun, n_terms: int) -> np.ndarray:
    """<Q(w1_s - w2_s)>_s for grid indices s = 0 .. n_terms - 1.

    Step-blocked O(N^2) pair statistics.  The (S, N, N) kernel matrices and
    their matvecs run in float32 (the error sits ~5 digits below Monte Carlo
    noise); the weight reductions that suffer cancellation stay in float64.
    Reductions are in fixed index order.
    """
    ens = run.ensemble
    n = ens.n_paths
    kernel = run.environment.kernel
    q0 = run.q0
    out = np.empty(n_terms)
    for i0 in range(0, n_terms, _STEP_BLOCK):
        i1 = min(i0 + _STEP_BLOCK, n_terms)
        pos = ens.positions[:, i0:i1, :]  # (N, S, d)
        x = np.ascontiguousarray(pos[:, :, 0].T, dtype=np.float32)  # (S, N)
        diff = x[:, :, None] - x[:, None, :]
        r2 = np.square(diff, out=diff)
        for axis in range(1, ens.dim):
            x = np.ascontiguousarray(pos[:, :, axis].T, dtype=np.float32)
            d = x[:, :, None] - x[:, None, :]
            r2 += np.square(d, out=d)
        q_mat = eval_kernel_r2(kernel, r2)  # (S, N, N) float32
        energies = -run.beta * run.hamiltonian[:, i0:i1]  # (N, S)
        w = np.exp(energies - np.max(energies, axis=0)).T  # (S, N) float64
        w_sum = w.sum(axis=1)
        w_sq = np.einsum("sn,sn->s", w, w)
        denom = w_sum * w_sum - w_sq
        if np.any(denom <= 0.0) or not np.all(np.isfinite(denom)):
            bad = i0 + int(np.argmax(~((denom > 0) & np.isfinite(denom))))
            raise WeightDegeneracyError(
                f"Gibbs weights at grid index {bad} collapsed onto a single replica"
            )
        qw = np.matmul(q_mat, w.astype(np.float32)[:, :, None])[:, :, 0]  # (S, N)
        num = np.einsum("sn,sn->s", w, qw.astype(np.float64)) - q0 * w_sq
        out[i0:i1] = num / denom
    return out


def overlap_profile(run: PolymerRun, t_indices: Sequence[int]) -> np.ndarray:
    """Running overlap (1/t) * sum_{i < t_index} dt * <Q(w1 - w2)>_i evaluated
    at several grid indices in one pass over the grid."""
    indices = [int(i) for i in t_indices]
    for i in indices:
        _check_t_index(run, i, minimum=1)
    series = _pair_kernel_series(run, max(indices))
    partial = np.concatenate([[0.0], np.cumsum(series)])
    dt = run.ensemble.dt
    return np.array([partial[i] * dt / (i * dt) for i in indices])


def overlap_estimate(run: PolymerRun, t_index: int) -> float:
    """Time-averaged replica overlap up to t_index: the left-rule integral of
    the pair Gibbs average of Q(w1_s - w2_s), normalized by t.  The weights
    inside the integral are the time-s weights.  For nonnegative kernels the
    value lies in [0, Q(0)]."""
    return float(overlap_profile(run, [t_index])[0])


class MomentEstimate(NamedTuple):
    value: float
    std_error: float


def fractional_moment(runs: Sequence[PolymerRun], theta: float, t_index: int) -> MomentEstimate:
    """Environment average of W^theta at a grid index, with standard error
    across environments."""
    if len(runs) < 2:
        raise ValueError("need at least 2 environments for a standard error")
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    vals = np.array([math.exp(theta * normalized_partition(r, t_index).log) for r in runs])
    return MomentEstimate(
        value=float(np.mean(vals)),
        std_error=float(np.std(vals, ddof=1) / math.sqrt(len(vals))),
    )


def log_partition_series(run: PolymerRun):
    """Per-environment free-energy trajectory [(t_i, log Z_{t_i} / t_i)] over
    grid indices i >= 1."""
    dt = run.ensemble.dt
    return [
        (i * dt, partition_estimate(run, i).log / (i * dt))
        for i in range(1, run.ensemble.n_steps + 1)
    ]
