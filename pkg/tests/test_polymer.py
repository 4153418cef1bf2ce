import math

import numpy as np
import pytest

from polymerlab import (
    MODE_EXACT,
    MODE_SPECTRAL,
    accumulate_hamiltonian,
    cauchy_kernel,
    eval_kernel,
    fractional_moment,
    gaussian_kernel,
    gibbs_pair_average,
    log_partition_series,
    make_environment,
    normalized_partition,
    overlap_estimate,
    partition_estimate,
    sample_paths,
)
from polymerlab.errors import GridMismatchError, WeightDegeneracyError
from polymerlab.polymer import PathEnsemble, PolymerRun, overlap_profile
from polymerlab.seeding import PURPOSE_ENVIRONMENT, PURPOSE_PATHS, derive_seed, stream

GAUSS = gaussian_kernel()


def make_run(seed, n_paths=32, n_steps=100, dt=0.01, kernel=GAUSS, beta=0.5, mode=MODE_SPECTRAL,
             k_features=64):
    rng = stream(seed, PURPOSE_PATHS, 0)
    ens = sample_paths(n_paths, n_steps, dt, kernel.dim, 0.0, rng=rng)
    env = make_environment(kernel, mode, n_steps, dt, k_features=k_features,
                           seed=derive_seed(seed, PURPOSE_ENVIRONMENT, 0))
    return accumulate_hamiltonian(ens, env, beta=beta)


def frozen_ensemble(positions, dt=0.01):
    positions = np.asarray(positions, dtype=float)
    n, t1, d = positions.shape
    return PathEnsemble(n_paths=n, n_steps=t1 - 1, dt=dt, dim=d,
                        x0=positions[0, 0].copy(), positions=positions)


# --- path sampling -----------------------------------------------------------


def test_paths_zero_steps_constant():
    ens = sample_paths(5, 0, 0.01, 2, [1.0, -2.0], rng=stream(0, 1, 0))
    assert ens.positions.shape == (5, 1, 2)
    assert np.all(ens.positions == [1.0, -2.0])


def test_paths_start_at_x0():
    ens = sample_paths(7, 3, 0.1, 1, 0.5, rng=stream(1, 1, 0))
    assert np.all(ens.positions[:, 0, 0] == 0.5)


def test_paths_brownian_scaling():
    n = 100_000
    ens = sample_paths(n, 100, 0.01, 1, 2.0, rng=stream(2, 1, 0))
    disp = ens.positions[:, -1, 0] - 2.0
    est = float(np.mean(disp * disp))
    se = float(np.std(disp * disp, ddof=1) / math.sqrt(n))
    assert abs(est - 1.0) <= 3.0 * se
    mean = float(np.mean(ens.positions[:, -1, 0]))
    assert abs(mean - 2.0) <= 3.0 * np.std(disp) / math.sqrt(n)


def test_paths_consume_stream_replica_major():
    ens = sample_paths(2, 3, 0.04, 1, 0.0, rng=stream(9, 1, 4))
    raw = stream(9, 1, 4).standard_normal((2, 3, 1)) * math.sqrt(0.04)
    expected = np.cumsum(raw, axis=1)
    assert np.allclose(ens.positions[:, 1:, :], expected, rtol=0, atol=0)


def test_paths_validation():
    with pytest.raises(ValueError):
        sample_paths(0, 3, 0.01, 1, 0.0, rng=stream(0, 1, 0))
    with pytest.raises(ValueError):
        sample_paths(2, 3, -0.01, 1, 0.0, rng=stream(0, 1, 0))


# --- Hamiltonian accumulation ------------------------------------------------


@pytest.mark.parametrize("mode,kf", [(MODE_EXACT, None), (MODE_SPECTRAL, 32)])
def test_identical_trajectories_identical_hamiltonians(mode, kf):
    rng = stream(3, 1, 0)
    base = sample_paths(1, 50, 0.01, 1, 0.0, rng=rng)
    doubled = frozen_ensemble(np.repeat(base.positions, 2, axis=0))
    env = make_environment(GAUSS, mode, 50, 0.01, k_features=kf, seed=4)
    run = accumulate_hamiltonian(doubled, env)
    assert np.array_equal(run.hamiltonian[0], run.hamiltonian[1])


def test_hamiltonian_starts_at_zero():
    run = make_run(5)
    assert np.all(run.hamiltonian[:, 0] == 0.0)


def test_grid_mismatch_rejected():
    ens = sample_paths(2, 10, 0.01, 1, 0.0, rng=stream(0, 1, 0))
    env = make_environment(GAUSS, MODE_SPECTRAL, 11, 0.01, k_features=8, seed=0)
    with pytest.raises(GridMismatchError):
        accumulate_hamiltonian(ens, env)
    env = make_environment(gaussian_kernel(dim=2), MODE_SPECTRAL, 10, 0.01, k_features=8, seed=0)
    with pytest.raises(GridMismatchError):
        accumulate_hamiltonian(ens, env)


@pytest.mark.parametrize("mode,kf", [(MODE_EXACT, None), (MODE_SPECTRAL, 64)])
def test_single_step_energy_is_gaussian_with_grid_variance(mode, kf):
    # a frozen path over many steps: increments of -H are iid N(0, dt Q(0))
    n_steps = 30_000
    ens = frozen_ensemble(np.zeros((1, n_steps + 1, 1)))
    env = make_environment(GAUSS, mode, n_steps, 0.01, k_features=kf, seed=8)
    run = accumulate_hamiltonian(ens, env)
    incr = np.diff(run.hamiltonian[0])
    est = float(np.mean(incr * incr))
    se = float(np.std(incr * incr, ddof=1) / math.sqrt(incr.size))
    assert abs(est - 0.01) <= 3.0 * se
    # and the total variance accumulates to t Q(0) by independence
    assert abs(run.hamiltonian[0, -1]) < 6.0 * math.sqrt(n_steps * 0.01)


def test_distant_frozen_paths_decorrelated():
    # two paths pinned 10 length scales apart: Q(10) ~ e^-50, so energies are
    # independent to within Monte Carlo resolution
    n_steps = 30_000
    pos = np.zeros((2, n_steps + 1, 1))
    pos[1] = 10.0
    env = make_environment(GAUSS, MODE_EXACT, n_steps, 0.01, seed=13)
    run = accumulate_hamiltonian(frozen_ensemble(pos), env)
    a = np.diff(run.hamiltonian[0])
    b = np.diff(run.hamiltonian[1])
    prod = a * b
    est = float(np.mean(prod))
    se = float(np.std(prod, ddof=1) / math.sqrt(prod.size))
    assert abs(est) <= 3.0 * se


# --- partition function ------------------------------------------------------


def test_partition_trivials():
    run = make_run(6)
    assert partition_estimate(run, 0) == (1.0, 0.0)
    assert partition_estimate(run.with_beta(0.0), 100) == (1.0, 0.0)
    assert normalized_partition(run.with_beta(0.0), 100) == (1.0, 0.0)
    assert normalized_partition(run, 0) == (1.0, 0.0)


def test_partition_value_matches_log():
    run = make_run(7, beta=1.0)
    pv = partition_estimate(run, 100)
    assert pv.value > 0
    assert math.isclose(math.log(pv.value), pv.log, rel_tol=1e-12)


def test_pooled_annealed_mean():
    # mean over environments and paths of exp(-beta H_t) vs the closed form
    beta, t = 0.5, 1.0
    n_envs, n_paths = 500, 200
    zbar = np.empty(n_envs)
    for e in range(n_envs):
        rng = stream(17, PURPOSE_PATHS, e)
        ens = sample_paths(n_paths, 100, 0.01, 1, 0.0, rng=rng)
        env = make_environment(GAUSS, MODE_SPECTRAL, 100, 0.01, k_features=32,
                               seed=derive_seed(17, PURPOSE_ENVIRONMENT, e))
        run = accumulate_hamiltonian(ens, env, beta=beta)
        zbar[e] = partition_estimate(run, 100).value
    est = float(np.mean(zbar))
    se = float(np.std(zbar, ddof=1) / math.sqrt(n_envs))
    assert abs(est - math.exp(beta**2 * t / 2)) <= 3.0 * se


def test_martingale_mean_is_one_at_three_times():
    n_envs = 200
    w = np.empty((n_envs, 3))
    for e in range(n_envs):
        rng = stream(19, PURPOSE_PATHS, e)
        ens = sample_paths(64, 400, 0.01, 1, 0.0, rng=rng)
        env = make_environment(GAUSS, MODE_SPECTRAL, 400, 0.01, k_features=64,
                               seed=derive_seed(19, PURPOSE_ENVIRONMENT, e))
        run = accumulate_hamiltonian(ens, env, beta=0.5)
        w[e] = [normalized_partition(run, i).value for i in (100, 200, 400)]
    for c in range(3):
        est = float(np.mean(w[:, c]))
        se = float(np.std(w[:, c], ddof=1) / math.sqrt(n_envs))
        assert abs(est - 1.0) <= 3.0 * se, c


# --- Gibbs pair averages and overlap -----------------------------------------


def test_pair_average_normalization_exact():
    run = make_run(23, n_paths=16, beta=0.7)
    ones = lambda p1, p2: np.ones((16, 16))
    assert gibbs_pair_average(run, 50, ones) == 1.0


def test_pair_average_requires_two_replicas():
    rng = stream(0, 1, 0)
    ens = sample_paths(1, 10, 0.01, 1, 0.0, rng=rng)
    env = make_environment(GAUSS, MODE_SPECTRAL, 10, 0.01, k_features=8, seed=0)
    run = accumulate_hamiltonian(ens, env)
    with pytest.raises(ValueError):
        gibbs_pair_average(run, 5, lambda a, b: np.ones((1, 1)))


def test_pair_average_against_brute_force():
    # diagonal-excluded weighted pair average recomputed with explicit loops
    run = make_run(29, n_paths=6, n_steps=20, beta=0.9)
    idx = 20

    def f(p1, p2):
        return np.sum((p1[..., idx, :] - p2[..., idx, :]) ** 2, axis=-1)

    got = gibbs_pair_average(run, idx, f)
    u = np.exp(-run.beta * run.hamiltonian[:, idx])
    num = den = 0.0
    pos = run.ensemble.positions
    for j in range(6):
        for k in range(6):
            if j == k:
                continue
            num += u[j] * u[k] * float(np.sum((pos[j, idx] - pos[k, idx]) ** 2))
            den += u[j] * u[k]
    assert math.isclose(got, num / den, rel_tol=1e-10)


def test_pair_average_uniform_at_beta_zero():
    run = make_run(31, n_paths=8, n_steps=10, beta=0.0)
    f = lambda p1, p2: np.sum((p1[..., 10, :] - p2[..., 10, :]) ** 2, axis=-1)
    got = gibbs_pair_average(run, 10, f)
    pos = run.ensemble.positions[:, 10, 0]
    mat = (pos[:, None] - pos[None, :]) ** 2
    expected = (mat.sum() - np.trace(mat)) / (8 * 7)
    assert math.isclose(got, expected, rel_tol=1e-12)


def test_pair_average_kernel_closed_form():
    # at beta = 0 the pair separation at time s is N(0, 2s):
    # E[Q(w1_s - w2_s)] = 1 / sqrt(1 + 2s) = 1/3 at s = 4
    idx = 400
    vals = []
    for b in range(10):
        run = make_run(1000 + b, n_paths=128, n_steps=400, beta=0.0, k_features=8)
        f = lambda p1, p2: eval_kernel(GAUSS, p1[..., idx, :] - p2[..., idx, :])
        vals.append(gibbs_pair_average(run, idx, f))
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    assert abs(est - 1.0 / 3.0) <= 3.0 * se


def test_weight_degeneracy_signaled():
    pos = np.zeros((2, 3, 1))
    ens = frozen_ensemble(pos)
    h = np.array([[0.0, 0.0, 0.0], [0.0, 900.0, 900.0]])
    env = make_environment(GAUSS, MODE_EXACT, 2, 0.01, seed=0)
    run = PolymerRun(ensemble=ens, environment=env, beta=1.0, hamiltonian=h)
    with pytest.raises(WeightDegeneracyError):
        gibbs_pair_average(run, 1, lambda a, b: np.ones((2, 2)))
    with pytest.raises(WeightDegeneracyError):
        overlap_estimate(run, 2)


def test_overlap_first_step_is_q0():
    # replicas coincide at the start, so the one-step overlap is exactly Q(0)
    run = make_run(37, n_paths=8, beta=0.8)
    assert math.isclose(overlap_estimate(run, 1), GAUSS.sigma2, rel_tol=1e-9)


def test_overlap_within_kernel_range():
    run = make_run(41, n_paths=32, n_steps=200, beta=1.0)
    for idx in (1, 50, 200):
        v = overlap_estimate(run, idx)
        assert 0.0 <= v <= GAUSS.sigma2 + 1e-12


def test_overlap_closed_form_at_beta_zero():
    # (1/t) integral of 1/sqrt(1+2s) over [0,4] = (sqrt(9)-1)/4 = 0.5
    vals = []
    for b in range(12):
        run = make_run(2000 + b, n_paths=64, n_steps=400, beta=0.0, k_features=8)
        vals.append(overlap_estimate(run, 400))
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    assert abs(est - 0.5) <= 3.0 * se + 1e-3  # left-rule grid bias ~8e-4


def test_overlap_replica_permutation_invariant():
    run = make_run(43, n_paths=16, n_steps=50, beta=0.9)
    perm = np.random.default_rng(0).permutation(16)
    shuffled = PolymerRun(
        ensemble=frozen_ensemble(run.ensemble.positions[perm]),
        environment=run.environment,
        beta=run.beta,
        hamiltonian=run.hamiltonian[perm],
    )
    a = overlap_estimate(run, 50)
    b = overlap_estimate(shuffled, 50)
    # invariant up to the single-precision reduction order of the pair matvec
    assert math.isclose(a, b, rel_tol=1e-6)


def test_overlap_profile_matches_pointwise_estimates():
    run = make_run(47, n_paths=16, n_steps=80, beta=0.6)
    profile = overlap_profile(run, [20, 40, 80])
    singles = [overlap_estimate(run, i) for i in (20, 40, 80)]
    assert np.allclose(profile, singles, rtol=1e-12)


# --- fractional moments and free-energy series --------------------------------


def test_fractional_moment_trivials():
    runs = [make_run(s, beta=0.0) for s in (51, 52, 53)]
    for theta in (0.25, 0.5, 1.0):
        est = fractional_moment(runs, theta, 100)
        assert est.value == 1.0 and est.std_error == 0.0
    with pytest.raises(ValueError):
        fractional_moment(runs[:1], 0.5, 100)
    with pytest.raises(ValueError):
        fractional_moment(runs, 1.5, 100)


def test_fractional_moment_theta_one_martingale():
    runs = [make_run(100 + s, n_paths=64, n_steps=100, beta=0.5) for s in range(60)]
    est = fractional_moment(runs, 1.0, 100)
    assert abs(est.value - 1.0) <= 3.0 * est.std_error


def test_fractional_moment_decreasing_in_strong_disorder():
    kernel = cauchy_kernel(sigma2=1.0, exponent_lambda=0.4, dim=1)
    w1, w4 = [], []
    for e in range(50):
        rng = stream(202, PURPOSE_PATHS, e)
        ens = sample_paths(64, 400, 0.01, 1, 0.0, rng=rng)
        env = make_environment(kernel, MODE_SPECTRAL, 400, 0.01, k_features=128,
                               seed=derive_seed(202, PURPOSE_ENVIRONMENT, e))
        run = accumulate_hamiltonian(ens, env, beta=1.0)
        w1.append(math.exp(0.5 * normalized_partition(run, 100).log))
        w4.append(math.exp(0.5 * normalized_partition(run, 400).log))
    drop = np.asarray(w1) - np.asarray(w4)
    est = float(np.mean(drop))
    se = float(np.std(drop, ddof=1) / math.sqrt(drop.size))
    assert est > 3.0 * se


def test_log_partition_series_zero_at_beta_zero():
    run = make_run(57, beta=0.0)
    series = log_partition_series(run)
    assert all(v == 0.0 for _, v in series)
    assert [t for t, _ in series][:3] == [0.01, 0.02, 0.03]


def test_log_partition_series_bounded_by_extreme_energy():
    run = make_run(59, beta=1.0)
    for i, (t, v) in enumerate(log_partition_series(run), start=1):
        cap = -run.beta * float(np.min(run.hamiltonian[:, i])) / t
        assert v <= cap + 1e-9


def test_log_partition_series_below_annealed_rate():
    vals = []
    for e in range(60):
        run = make_run(300 + e, n_paths=64, n_steps=400, beta=0.5, k_features=64)
        vals.append(partition_estimate(run, 400).log / 4.0)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    assert est <= 0.5 * 0.25 * 1.0 + 3.0 * se
