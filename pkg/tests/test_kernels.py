import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from polymerlab import (
    CovarianceKernel,
    cauchy_kernel,
    eval_kernel,
    gaussian_kernel,
    radial_tail_integral,
    sample_frequency,
    user_radial_kernel,
)
from polymerlab.errors import DimensionMismatchError, UnsupportedFamilyError
from polymerlab.kernels import log_radial_profile, radial_profile
from polymerlab.seeding import stream


def test_eval_gaussian_origin_is_sigma2():
    k = gaussian_kernel(sigma2=2.0, length_scale=1.0, dim=1)
    assert eval_kernel(k, [0.0]) == 2.0


def test_eval_cauchy_closed_form():
    k = cauchy_kernel(sigma2=1.0, exponent_lambda=0.4, dim=1)
    assert math.isclose(eval_kernel(k, [3.0]), (1.0 + 9.0) ** -0.4, rel_tol=1e-12)


def test_eval_gaussian_closed_form():
    k = gaussian_kernel(sigma2=1.0, length_scale=1.0, dim=1)
    assert math.isclose(eval_kernel(k, [1.0]), math.exp(-0.5), rel_tol=1e-12)


def test_eval_dimension_mismatch():
    k = gaussian_kernel(dim=2)
    with pytest.raises(DimensionMismatchError):
        eval_kernel(k, [1.0, 2.0, 3.0])


def test_eval_rejects_non_finite():
    k = gaussian_kernel()
    with pytest.raises(ValueError):
        eval_kernel(k, [np.inf])


def test_eval_batched_shape():
    k = gaussian_kernel(dim=2)
    x = np.zeros((4, 5, 2))
    out = eval_kernel(k, x)
    assert out.shape == (4, 5)
    assert np.all(out == k.sigma2)


@settings(max_examples=60, deadline=None)
@given(
    sigma2=st.floats(0.1, 10.0),
    scale=st.floats(0.2, 5.0),
    lam=st.floats(0.05, 4.0),
    coords=st.lists(st.floats(-20.0, 20.0), min_size=1, max_size=3),
)
def test_bounded_positive_and_symmetric(sigma2, scale, lam, coords):
    x = np.asarray(coords)
    d = len(coords)
    # keep the scaled radius where exp does not underflow float64
    assume(float(np.sum(np.square(x / scale))) < 1000.0)
    for k in (
        gaussian_kernel(sigma2=sigma2, length_scale=scale, dim=d),
        cauchy_kernel(sigma2=sigma2, exponent_lambda=lam, dim=d),
    ):
        v = eval_kernel(k, x)
        assert 0.0 < v <= sigma2
        assert eval_kernel(k, -x) == v


def test_parameter_validation():
    with pytest.raises(ValueError):
        gaussian_kernel(sigma2=0.0)
    with pytest.raises(ValueError):
        gaussian_kernel(length_scale=-1.0)
    with pytest.raises(ValueError):
        cauchy_kernel(exponent_lambda=0.0)
    with pytest.raises(UnsupportedFamilyError):
        CovarianceKernel("triangle")


def test_user_radial_profile_checked_at_origin():
    with pytest.raises(ValueError):
        user_radial_kernel(lambda r: 0.5 * np.exp(-r), sigma2=1.0)
    k = user_radial_kernel(lambda r: np.exp(-np.asarray(r)), sigma2=1.0, dim=1)
    assert math.isclose(eval_kernel(k, [2.0]), math.exp(-2.0), rel_tol=1e-12)


def test_user_radial_has_no_spectral_sampler():
    k = user_radial_kernel(lambda r: np.exp(-np.asarray(r)), sigma2=1.0)
    with pytest.raises(UnsupportedFamilyError):
        sample_frequency(k, stream(0, 1, 0))


def test_sample_frequency_zero_probe_exact():
    k = gaussian_kernel()
    freqs = sample_frequency(k, stream(3, 3, 0), size=100)
    assert np.mean(np.cos(freqs @ np.zeros(1))) == 1.0


@pytest.mark.parametrize(
    "kernel,x",
    [
        (gaussian_kernel(length_scale=1.0, dim=1), [1.0]),
        (cauchy_kernel(exponent_lambda=0.4, dim=1), [3.0]),
        (gaussian_kernel(length_scale=0.7, dim=3), [0.4, -0.3, 1.1]),
        (cauchy_kernel(exponent_lambda=1.5, dim=2), [0.8, -0.6]),
    ],
)
def test_sample_frequency_reproduces_kernel(kernel, x):
    # the empirical characteristic function of spectral draws is Q(x)/Q(0)
    m = 100_000
    freqs = sample_frequency(kernel, stream(11, 3, 0), size=m)
    cosines = np.cos(freqs @ np.asarray(x))
    est = float(np.mean(cosines))
    se = float(np.std(cosines, ddof=1) / math.sqrt(m))
    target = eval_kernel(kernel, x) / kernel.sigma2
    assert abs(est - target) <= 3.0 * se


def test_spectral_consistency_at_twenty_probes():
    for kernel in (gaussian_kernel(length_scale=1.3), cauchy_kernel(exponent_lambda=0.8)):
        m = 60_000
        freqs = sample_frequency(kernel, stream(17, 3, 0), size=m)
        probes = np.linspace(-4.0, 4.0, 20)
        for x in probes:
            cosines = np.cos(freqs[:, 0] * x)
            est = float(np.mean(cosines))
            se = float(np.std(cosines, ddof=1) / math.sqrt(m))
            target = eval_kernel(kernel, [x]) / kernel.sigma2
            assert abs(est - target) <= 3.0 * se + 1e-12


def test_sample_frequency_shapes():
    k = gaussian_kernel(dim=2)
    one = sample_frequency(k, stream(5, 3, 0))
    many = sample_frequency(k, stream(5, 3, 0), size=7)
    assert one.shape == (2,)
    assert many.shape == (7, 2)
    assert np.array_equal(many[0], one)


def test_radial_tail_integral_gaussian():
    # antiderivative: integral of r exp(-r^2/2) over [0, inf) equals 1
    res = radial_tail_integral(gaussian_kernel(), r_max=100.0, tol=1e-10)
    assert res.verdict == "finite"
    assert abs(res.value - 1.0) < 1e-6


def test_radial_tail_integral_cauchy_integrable():
    # substitution u = 1 + r^2 gives exactly 1/2 on [0, inf)
    res = radial_tail_integral(cauchy_kernel(exponent_lambda=2.0), r_max=200.0, tol=1e-10)
    assert res.verdict == "finite"
    assert abs(res.value - 0.5) < 1e-4


def test_radial_tail_integral_cauchy_divergent():
    # integrand grows like r^0.2 at infinity
    res = radial_tail_integral(cauchy_kernel(exponent_lambda=0.4), r_max=100.0, tol=1e-10)
    assert res.verdict == "divergent"
    assert 0.1 < res.fitted_exponent < 0.3


def test_radial_tail_integral_validates_r_max():
    with pytest.raises(ValueError):
        radial_tail_integral(gaussian_kernel(), r_max=0.0)


def test_log_radial_profile_matches_profile():
    for k in (gaussian_kernel(sigma2=2.0), cauchy_kernel(exponent_lambda=0.7)):
        r = np.linspace(0.0, 5.0, 50)
        assert np.allclose(np.exp(log_radial_profile(k, r)), radial_profile(k, r), rtol=1e-12)
