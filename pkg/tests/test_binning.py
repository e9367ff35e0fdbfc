import numpy as np
import pytest

from cftomo.binning import (
    MomentEstimates,
    UnidentifiableError,
    crude_tail_scale,
    equal_bins,
    estimate_link_moments,
    refine,
    sd_floor,
    varying_bins,
)
from cftomo.cf_engine import MeasurementSet, sample_frequencies
from cftomo.delay_models import Exponential, Gamma, LinkMixture, MixtureSpec, sample
from cftomo.estimators import EstimatorConfig, fit
from cftomo.topology import RoutingMatrix


def moments(mean, var):
    mean, var = np.atleast_1d(mean).astype(float), np.atleast_1d(var).astype(float)
    return MomentEstimates(mean, var, np.zeros(len(var), bool))


def test_two_leaf_population_moments(two_leaf):
    # Var(Y1) = 1 + 2, Var(Y2) = 1 + 3, Cov = Var(X1)
    cov = np.array([[3.0, 1.0], [1.0, 4.0]])
    m = estimate_link_moments(A=two_leaf, cov=cov, mean=np.array([3.0, 4.0]))
    np.testing.assert_allclose(m.var, [1.0, 2.0, 3.0], atol=1e-10)
    assert not m.clamped.any()


def test_population_moments_four_leaf(four_leaf, rng):
    var = rng.uniform(0.5, 5.0, 7)
    a = four_leaf.entries.astype(float)
    cov = a @ np.diag(var) @ a.T
    np.testing.assert_allclose(estimate_link_moments(A=four_leaf, cov=cov, mean=a @ np.ones(7)).var, var, atol=1e-10)


def test_deterministic_links_have_zero_variance(two_leaf):
    Y = np.tile([3.0, 4.0], (20, 1))
    m = estimate_link_moments(MeasurementSet(Y), two_leaf)
    np.testing.assert_allclose(m.var, 0.0, atol=1e-12)


def test_sample_moments_homogeneous_four_leaf(four_leaf):
    errs = []
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        X = np.column_stack([sample(Exponential(2.0), rng, 2000) for _ in range(7)])
        m = estimate_link_moments(MeasurementSet(X @ four_leaf.entries.T), four_leaf)
        errs.append(np.abs(m.var - 4.0) / 4.0)
    assert np.all(np.median(errs, axis=0) <= 0.25)


def test_serial_links_unidentifiable():
    A = RoutingMatrix(np.array([[1, 1]]), (1, 2))
    with pytest.raises(UnidentifiableError, match=r"\[0, 1\]"):
        estimate_link_moments(A=A, cov=np.array([[2.0]]), mean=np.array([1.0]))


def test_negative_variance_clamped(two_leaf):
    cov = np.array([[1.0, 2.0], [2.0, 5.0]])  # implies Var(X2) = -1
    m = estimate_link_moments(A=two_leaf, cov=cov, mean=np.zeros(2))
    assert m.var[1] == 0.0 and m.clamped[1]


def test_equal_bins_example():
    spec = equal_bins(moments(3.0, 1.0), 0, 12)
    np.testing.assert_allclose(spec.bin_endpoints, np.arange(13) * 0.5)
    assert spec.tail_scale == 1.0 and not spec.include_zero_atom


def test_equal_bins_span_clamped_by_sd():
    spec = equal_bins(moments(-10.0, 4.0), 0, 4)
    assert spec.bin_endpoints[-1] == pytest.approx(2.0)


def test_equal_bins_degenerate():
    with pytest.warns(RuntimeWarning):
        spec = equal_bins(moments(0.0, 0.0), 0, 12)
    assert spec.n_bins == 1 and spec.tail_scale == 1e-6


def test_equal_bins_floor():
    spec = equal_bins(moments(0.0, 0.0), 0, 4, min_sd=2.0)
    assert spec.bin_endpoints[-1] == pytest.approx(6.0) and spec.tail_scale == 2.0


def test_equal_bins_scale_with_heterogeneity():
    m = moments([1.0, 20.0], [1.0, 400.0])
    w = [np.diff(equal_bins(m, j, 12).bin_endpoints)[0] for j in range(2)]
    assert w[1] / w[0] == pytest.approx(20.0)


def test_crude_tail_scale():
    assert crude_tail_scale(moments(0.0, 4.0), 0) == 2.0
    assert crude_tail_scale(moments(0.0, 0.0), 0) == 1e-6


def test_varying_bins_uniform_pilot():
    pilot = LinkMixture(MixtureSpec.body(0, (0.0, 1.0), None), [1.0])
    spec = varying_bins(pilot, 0, 12, tail_scale=1.0)
    np.testing.assert_allclose(spec.bin_endpoints, np.arange(13) / 13)


def test_varying_bins_exponential_pilot():
    spec = varying_bins(Exponential(1.0), 2, 12)
    want = np.concatenate([[0.0], -np.log(1 - np.arange(1, 13) / 13)])
    np.testing.assert_allclose(spec.bin_endpoints, want, rtol=1e-12)
    assert spec.link == 2


def test_varying_bins_equal_pilot_masses():
    pilot = Gamma(2.0, 3.0)
    spec = varying_bins(pilot, 0, 12)
    np.testing.assert_allclose(np.diff(pilot.cdf(np.array(spec.bin_endpoints))), 1 / 13, atol=1e-12)


def test_varying_bins_zero_atom_uses_positive_part():
    spec0 = MixtureSpec.body(0, (0.0, 1.0, 2.0), 1.0, zero_atom=True)
    pilot = LinkMixture(spec0, [0.6, 0.2, 0.1, 0.1])
    spec = varying_bins(pilot, 0, 4)
    assert spec.include_zero_atom
    ends = np.array(spec.bin_endpoints)
    assert np.all(np.diff(ends) > 0) and ends[1] > 0
    np.testing.assert_allclose(np.diff(pilot.cdf(ends[1:])), 0.4 / 5, atol=1e-12)


def test_varying_bins_dedup_on_point_mass():
    spec0 = MixtureSpec.body(0, (0.0, 1.0), 1.0, zero_atom=True)
    spec = varying_bins(LinkMixture(spec0, [1.0, 0.0, 0.0]), 0, 6, zero_atom=False)
    assert np.all(np.diff(spec.bin_endpoints) > 0)


def test_varying_bins_fixed_point():
    spec = varying_bins(Exponential(1.0), 0, 12)
    fitted = LinkMixture(spec, np.full(13, 1 / 13))
    again = varying_bins(fitted, 0, 12)
    span = spec.bin_endpoints[-1]
    assert np.abs(np.subtract(again.bin_endpoints, spec.bin_endpoints)).max() < 0.1 * span
    np.testing.assert_allclose(again.bin_endpoints, spec.bin_endpoints, atol=1e-9)


def two_leaf_data(two_leaf, N=1500, seed=3):
    rng = np.random.default_rng(seed)
    X = np.column_stack([sample(Exponential(m), rng, N) for m in (1.0, 2.0, 4.0)])
    return MeasurementSet(X @ two_leaf.entries.T)


def test_refine_zero_rounds_is_equal_bin_fit(two_leaf):
    ms = two_leaf_data(two_leaf)
    freqs = sample_frequencies(2, 300, 5.0, ms.sds, np.random.default_rng(0))
    out = refine(ms, two_leaf, n_bins=6, rounds=0, freqs=freqs)
    m = estimate_link_moments(ms, two_leaf)
    specs = [equal_bins(m, j, 6, min_sd=sd_floor(ms)) for j in range(3)]
    direct = fit(ms, two_leaf, specs, freqs=freqs)
    assert out.specs == specs and len(out.history) == 1
    for a, b in zip(out.result.weights, direct.weights):
        np.testing.assert_array_equal(a, b)


def test_refine_rounds_reuse_frequencies(two_leaf):
    ms = two_leaf_data(two_leaf)
    out = refine(ms, two_leaf, n_bins=6, rounds=2, config=EstimatorConfig(k=300), rng=np.random.default_rng(1))
    assert len(out.history) == 3
    assert all(h.freqs is out.history[0].freqs for h in out.history)
    for spec, prev in zip(out.specs, out.history[1].links):
        assert spec == varying_bins(prev, spec.link, 6)
