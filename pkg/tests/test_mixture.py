import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from kernelmix.errors import DegenerateDensityError, ParameterError, ShapeError
from kernelmix.evalkit import GridEval, grid_kl, integrate_density
from kernelmix.kernels import (
    KernelSpec,
    gaussian_grid,
    log_kernel_matrix,
    rectangular_bins,
    von_mises_grid,
    wrap_angle,
)
from kernelmix.mixture import (
    CenterSet,
    MixtureDensity,
    QuantizedDensity,
    density_sample,
    kde_estimate,
    kmn_density,
    kmn_log_density,
    kmn_nll,
    kmn_nll_samples,
    mixture_logpdf_rows,
    network_log_weights,
    quantized_nll,
    quantized_softmax_density,
    select_centers,
)
from kernelmix.ndnet import init_dense_net
from oracles import central_diff, max_rel_error


class TestSelectCenters:
    def test_example(self):
        cs = select_centers([0.0, 0.1, 0.3, 0.35, 0.6], 0.2)
        np.testing.assert_array_equal(cs.centers, [0.0, 0.3, 0.6])

    def test_unsorted_and_duplicates(self):
        cs = select_centers([0.6, 0.0, 0.35, 0.0, 0.3, 0.1], 0.2)
        np.testing.assert_array_equal(cs.centers, [0.0, 0.3, 0.6])

    def test_zero_delta_keeps_unique_values(self):
        assert len(select_centers([1.0, 1.0, 2.0], 0.0)) == 2

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=60), st.floats(0.01, 3))
    def test_spacing_and_coverage(self, values, delta):
        c = select_centers(values, delta).centers
        assert np.all(np.diff(c) >= delta)
        # every value sits within delta of a kept center
        v = np.asarray(values)
        assert np.all(np.abs(v[:, None] - c[None, :]).min(axis=1) < delta + 1e-12)

    def test_circle_seam(self):
        cs = select_centers([-3.1, 0.0, 3.1], 0.2, manifold="circle")
        # 3.1 and -3.1 are 0.083 apart across the seam
        np.testing.assert_allclose(cs.centers, [-3.1, 0.0], atol=1e-15)

    def test_errors(self):
        with pytest.raises(ParameterError):
            select_centers([], 0.1)
        with pytest.raises(ParameterError):
            select_centers([1.0], -0.1)


class TestDensity:
    def test_two_centers(self):
        spec = KernelSpec("gaussian", (1.0,))
        cs = CenterSet(np.array([0.0, 1.0]))
        got = kmn_density([[1.0], [1.0]], cs, spec, 0.5)
        assert got == pytest.approx(stats.norm.pdf(0.5), rel=1e-14)
        assert got == pytest.approx(0.3520653267642995, rel=1e-14)

    def test_weighted_by_hand(self):
        spec = KernelSpec("gaussian", (0.5, 2.0))
        cs = CenterSet(np.array([-1.0, 2.0]))
        w = np.array([[1.0, 0.0], [2.0, 3.0]])
        x = np.array([-1.0, 0.3, 4.0])
        expected = (stats.norm.pdf(x, -1, 0.5) + 2 * stats.norm.pdf(x, 2, 0.5) + 3 * stats.norm.pdf(x, 2, 2.0)) / 6
        np.testing.assert_allclose(kmn_density(w, cs, spec, x), expected, rtol=1e-13)
        np.testing.assert_allclose(kmn_log_density(w, cs, spec, x), np.log(expected), rtol=1e-13)

    @given(st.floats(1e-3, 1e3))
    @settings(max_examples=30)
    def test_scale_invariant(self, scale):
        spec = gaussian_grid()
        cs = CenterSet(np.linspace(-2, 2, 4))
        w = np.arange(1.0, 25.0).reshape(4, 6)
        x = np.linspace(-3, 3, 7)
        np.testing.assert_allclose(kmn_density(w * scale, cs, spec, x), kmn_density(w, cs, spec, x), rtol=1e-12)

    def test_zero_weights(self):
        with pytest.raises(DegenerateDensityError):
            MixtureDensity(CenterSet(np.array([0.0])), KernelSpec("gaussian", (1.0,)), [[0.0]])
        with pytest.raises(DegenerateDensityError, match="sample 1"):
            mixture_logpdf_rows(np.array([[0.0], [-np.inf]]), np.zeros((2, 1)))

    def test_bad_weights(self):
        cs = CenterSet(np.array([0.0, 1.0]))
        spec = KernelSpec("gaussian", (1.0,))
        with pytest.raises(ParameterError):
            MixtureDensity(cs, spec, [[1.0], [-1.0]])
        with pytest.raises(ShapeError):
            MixtureDensity(cs, spec, [1.0, 2.0, 3.0])

    @pytest.mark.parametrize("family", ["gaussian", "von_mises", "rectangular"])
    def test_integrates_to_one(self, rng, family):
        spec = {"gaussian": gaussian_grid(), "von_mises": von_mises_grid(),
                "rectangular": rectangular_bins()}[family]
        lo, hi = (-math.pi, math.pi) if family == "von_mises" else (-5, 5)
        cs = CenterSet(np.sort(rng.uniform(lo, hi, 5)), 0.0, spec.manifold)
        dens = MixtureDensity(cs, spec, rng.uniform(0, 1, (5, spec.n_kernels)))
        a, b = dens.support()
        n = 200001 if family == "von_mises" else 24001
        assert integrate_density(dens, a, b, n) == pytest.approx(1.0, abs=1e-3)

    def test_log_linear_consistent(self, rng):
        spec = gaussian_grid()
        cs = CenterSet(np.array([-1.0, 0.5]))
        w = rng.uniform(0, 1, (2, 6))
        x = rng.normal(size=50)
        np.testing.assert_allclose(np.exp(kmn_log_density(w, cs, spec, x)), kmn_density(w, cs, spec, x), rtol=1e-14)

    def test_far_tail_stays_finite_in_log(self):
        d = MixtureDensity(CenterSet(np.array([0.0])), KernelSpec("gaussian", (0.25,)), [[1.0]])
        assert d.logpdf(100.0) == pytest.approx(stats.norm.logpdf(100.0, 0, 0.25), rel=1e-12)

    def test_mean_and_sd(self):
        d = MixtureDensity(CenterSet(np.array([-1.0, 1.0])), KernelSpec("gaussian", (0.5,)), [[1.0], [1.0]])
        mean, sd = d.mean_and_sd()
        assert mean == pytest.approx(0.0, abs=1e-15)
        assert sd == pytest.approx(math.sqrt(1.25), rel=1e-14)


class TestQuantized:
    def test_softmax_over_width(self):
        edges = np.array([0.0, 1.0, 3.0])
        z = np.array([0.0, math.log(3.0)])
        # softmax = [1/4, 3/4], widths 1 and 2
        assert quantized_softmax_density(z, edges, 0.5) == pytest.approx(0.25)
        assert quantized_softmax_density(z, edges, 2.0) == pytest.approx(0.375)
        assert quantized_softmax_density(z, edges, 3.5) == 0.0
        assert integrate_density(QuantizedDensity(edges, z), 0.0, 3.0, 30001) == pytest.approx(1.0, abs=1e-3)

    def test_softmax_is_rectangular_kmn(self, rng):
        spec = rectangular_bins()
        edges = np.asarray(spec.params)
        mids = 0.5 * (edges[:-1] + edges[1:])
        net = init_dense_net([3, len(mids)], ["exponential"], rng)
        feats = rng.normal(size=(200, 3))
        x = rng.uniform(-6, 6, 200)
        log_w = network_log_weights(net, feats)
        kmn = np.exp(mixture_logpdf_rows(log_w, log_kernel_matrix(spec, x, mids)))
        soft = np.array([quantized_softmax_density(z, edges, xi) for z, xi in zip(log_w, x)])
        np.testing.assert_allclose(kmn, soft, rtol=1e-12, atol=1e-12)

    def test_quantized_nll_gradient(self, rng):
        edges = np.linspace(-2, 2, 9)
        net = init_dense_net([3, 4, 8], ("tanh", "linear"), rng)
        x = rng.uniform(-3, 3, 6)
        feats = rng.normal(size=(6, 3))
        loss, grads = quantized_nll(x, feats, net, edges)
        num = central_diff(lambda: quantized_nll(x, feats, net, edges)[0], net.params)
        assert max_rel_error(grads, num) < 1e-5
        assert loss > 0


def _random_config(rng):
    n_layers = int(rng.integers(1, 4))
    dims = [int(rng.integers(2, 5))] + [int(rng.integers(2, 6)) for _ in range(n_layers - 1)]
    family = ["gaussian", "von_mises"][int(rng.integers(2))]
    n_centers = int(rng.integers(1, 6))
    n_kernels = int(rng.integers(1, 4))
    if family == "gaussian":
        spec = KernelSpec("gaussian", tuple(rng.uniform(0.3, 2.0, n_kernels)))
        centers = np.sort(rng.uniform(-2, 2, n_centers))
        x = rng.normal(size=5)
    else:
        spec = KernelSpec("von_mises", tuple(rng.uniform(0.5, 20.0, n_kernels)))
        centers = np.sort(rng.uniform(-3, 3, n_centers))
        x = rng.uniform(-math.pi, math.pi, 5)
    net = init_dense_net(dims + [n_centers * n_kernels], ("tanh", "rectified_quadratic"), rng)
    for b in net.biases:
        b += 0.5
    return net, CenterSet(centers, 0.0, spec.manifold), spec, x, rng.normal(size=(5, dims[0]))


class TestLoss:
    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_matches_finite_differences(self, seed):
        net, cs, spec, x, feats = _random_config(np.random.default_rng(seed))
        _, grads = kmn_nll(x, feats, net, cs, spec, weight_eps=1e-12)
        num = central_diff(lambda: kmn_nll(x, feats, net, cs, spec, weight_eps=1e-12)[0], net.params, h=1e-5)
        assert max_rel_error(grads, num) < 1e-5

    def test_exponential_head_gradient(self, rng):
        net = init_dense_net([2, 3, 6], ("tanh", "exponential"), rng)
        cs = CenterSet(np.array([-1.0, 1.0]))
        spec = KernelSpec("gaussian", (0.5, 1.0, 2.0))
        x, feats = rng.normal(size=4), rng.normal(size=(4, 2))
        _, grads = kmn_nll(x, feats, net, cs, spec)
        num = central_diff(lambda: kmn_nll(x, feats, net, cs, spec)[0], net.params)
        assert max_rel_error(grads, num) < 1e-5

    def test_loss_is_mean_of_pair_losses(self, rng):
        net, cs, spec, x, feats = _random_config(rng)
        loss, _ = kmn_nll(x, feats, net, cs, spec)
        per = kmn_nll_samples(x, feats, net, cs, spec)
        assert loss == pytest.approx(per.mean(), rel=1e-13)
        # and each pair loss is minus the log of the mixture it describes
        w = network_log_weights(net, feats)
        for xi, lw, nll in zip(x, w, per):
            d = MixtureDensity(cs, spec, np.exp(lw))
            assert nll == pytest.approx(-d.logpdf(xi), rel=1e-12)

    def test_width_mismatch(self, rng):
        net = init_dense_net([2, 5], ["rectified_quadratic"], rng)
        with pytest.raises(ShapeError):
            kmn_nll([0.0], [[0.0, 0.0]], net, CenterSet(np.array([0.0, 1.0])), KernelSpec("gaussian", (1.0,)))

    def test_dead_network(self, rng):
        net = init_dense_net([2, 2], ["rectified_quadratic"], rng)
        net.biases[0][:] = -100.0
        with pytest.raises(DegenerateDensityError):
            kmn_nll([0.0], [[0.0, 0.0]], net, CenterSet(np.array([0.0, 1.0])), KernelSpec("gaussian", (1.0,)))
        # the weight floor keeps the density defined
        loss, _ = kmn_nll([0.0], [[0.0, 0.0]], net, CenterSet(np.array([0.0, 1.0])),
                          KernelSpec("gaussian", (1.0,)), weight_eps=1e-12)
        assert math.isfinite(loss)


class TestKDE:
    def test_standard_normal(self, rng):
        samples = rng.standard_normal(10_000)
        est = kde_estimate(samples, KernelSpec("gaussian", (0.3,)))
        grid = np.linspace(-6, 6, 1201)
        kl = grid_kl(GridEval(grid, stats.norm.pdf(grid)), GridEval(grid, est.pdf(grid)))
        assert 0 <= kl < 0.02

    def test_weights(self):
        est = kde_estimate([0.0, 10.0], KernelSpec("gaussian", (1.0,)), weights=[3.0, 1.0])
        assert est.pdf(0.0) == pytest.approx(0.75 * stats.norm.pdf(0.0), rel=1e-9)

    def test_errors(self):
        with pytest.raises(ParameterError):
            kde_estimate([], KernelSpec("gaussian", (1.0,)))
        with pytest.raises(ShapeError):
            kde_estimate([0.0, 1.0], KernelSpec("gaussian", (1.0,)), weights=[1.0])


class TestSampling:
    def test_gaussian_moments(self, rng):
        d = MixtureDensity(CenterSet(np.array([-1.0, 2.0])), KernelSpec("gaussian", (0.5, 1.0)),
                           [[1.0, 1.0], [2.0, 0.0]])
        draws = density_sample(d, rng, 200_000)
        mean, sd = d.mean_and_sd()
        assert draws.mean() == pytest.approx(mean, abs=0.01)
        assert draws.std() == pytest.approx(sd, abs=0.01)

    def test_goodness_of_fit(self, rng):
        d = MixtureDensity(CenterSet(np.array([0.0, 3.0])), KernelSpec("gaussian", (1.0,)), [[1.0], [1.0]])
        draws = density_sample(d, rng, 5000)
        cdf = lambda x: 0.5 * (stats.norm.cdf(x) + stats.norm.cdf(x, 3.0))
        assert stats.kstest(draws, cdf).pvalue > 1e-3

    def test_von_mises_on_circle(self, rng):
        d = MixtureDensity(CenterSet(np.array([3.0]), 0.0, "circle"), KernelSpec("von_mises", (4.0,)), [[1.0]])
        draws = density_sample(d, rng, 5000)
        assert np.all((draws > -math.pi) & (draws <= math.pi))
        offsets = wrap_angle(draws - 3.0)
        assert stats.kstest(offsets, lambda t: stats.vonmises.cdf(t, 4.0)).pvalue > 1e-3

    def test_single_draw_and_repeatable(self):
        d = MixtureDensity(CenterSet(np.array([0.0])), KernelSpec("gaussian", (1.0,)), [[1.0]])
        a = density_sample(d, np.random.default_rng(5))
        b = density_sample(d, np.random.default_rng(5))
        assert isinstance(a, float) and a == b
