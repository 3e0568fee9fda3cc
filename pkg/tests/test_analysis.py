import math

import numpy as np
import pytest
from scipy.optimize import brentq

from scgi.analysis import (
    AnalyticCurve,
    TwoPointFamily,
    cross_term,
    defocus_images,
    defocus_psf,
    dip_ratio,
    first_zero,
    fwhm,
    gi_analytic,
    rayleigh_distance,
    scgi_analytic,
    sinc,
)
from scgi.errors import NotResolvedError, OutOfRangeError, PreconditionError, SolverError
from scgi.optics import DoublePinhole, DoubleSlit, Grid, OpticalLayout, Pinhole, Uniform

# half-width roots of sinc^2 = 1/2 and sinc^4 = 1/2 (brentq, frozen)
U_SINC2 = 1.3915573782515616
U_SINC4 = 1.001906357696607


def _curve(x, y):
    g = Grid(x[0], x[1] - x[0], len(x))
    return AnalyticCurve(g, np.asarray(y, float))


class TestOracles:
    def test_frozen_roots(self):
        assert brentq(lambda u: sinc(u) ** 2 - 0.5, 0.5, 2) == pytest.approx(U_SINC2, rel=1e-12)
        assert brentq(lambda u: sinc(u) ** 4 - 0.5, 0.5, 2) == pytest.approx(U_SINC4, rel=1e-12)

    def test_sinc_convention(self):
        assert sinc(0.0) == 1.0
        assert sinc(math.pi) == pytest.approx(0.0, abs=1e-15)
        assert sinc(math.pi / 2) == pytest.approx(2 / math.pi)


class TestGiAnalytic:
    def test_pinhole_first_zero_and_fwhm(self, fig2_layout):
        g = Grid.centered(2e-3, 4001)
        c = gi_analytic(Pinhole(0.0), fig2_layout, g)
        assert first_zero(c) == pytest.approx(0.532e-3, abs=g.step)
        expected = 2 * U_SINC2 / fig2_layout.psf_scale
        assert fwhm(c) == pytest.approx(expected, rel=1e-4)

    def test_uniform_constant(self, fig2_layout, beta_grid):
        v = gi_analytic(Uniform(0.7), fig2_layout, beta_grid).values
        assert np.ptp(v) == 0.0 and v[0] > 0

    def test_double_pinhole_symmetric(self, fig2_layout, beta_grid):
        v = gi_analytic(DoublePinhole.symmetric(1e-3), fig2_layout, beta_grid).values
        np.testing.assert_allclose(v, v[::-1], rtol=0, atol=1e-12 * v.max())

    def test_requires_focus(self, fig4_layout, beta_grid):
        with pytest.raises(PreconditionError):
            gi_analytic(Pinhole(), fig4_layout.with_delta_s(0.4), beta_grid)

    def test_normalized(self, fig2_layout, beta_grid):
        c = gi_analytic(Pinhole(), fig2_layout, beta_grid).normalized()
        assert c.values.max() == 1.0 and c.normalization == "peak-normalized"


MASKS = [Pinhole(1e-4), DoublePinhole.symmetric(1e-3), DoubleSlit(0.4e-3, 1e-3)]


class TestScgiAnalytic:
    def test_pinhole_no_cross(self, fig2_layout, beta_grid):
        a = scgi_analytic(Pinhole(), fig2_layout, beta_grid, True).values
        b = scgi_analytic(Pinhole(), fig2_layout, beta_grid, False).values
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("mask", MASKS, ids=["pinhole", "double_pinhole", "double_slit"])
    def test_completed_square(self, mask, fig2_layout, beta_grid):
        gi = gi_analytic(mask, fig2_layout, beta_grid).normalized().values
        sc = scgi_analytic(mask, fig2_layout, beta_grid).normalized().values
        assert np.max(np.abs(sc - gi * gi)) < 1e-9

    @pytest.mark.parametrize("mask", MASKS + [Uniform(1.0)], ids=["pinhole", "double_pinhole", "double_slit", "uniform"])
    def test_decomposition(self, mask, fig2_layout, beta_grid):
        total = scgi_analytic(mask, fig2_layout, beta_grid, True).values
        parts = scgi_analytic(mask, fig2_layout, beta_grid, False).values + cross_term(mask, fig2_layout, beta_grid).values
        assert np.max(np.abs(total - parts) / total.max()) < 1e-12

    def test_cross_term_independent_quadrature(self, fig2_layout):
        # two points: L = 2 s_a^2 s_b^2, diag = s_a^4 + s_b^4
        g = Grid.centered(1.5e-3, 301)
        c = fig2_layout.psf_scale
        sa = sinc(c * (-0.5e-3 - g.positions)) ** 2
        sb = sinc(c * (0.5e-3 - g.positions)) ** 2
        mask = DoublePinhole.symmetric(1e-3)
        np.testing.assert_allclose(cross_term(mask, fig2_layout, g).values, 2 * sa * sb, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(scgi_analytic(mask, fig2_layout, g, False).values, sa**2 + sb**2, rtol=1e-12)

    def test_fig3_ordering(self, fig2_layout, beta_grid):
        mask = DoublePinhole.symmetric(1e-3)
        with_cross = dip_ratio(scgi_analytic(mask, fig2_layout, beta_grid, True))
        without = dip_ratio(scgi_analytic(mask, fig2_layout, beta_grid, False))
        assert without < with_cross

    @pytest.mark.parametrize("mask", MASKS[1:], ids=["double_pinhole", "double_slit"])
    def test_symmetry(self, mask, fig2_layout, beta_grid):
        for curve in (gi_analytic(mask, fig2_layout, beta_grid), scgi_analytic(mask, fig2_layout, beta_grid)):
            v = curve.values
            assert np.max(np.abs(v - v[::-1])) <= 1e-12 * v.max()

    @pytest.mark.parametrize("mask", MASKS, ids=["pinhole", "double_pinhole", "double_slit"])
    def test_translation(self, mask, fig2_layout):
        g = Grid(-3e-3, 1e-5, 601)
        k = 37
        shifted = mask.shifted(k * g.step)
        for fn in (gi_analytic, scgi_analytic):
            base = fn(mask, fig2_layout, g, step=1e-5).values
            moved = fn(shifted, fig2_layout, g, step=1e-5).values
            np.testing.assert_allclose(moved[k:], base[:-k], rtol=1e-9, atol=1e-12 * base.max())


class TestDefocus:
    def test_focus_limit(self, fig4_layout):
        g = Grid.centered(0.3e-3, 401)
        psf = defocus_psf(fig4_layout, 0.0, g).normalized().values
        kernel = gi_analytic(Pinhole(), fig4_layout, g).normalized().values
        assert np.max(np.abs(psf - kernel)) < 1e-9

    def test_continuity_halving(self, fig4_layout):
        g = Grid.centered(0.3e-3, 401)
        kernel = gi_analytic(Pinhole(), fig4_layout, g).normalized().values
        errs = [np.max(np.abs(defocus_psf(fig4_layout.with_delta_s(ds), 0.0, g).normalized().values - kernel))
                for ds in (8e-3, 4e-3, 2e-3, 1e-3, 5e-4)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_quadrature_convergence(self, fig4_layout):
        lay = fig4_layout.with_delta_s(0.85)
        g = Grid.centered(4e-3, 201)
        v = {n: defocus_psf(lay, 0.0, g, nodes=n).values for n in (32, 64, 128, 1024, 2048)}
        err = [np.max(np.abs(v[n] - v[2048])) for n in (32, 64, 128)]
        assert err[0] > err[1] > err[2]
        assert np.max(np.abs(v[2048] - v[1024])) < 1e-9 * v[2048].max()

    def test_blur_grows(self, fig4_layout):
        widths = []
        for ds in (0.4, 0.85):
            lay = fig4_layout.with_delta_s(ds)
            g = Grid.centered(8e-3, 801)
            widths.append(fwhm(defocus_psf(lay, 0.0, g)))
        assert widths[1] > widths[0]

    def test_images_identity(self, fig4_layout):
        g = Grid.centered(6e-3, 201)
        imgs = defocus_images(DoubleSlit(2e-3, 3e-3), fig4_layout.with_delta_s(0.4), g, step=5e-5, nodes=512)
        np.testing.assert_allclose(imgs["scgi"].values, imgs["gi"].values ** 2, rtol=1e-12)
        assert np.all(imgs["scgi_diag"].values <= imgs["scgi"].values)


class TestMetrology:
    def test_dip_two_lobes(self):
        x = np.linspace(-1, 1, 201)
        y = np.exp(-((x - 0.5) / 0.2) ** 2) + np.exp(-((x + 0.5) / 0.2) ** 2)
        expected = y[100] / y.max()
        assert dip_ratio(_curve(x, y)) == pytest.approx(expected, rel=1e-4)

    def test_dip_piecewise(self):
        x = np.arange(9.0)
        y = [0, 0.6, 1.0, 0.6, 0.5, 0.6, 1.0, 0.6, 0]
        assert dip_ratio(_curve(x, y)) == pytest.approx(0.5)

    def test_single_lobe(self):
        x = np.linspace(-1, 1, 101)
        c = _curve(x, np.exp(-x * x))
        with pytest.raises(NotResolvedError):
            dip_ratio(c)
        assert dip_ratio(c, tolerant=True) == 1.0

    def test_single_lobe_with_side_lobes(self, fig2_layout):
        # odd grid: the main lobe sits exactly on the centre sample
        c = gi_analytic(Pinhole(), fig2_layout, Grid.centered(2e-3, 401))
        with pytest.raises(NotResolvedError):
            dip_ratio(c)

    def test_fwhm_triangle(self):
        x = np.linspace(-2, 2, 401)
        assert fwhm(_curve(x, np.maximum(0, 1 - np.abs(x)))) == pytest.approx(1.0, rel=1e-12)

    def test_fwhm_out_of_range(self):
        x = np.linspace(-0.2, 0.2, 41)
        with pytest.raises(OutOfRangeError):
            fwhm(_curve(x, np.exp(-x * x)))

    def test_fwhm_ratio(self, fig2_layout):
        g = Grid.centered(2e-3, 4001)
        ratio = fwhm(scgi_analytic(Pinhole(), fig2_layout, g)) / fwhm(gi_analytic(Pinhole(), fig2_layout, g))
        assert ratio == pytest.approx(U_SINC4 / U_SINC2, abs=1e-4)


class TestRayleigh:
    def test_gi_calibration(self, fig2_layout):
        fam = TwoPointFamily(fig2_layout, "gi", n_beta=2001)
        assert dip_ratio(fam(fig2_layout.first_zero)) == pytest.approx(8 / math.pi**2, abs=1e-4)
        d = rayleigh_distance(fam, 8 / math.pi**2)
        assert d == pytest.approx(fig2_layout.first_zero, rel=1e-3)

    def test_scgi_value(self, fig2_layout):
        fam = TwoPointFamily(fig2_layout, "scgi", n_beta=2001)
        assert dip_ratio(fam(fig2_layout.first_zero)) == pytest.approx(64 / math.pi**4, abs=1e-4)

    def test_scgi_below_gi(self, fig2_layout):
        d = fig2_layout.first_zero
        gi = dip_ratio(TwoPointFamily(fig2_layout, "gi")(d))
        sc = dip_ratio(TwoPointFamily(fig2_layout, "scgi")(d))
        assert sc < gi

    def test_distance_decreases_with_criterion(self, fig2_layout):
        fam = TwoPointFamily(fig2_layout, "gi")
        ds = [rayleigh_distance(fam, c) for c in (0.5, 0.7, 0.81, 0.9, 0.99)]
        assert all(b < a for a, b in zip(ds, ds[1:]))
        # the limit is the separation where a dip first appears, not zero
        assert ds[-1] > 0.5 * fig2_layout.first_zero

    def test_scgi_resolves_closer(self, fig2_layout):
        gi = rayleigh_distance(TwoPointFamily(fig2_layout, "gi"))
        sc = rayleigh_distance(TwoPointFamily(fig2_layout, "scgi"))
        assert sc < gi

    def test_no_bracket(self, fig2_layout):
        fam = TwoPointFamily(fig2_layout, "gi")
        with pytest.raises(SolverError):
            rayleigh_distance(fam, 0.81, bracket=(1e-6, 1e-5))
        with pytest.raises(SolverError):
            rayleigh_distance(lambda d: None, 0.81)

    @pytest.mark.parametrize("delta_s, target", [(0.4, 2.3e-3), (0.85, 3.1e-3)])
    def test_source_radius_sensitivity(self, delta_s, target):
        """Informational, not an acceptance check: with R = 2.5 mm the
        defocused distances fall inside the acceptance band, while the
        R = 1.65 mm geometry gives values about 1.5x smaller."""
        lay = OpticalLayout(550e-9, 0.35, 0.35 + delta_s, 2.5e-3)
        d = rayleigh_distance(TwoPointFamily(lay, "defocus"))
        assert d == pytest.approx(target, rel=0.2)
