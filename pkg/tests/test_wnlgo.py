import math

import numpy as np
import pytest

from nlslab import spectral as sp
from nlslab import wnlgo as w
from nlslab.norms import fourier_lebesgue_norm, x_norm


class TestResonanceSet:
    def test_cubic_1d_characterization(self):
        rs = w.resonance_set((0,), 1, 2, 1)
        expect = sorted(
            set(
                [((0,), (l,), (l,)) for l in range(-2, 3)]
                + [((l,), (l,), (0,)) for l in range(-2, 3)]
            )
        )
        assert rs == expect

    def test_cubic_1d_nonzero_target(self):
        rs = w.resonance_set((1,), 1, 2, 1)
        expect = sorted(
            set(
                [((1,), (l,), (l,)) for l in range(-2, 3)]
                + [((l,), (l,), (1,)) for l in range(-2, 3)]
            )
        )
        assert rs == expect

    def test_identities_hold_exactly(self):
        for tup in w.resonance_set((1, 1), 1, 2, 2):
            k1, k2, k3 = (np.array(k) for k in tup)
            assert np.array_equal(k1 - k2 + k3, np.array([1, 1]))
            assert int(k1 @ k1) - int(k2 @ k2) + int(k3 @ k3) == 2

    def test_multid_example_member(self):
        rs = w.resonance_set((0, 0), 1, 1, 2)
        assert ((1, 0), (1, 1), (0, 1)) in rs

    def test_quintic_example_member(self):
        rs = w.resonance_set((0,), 2, 4, 1)
        assert ((2,), (-1,), (-2,), (4,), (3,)) in rs

    def test_budget_guard(self):
        with pytest.raises(w.ResonanceBudgetError):
            w.resonance_set((0, 0, 0), 2, 6, 3, budget=1000)


class TestCubicOracle:
    @pytest.mark.parametrize("jx", [-2, -1, 0, 1, 2])
    @pytest.mark.parametrize("jy", [-2, -1, 0, 1, 2])
    def test_matches_brute_force(self, jx, jy):
        j = (jx, jy)
        assert set(w.resonance_set(j, 1, 3, 2)) == set(w.resonance_cubic_oracle(j, 3, 2))

    def test_degenerate_families_present(self):
        out = set(w.resonance_cubic_oracle((1, 0), 2, 2))
        for lx in range(-2, 3):
            for ly in range(-2, 3):
                l = (lx, ly)
                assert ((1, 0), l, l) in out
                assert (l, l, (1, 0)) in out

    def test_rejects_d1(self):
        with pytest.raises(ValueError):
            w.resonance_cubic_oracle((0,), 2, 1)


class TestClosureAndSources:
    def test_multid_closure_adds_only_zero(self):
        active, sources = w.first_generation_closure([(1, 0), (1, 1), (0, 1)], 1, 2)
        assert active == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert len(sources[(0, 0)]) >= 2

    def test_source_counts(self):
        assert w.resonant_source_count([(1, 0), (1, 1), (0, 1)], 1, 2) == 2
        assert w.resonant_source_count([(2,), (-1,), (-2,), (4,), (3,)], 2, 1) == 12


class TestProfileEvolution:
    def test_free_transport_exact_at_zero_coupling(self):
        pg = sp.make_grid(2, 16.0, 32)
        alpha = w.gaussian_envelope(pg, 0.5, 1.0, 10.0)
        ps = w.make_initial_profiles(pg, 1, 0, 0.125, 1.3, [(1, 0), (1, 1), (0, 1)], alpha)
        path = w.evolve_profiles(ps, 0.5, n_steps=16)
        fr = pg.axis_freqs()
        got = path.values[(1, 0)][-1]
        expect = alpha.values * np.exp(-1j * fr[:, None] * 0.5)
        assert np.max(np.abs(got - expect)) == 0.0

    def test_degenerate_only_l2_conservation(self):
        # d=1 cubic sources are phase-only; every mode's L2 is conserved
        pg = sp.make_grid(1, 8.0, 64)
        alpha = w.gaussian_envelope(pg, 0.8, 1.0, 2.5)
        ps = w.make_initial_profiles(pg, 1, 1, 0.25, 1.3, [(1,), (2,)], alpha)
        path = w.evolve_profiles(ps, 0.2, n_steps=256)
        for j, vals in path.values.items():
            n0 = sp.physical_l2(sp.field(pg, vals[0]))
            n1 = sp.physical_l2(sp.field(pg, vals[-1]))
            assert abs(n1 - n0) < 1e-8 * n0

    def test_zero_mode_rate_multid(self):
        pg = sp.make_grid(2, 16.0, 32)
        alpha = w.gaussian_envelope(pg, 0.5, 1.0, 10.0)
        out = w.zero_mode_rate_check(
            pg, 1, 1, 0.125, 1.3, [(1, 0), (1, 1), (0, 1)], alpha, h=1e-4
        )
        assert out["c0"] == 2
        assert out["rel_err"] < 0.01

    def test_zero_mode_rate_quintic(self):
        pg = sp.make_grid(1, 64.0, 256)
        alpha = w.gaussian_envelope(pg, 0.5, 1.0, 12.0)
        out = w.zero_mode_rate_check(
            pg, 2, 1, 0.125, 1.3, [(2,), (-1,), (-2,), (4,), (3,)], alpha, h=1e-4
        )
        assert out["c0"] == 12
        assert out["rel_err"] < 0.01

    def test_contraction_error_advises(self):
        pg = sp.make_grid(1, 8.0, 64)
        alpha = w.gaussian_envelope(pg, 40.0, 1.0, 2.5)
        ps = w.make_initial_profiles(pg, 1, 1, 0.9, 1.05, [(1,), (2,)], alpha)
        with pytest.raises(w.ContractionError):
            # force one giant segment so the map cannot contract
            w.evolve_profiles(ps, 5.0, n_steps=8, contraction_cap=1e9, max_iter=8)


class TestAssembly:
    def setup_ps(self, eps=0.125, t=0.0):
        pg = sp.make_grid(1, 8.0, 16)
        vals = np.zeros(pg.shape, complex)
        vals[6:11] = 1.0  # band |xi| <= 2
        prof = sp.field(pg, vals)
        profiles = {(0,): prof, (1,): prof}
        return w.ProfileSet(pg, 1, 1, eps, 1.3, profiles, t)

    def test_single_zero_mode_identity(self):
        pg = sp.make_grid(1, 8.0, 16)
        vals = np.zeros(pg.shape, complex)
        vals[6:11] = 2.0
        ps = w.ProfileSet(pg, 1, 1, 0.125, 1.3, {(0,): sp.field(pg, vals)}, 0.0)
        target = sp.make_grid(1, 32.0, 64)
        out = w.assemble_uapp(ps, target)
        i0 = target.center_index
        np.testing.assert_array_equal(out.values[i0 - 2 : i0 + 3], vals[6:11])

    def test_t0_bit_consistent(self):
        ps = self.setup_ps()
        target = sp.make_grid(1, 32.0, 64)
        out = w.assemble_uapp(ps, target, allow_overlap=True)
        # mode 1 block sits at 1/eps = 8 exactly
        i0 = target.center_index
        np.testing.assert_array_equal(
            out.values[i0 + 8 - 2 : i0 + 8 + 3], ps.profiles[(1,)].values[6:11]
        )

    def test_time_phase(self):
        ps = self.setup_ps(t=0.3)
        target = sp.make_grid(1, 32.0, 64)
        out = w.assemble_uapp(ps, target, allow_overlap=True)
        i0 = target.center_index
        phase = np.exp(-1j * 0.3 * 1.0 / (2 * 0.125))
        np.testing.assert_allclose(
            out.values[i0 + 8], phase * ps.profiles[(1,)].values[8], rtol=1e-14
        )

    def test_overlap_detection(self):
        ps = self.setup_ps(eps=0.25)  # shift 4 < block width: overlap
        target = sp.make_grid(1, 32.0, 64)
        with pytest.raises(w.OverlapError):
            w.assemble_uapp(ps, target)
        out = w.assemble_uapp(ps, target, allow_overlap=True)
        assert np.isfinite(out.values).all()

    def test_off_lattice_shift_rejected(self):
        ps = self.setup_ps(eps=0.3)
        target = sp.make_grid(1, 32.0, 64)
        with pytest.raises(w.OverlapError):
            w.assemble_uapp(ps, target, allow_overlap=True)

    def test_unscaling_roundtrip_exact(self):
        # psi(0) = eps^{(J-2)/(2 sigma)} u(0) and back is the identity
        eps, sigma, bigj = 0.125, 1, 1.3
        pw = w.unscale_exponent(sigma, bigj)
        g = sp.make_grid(1, 8.0, 16)
        rng = np.random.default_rng(0)
        f = sp.field(g, rng.standard_normal(g.shape) + 0j)
        psi = sp.field(g, eps**pw * f.values)
        back = sp.field(g, psi.values / eps**pw)
        np.testing.assert_allclose(back.values, f.values, rtol=4e-16)


class TestJWindow:
    def test_example_window(self):
        lo, hi = w.j_window(1, -0.4)
        assert lo == pytest.approx(1.2)
        assert hi == pytest.approx(4.0 / 3.0)

    def test_empty_window_explains(self):
        with pytest.raises(w.WindowError, match="2 sigma"):
            w.j_window(1, -0.2)

    def test_window_opens_below_critical(self):
        lo, hi = w.j_window(2, -0.25)
        assert lo < hi


class TestNonResonantDecay:
    def test_eps_over_gap_bound(self):
        # ||D^eps|| / (eps / ||k|^2 - omega|) stays bounded once the phase
        # mismatch dominates the envelope terms (gap/eps >> |k| * width)
        g = sp.make_grid(1, 384.0, 3072)
        xi = g.axis_freqs()
        prof = np.exp(-(xi**2)).astype(complex)
        prof[np.abs(xi) > 6] = 0.0
        env = sp.field(g, prof)
        base = x_norm(env, "fl1-flinf")
        for k_vec, omega in (((1.0,), 3.0), ((2.0,), 1.0)):
            gap = abs(k_vec[0] ** 2 - omega)
            ratios = []
            for ee in (2**-5, 2**-6, 2**-7):
                d_field = w.nonres_duhamel_field(env, k_vec, omega, ee, 0.4)
                ratios.append(x_norm(d_field, "fl1-flinf") / (ee / gap))
            # the closed form caps the time integral by 4 eps / gap, so the
            # measured constant stays below ~4 norm units
            assert max(ratios) <= 4.0 * base


@pytest.mark.slow
class TestExperiments:
    def test_error_slope_small_sweep(self):
        cfg = w.WnlgoRunConfig(n_samples=4, profile_steps=32)
        out = w.wnlgo_error(cfg, [2**-3, 2**-4, 2**-5], variants=("fl1-flinf",))
        fit = out["fits"]["fl1-flinf"]
        assert fit["monotone"]
        assert 0.8 <= fit["slope"] <= 1.2
        assert fit["r2"] > 0.98

    def test_linear_limit_error_bounded(self):
        cfg = w.WnlgoRunConfig(mu=0, n_samples=4, profile_steps=32)
        out = w.wnlgo_error(cfg, [2**-3, 2**-4], variants=("fl1-flinf",))
        for row in out["rows"]:
            # with the nonlinearity off only the envelope-dispersion remainder
            # survives; the error stays O(eps) with a small constant
            assert row["err_fl1-flinf"] < 1.0 * row["eps"]

    def test_loss_slopes_small_sweep(self):
        cfg = w.WnlgoRunConfig(n_samples=4, profile_steps=32)
        out = w.run_loss_experiment(cfg, -0.4, [2**-3, 2**-4, 2**-5])
        assert abs(out["fits"]["initial_fl2"]["slope"] - 0.05) < 0.03
        assert abs(out["fits"]["evolved_low_fl2"]["slope"] + 0.05) < 0.03

    def test_loss_hypothesis_checks(self):
        cfg = w.WnlgoRunConfig(d=1, sigma=1)
        with pytest.raises(w.WindowError, match="d\\*sigma"):
            w.run_loss_experiment(cfg, -0.4, [0.125])
        cfg2 = w.WnlgoRunConfig(bigj=1.9)
        with pytest.raises(w.WindowError, match="window"):
            w.run_loss_experiment(cfg2, -0.4, [0.125])
        cfg3 = w.WnlgoRunConfig()
        with pytest.raises(w.WindowError):
            w.run_loss_experiment(cfg3, -0.3, [0.125])

    def test_uapp_lower_bound_from_zero_mode(self):
        # once supports decouple the approximate solution dominates the
        # created zero mode in every weighted norm
        cfg = w.WnlgoRunConfig(n_samples=2, profile_steps=16)
        eps = 2**-5
        path, res, sgrid, samples = w.run_semiclassical(cfg, eps)
        ps_t = w._path_sample(path, samples[-1])
        uapp = w.assemble_uapp(ps_t, sgrid, allow_overlap=True)
        a0 = ps_t.profiles[(0, 0)]
        a0_norm = fourier_lebesgue_norm(a0, 2.0, -1.0)
        low = w.zero_mode_block(uapp, eps)
        assert fourier_lebesgue_norm(low, 2.0, -1.0) > 0.5 * a0_norm
        assert a0_norm > 0
