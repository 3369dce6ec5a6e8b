import math

import numpy as np
import pytest

from nlslab import inflation as infl
from nlslab import picard as pc
from nlslab import spectral as sp
from nlslab.norms import fourier_lebesgue_norm, ma_norm


class TestRegimeParams:
    def test_critical_indices(self):
        # p = 2 recovers the Sobolev-scaling index
        for d in (1, 2, 3):
            for sigma in (1, 2):
                assert infl.critical_index_fl(2.0, d, sigma) == pytest.approx(
                    infl.critical_index_sobolev(d, sigma)
                )
        assert infl.critical_index_fl(2.0, 1, 1) == pytest.approx(-0.5)

    def test_admissible_s(self):
        rp = infl.regime_params(2**10, 1, 1, -0.75, "fl", p=2.0)
        assert rp.rho == pytest.approx(1.0 / math.log(2**10), abs=0)

    def test_threshold_violation_named(self):
        with pytest.raises(infl.RegimeError, match="hypothesis"):
            infl.regime_params(2**8, 1, 1, -0.25, "fl", p=2.0)
        with pytest.raises(infl.RegimeError, match="hypothesis"):
            infl.regime_params(2**8, 1, 1, -0.4, "mod", q=1.0)

    def test_paper_mode_r_value(self):
        rp = infl.regime_params(2**10, 1, 1, -0.75, "fl", p=2.0, mode="paper")
        assert rp.r_amp == pytest.approx(1.0 / (10.0 * math.log(2.0)), rel=1e-12)
        assert rp.r_amp == pytest.approx(0.14427, rel=1e-4)

    def test_rho_identity_both_modes(self):
        # the smallness value recomputed from (R, A, T) equals 1/log N
        for mode in ("desk", "paper"):
            rp = infl.regime_params(2**8, 1, 1, -0.75, "fl", p=2.0, mode=mode)
            rho = (
                rp.r_amp
                * rp.n_freq**0.75
                * rp.a_cube ** (1.0 - 0.5)
                * rp.t_final**0.5
            )
            assert abs(rho - 1.0 / math.log(2**8)) < 1e-12

    def test_desk_tn2_decreasing(self):
        vals = [
            infl.regime_params(float(2**k), 1, 1, -0.75, "fl").tn2 for k in range(6, 11)
        ]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 0.1

    def test_non_dyadic_n_rejected(self):
        with pytest.raises(infl.RegimeError):
            infl.regime_params(100.0, 1, 1, -0.75, "fl")


class TestMakeInflationData:
    def grid(self):
        return sp.make_grid(1, 256.0, 2048)  # dxi = 0.25

    def spec(self, **kw):
        base = dict(
            d=1, sigma=1, space="fl", s=-0.75, n_freq=64.0, a_cube=2.0, r_amp=0.5
        )
        base.update(kw)
        return infl.InflationDataSpec(**base)

    def test_height_and_support(self):
        g = self.grid()
        spec = self.spec()
        f = infl.make_inflation_data(spec, g)
        h = 0.5 * 2.0**-0.5 * 64.0**0.75
        nz = f.values[f.values != 0]
        assert np.all(nz == h)
        assert sp.support_node_count(f) == 3 * 8
        assert pc.support_measure(f) == pytest.approx(3 * 2.0)

    def test_norm_tracks_r(self):
        # ||psi0||_{FL^p_s} / R bounded across the N sweep
        g = sp.make_grid(1, 4096.0, 32768)
        ratios = []
        for k in range(6, 11):
            spec = self.spec(n_freq=float(2**k), a_cube=8.0)
            f = infl.make_inflation_data(spec, g)
            ratios.append(fourier_lebesgue_norm(f, 2.0, -0.75) / spec.r_amp)
        assert max(ratios) / min(ratios) < 1.05

    def test_closed_form_node_sum(self):
        # the norm of the datum equals the explicit 24-node quadrature sum
        g = sp.make_grid(1, 256.0, 2048)
        spec = self.spec(a_cube=2.0)
        f = infl.make_inflation_data(spec, g)
        h = spec.height()
        s = -0.75
        acc = 0.0
        for eta in (64.0, -64.0, 128.0):
            for i in range(8):
                xi = eta - 1.0 + i * g.dxi
                acc += (1.0 + xi * xi) ** s * h * h * g.dxi
        val = fourier_lebesgue_norm(f, 2.0, s)
        assert val == pytest.approx(math.sqrt(acc), rel=1e-12)

    def test_ma_norm_of_modulation_datum(self):
        # (q <= 2) height makes ||psi0||_{M_A} = 3 R N^{-s} exactly
        g = self.grid()
        spec = self.spec(space="mod", q=1.0)
        f = infl.make_inflation_data(spec, g)
        assert ma_norm(f, 2.0) == pytest.approx(
            3 * spec.r_amp * spec.n_freq**0.75, rel=1e-10
        )

    def test_heights_per_branch(self):
        s_fl = self.spec(space="fl", p=4.0)
        assert s_fl.height() == pytest.approx(0.5 * 2.0 ** (-1 / 4) * 64.0**0.75)
        s_lo = self.spec(space="mod", q=1.5)
        assert s_lo.height() == pytest.approx(0.5 * 2.0 ** (-1 / 2) * 64.0**0.75)
        s_hi = self.spec(space="mod", q=4.0)
        assert s_hi.height() == pytest.approx(0.5 * 2.0 ** (-1 / 4) * 64.0**0.75)

    def test_off_lattice_center_rejected(self):
        g = self.grid()
        spec = self.spec(centers=((64.1,), (-64.0,), (128.0,)))
        with pytest.raises(infl.RegimeError):
            infl.make_inflation_data(spec, g)

    def test_overlapping_cubes_rejected(self):
        g = self.grid()
        spec = self.spec(centers=((64.0,), (64.5,), (128.0,)))
        with pytest.raises(infl.RegimeError):
            infl.make_inflation_data(spec, g)

    def test_coarse_grid_rejected(self):
        g = sp.make_grid(1, 256.0, 512)  # dxi = 1: only 2 nodes per cube
        with pytest.raises(infl.RegimeError):
            infl.make_inflation_data(self.spec(), g)

    def test_above_threshold_warns_not_refuses(self, caplog):
        g = self.grid()
        spec = self.spec(s=-0.25)  # above s_c(2) = -1/2
        with caplog.at_level("WARNING"):
            f = infl.make_inflation_data(spec, g)
        assert sp.support_node_count(f) == 24
        assert any("threshold" in r.message for r in caplog.records)


class TestSweep:
    @pytest.fixture(scope="class")
    def fl_records(self):
        return infl.run_inflation_sweep(
            "fl", d=1, sigma=1, s=-0.75, n_list=[64.0, 128.0, 256.0]
        )

    def test_rho_column(self, fl_records):
        for r in fl_records:
            assert abs(r.rho - 1.0 / math.log(r.n_freq)) < 1e-12

    def test_tn2_column_decreasing(self, fl_records):
        tn2 = [r.tn2 for r in fl_records]
        assert all(a > b for a, b in zip(tn2, tn2[1:]))

    def test_dominance_and_inflation_increase(self, fl_records):
        dom = [r.ratio_dom for r in fl_records]
        infl_r = [r.ratio_inflation for r in fl_records]
        assert all(a < b for a, b in zip(dom, dom[1:]))
        assert all(a < b for a, b in zip(infl_r, infl_r[1:]))

    def test_u1_is_isometric_to_datum(self, fl_records):
        for r in fl_records:
            assert r.norm_u1 == pytest.approx(r.norm0, rel=1e-12)

    def test_oracle_row(self, fl_records):
        r = fl_records[0]
        assert math.isfinite(r.oracle_l2_diff)
        assert r.oracle_l2_diff <= r.oracle_allowance

    def test_dominance_ordering_at_largest_n(self, fl_records):
        r = fl_records[-1]
        assert r.norm_u2s1 > r.norm_u1 > r.tail

    def test_tail_le_twice_first_neglected(self, fl_records):
        for r in fl_records:
            if math.isfinite(r.tail):
                assert r.tail <= 2.0 * r.tail_first / (1 - 1e-12) + 1e-15

    def test_audit_rows_present(self, fl_records):
        for r in fl_records:
            ks = sorted(a.k for a in r.audit_rows)
            assert ks == [1, 3, 5]

    def test_csv_row_format(self, fl_records):
        row = fl_records[0].csv_row()
        assert len(row.split(",")) == 12

    def test_grid_budget_skip(self):
        recs = infl.run_inflation_sweep(
            "fl", d=1, sigma=1, s=-0.75, n_list=[1024.0], grid_budget=1 << 10
        )
        assert recs[0].skipped == "grid budget"
        assert math.isnan(recs[0].norm0)

    def test_threaded_matches_serial(self, fl_records):
        rec2 = infl.run_inflation_sweep(
            "fl", d=1, sigma=1, s=-0.75, n_list=[64.0, 128.0, 256.0], max_workers=3
        )
        for a, b in zip(fl_records, rec2):
            assert a.csv_row() == b.csv_row()


def test_resolution_doubling_changes_norms_below_1pct():
    # build the N=64 datum at the default and a doubled resolution
    rp = infl.regime_params(64.0, 1, 1, -0.75, "fl")
    spec = infl.InflationDataSpec(
        d=1, sigma=1, space="fl", s=-0.75, n_freq=64.0, a_cube=rp.a_cube,
        r_amp=rp.r_amp,
    )
    cfg = pc.PicardConfig(sigma=1)
    vals = {}
    for dxi in (1.0, 0.5):
        m = 2048 if dxi == 1.0 else 4096
        g = sp.make_grid(1, m * dxi / 2.0, m)
        f = infl.make_inflation_data(spec, g)
        exp = pc.PicardExpansion(f, cfg)
        u3 = exp.iterate(3, rp.t_final)
        vals[dxi] = (
            fourier_lebesgue_norm(f, 2.0, -0.75),
            fourier_lebesgue_norm(u3, 2.0, -0.75),
        )
    for a, b in zip(vals[1.0], vals[0.5]):
        assert abs(a - b) / b < 0.01
