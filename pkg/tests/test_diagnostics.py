import math

import numpy as np
import pytest

from kssolver import diagnostics as dg
from kssolver import mild_solver as ms
from kssolver import oracle
from kssolver import spectral_core as sc
from kssolver.initial_data import gaussian_data


def zero_trace(g, n_t=5, T=1.0):
    z = np.zeros((n_t,) + g.shape, dtype=complex)
    return ms.SolutionTrace(g, np.linspace(0, T, n_t), z, z.copy())


def series_of(times, values, name="c"):
    return dg.NormSeries(np.asarray(times, float), {name: np.asarray(values, float)})


class TestNormSeries:
    def test_zero_trace(self):
        s = dg.norm_timeseries(zero_trace(sc.make_grid(2, 8, 1.0)))
        for name, v in s.channels.items():
            if name == "Linf_v_over_c":
                np.testing.assert_allclose(v, 1.0)
            else:
                assert np.all(v == 0), name
        assert s.X == 0 and s.Y == 0

    def test_single_mode_linear_decay(self):
        g = sc.make_grid(1, 16, 2 * math.pi)
        c = np.zeros(16, dtype=complex)
        c[3] = c[-3] = 0.5
        z = np.zeros(16, dtype=complex)
        times = np.linspace(0, 1, 5)
        lp, lq = ms.linear_trace(c, z, g, times)
        s = dg.norm_timeseries(ms.SolutionTrace(g, times, lp, lq))
        (x,) = g.coordinates()
        for i in range(times.size):
            phys = sc.ifft_array(lp[i], g).real
            assert s["L2_p"][i] == pytest.approx(sc.lp_norm(sc.PhysicalField(g, phys), 2), rel=1e-12)
        assert s["L2_p"][0] == pytest.approx(math.sqrt(math.pi), rel=1e-14)
        assert np.all(np.diff(s["energy"]) < 0)

    def test_psi_channel_empty_on_suite_grid(self):
        g = sc.make_grid(1, 256, 64 * math.pi)
        p, q = gaussian_data(g, 1e-2)
        tr = ms.etd_march(p, q, 1.0, 0.25)
        s = dg.norm_timeseries(tr)
        assert np.all(s["Hpsi74_p"] == 0)
        assert s["Lam74_p"][0] > 0

    def test_csv_layout(self):
        s = dg.norm_timeseries(zero_trace(sc.make_grid(1, 8, 1.0), n_t=3))
        lines = s.to_csv().splitlines()
        assert lines[0].split(",") == ["t"] + list(dg.CSV_CHANNELS)
        assert len(lines) == 4

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dg.NormSeries(np.zeros(3), {"a": np.zeros(2)})


class TestWeightedSup:
    def test_constant_channel(self):
        t = np.linspace(0, 9, 10)
        rep = dg.weighted_sup(series_of(t, np.full(10, 2.0)), "c", 0.5)
        assert rep.weighted_sup == pytest.approx(2.0 * math.sqrt(10))
        assert rep.sup_time == 9

    def test_exact_power_law_fit(self):
        t = np.linspace(0, 100, 201)
        rep = dg.weighted_sup(series_of(t, 3 * (1 + t) ** -0.75), "c", 0.75, fit_window=(10, 100), bound=3.0 + 1e-12)
        assert rep.weighted_sup == pytest.approx(3.0, rel=1e-12)
        assert rep.exponent == pytest.approx(-0.75, abs=1e-12)
        assert rep.passed

    def test_bound_violation(self):
        t = np.linspace(0, 10, 11)
        assert not dg.weighted_sup(series_of(t, np.ones(11)), "c", 1.0, bound=5.0).passed

    def test_refinement_is_monotone(self):
        f = lambda t: np.exp(-((t - 3.3) ** 2))
        coarse = np.linspace(0, 10, 11)
        fine = np.linspace(0, 10, 101)
        a = dg.weighted_sup(series_of(coarse, f(coarse)), "c", 1.0).weighted_sup
        b = dg.weighted_sup(series_of(fine, f(fine)), "c", 1.0).weighted_sup
        assert b >= a

    def test_errors(self):
        s = series_of([0, 1, 2], [1, 1, 1])
        with pytest.raises(ValueError):
            dg.weighted_sup(s, "c", 1.0, window=(5, 6))
        with pytest.raises(KeyError):
            dg.weighted_sup(s, "nope", 1.0)
        with pytest.raises(ValueError):
            dg.weighted_sup(s, "c", 1.0, fit_window=(0, 1))


class TestVAmplitude:
    def test_flat_q(self):
        g = sc.make_grid(1, 16, 2 * math.pi)
        params = ms.ModelParams(mu=1.2, u_bar=1.0)
        rep = dg.v_amplitude_check(zero_trace(g, n_t=11, T=10.0), params)
        assert rep.details["sandwich_ok"] and rep.details["rate_ok"]
        assert rep.exponent == pytest.approx(-0.2, abs=1e-12)
        assert rep.passed

    def test_detects_violation(self, monkeypatch):
        g = sc.make_grid(1, 16, 2 * math.pi)
        params = ms.ModelParams(mu=1.0, u_bar=1.0)
        tr = zero_trace(g, n_t=5, T=4.0)
        real = dg.pq_to_uv

        def inflated(state, prm):
            u, v = real(state, prm)
            if state.t >= 2:
                v = sc.PhysicalField(v.grid, 1.5 * v.values)
            return u, v

        monkeypatch.setattr(dg, "pq_to_uv", inflated)
        rep = dg.v_amplitude_check(tr, params)
        assert not rep.details["sandwich_ok"] and not rep.passed
        assert rep.details["violation_t"] == 2.0


class TestEnergy:
    def test_linear_defect_second_order(self):
        g = sc.make_grid(1, 32, 4 * math.pi)
        p, q = gaussian_data(g, 1.0)
        errs = []
        for n in (9, 17, 33):
            run = oracle.direct_spectral_ode(p, q, 1.0, rtol=1e-12, times=np.linspace(0, 1, n), nonlinear=False)
            errs.append(np.max(np.abs(dg.energy_defect(run.trace, nonlinear=False))))
        for a, b in zip(errs, errs[1:]):
            assert 3.0 <= a / b <= 5.0

    def test_nonlinear_defect_second_order(self):
        g = sc.make_grid(1, 32, 4 * math.pi)
        p, q = gaussian_data(g, 1.0)
        errs = []
        for n in (17, 33, 65):
            run = oracle.direct_spectral_ode(p, q, 1.0, rtol=1e-12, times=np.linspace(0, 1, n))
            errs.append(np.max(np.abs(dg.energy_defect(run.trace))))
            wrong = dg.energy_defect(run.trace, nonlinear=False)
        for a, b in zip(errs, errs[1:]):
            assert 3.0 <= a / b <= 5.0
        assert np.max(np.abs(wrong)) > 100 * errs[-1]

    def test_needs_three_times(self):
        with pytest.raises(ValueError):
            dg.energy_defect(zero_trace(sc.make_grid(1, 8, 1.0), n_t=2))


class TestBandField:
    def test_support_and_reality(self):
        g = sc.make_grid(2, 32, 2 * math.pi)
        c = dg.band_field(g, np.random.default_rng(0), 3.0, 6.0)
        on = np.abs(c) > 0
        assert np.all((g.kmag[on] >= 3) & (g.kmag[on] <= 6))
        assert np.all(g.dealias_mask[on])
        assert sc.SpectralField(g, c).conjugate_symmetry_defect() < 1e-15

    def test_deterministic(self):
        g = sc.make_grid(1, 32, 1.0)
        a = dg.band_field(g, np.random.default_rng(3))
        b = dg.band_field(g, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)


class TestEnsembles:
    def test_zero_u_gives_zero_ratio(self):
        r_grad, r_prod = dg.bilinear_check(seeds=3, zero_u=True)
        assert r_grad.max_ratio == 0 and r_prod.max_ratio == 0

    def test_bilinear_pinned(self):
        r_grad, r_prod = dg.bilinear_check(seeds=10)
        assert r_grad.max_ratio == pytest.approx(0.17254929013173148, rel=1e-9)
        assert r_grad.min_ratio == pytest.approx(0.12856634737836592, rel=1e-9)
        assert r_prod.max_ratio == pytest.approx(0.03944877680341036, rel=1e-9)
        assert r_prod.min_ratio == pytest.approx(0.025170054407094414, rel=1e-9)
        assert np.all(r_grad.extra["psi_share"] == 0)

    def test_high_pass_psi_dominates(self):
        g = sc.make_grid(1, 256, 4 * math.pi)
        r_grad, _ = dg.bilinear_check(seeds=5, grid=g, u_band=(32, 42), v_band=(0, 4))
        assert np.all(r_grad.extra["psi_share"] > 0.5)
        assert r_grad.spread < 3

    def test_bernstein_single_mode(self):
        g = sc.make_grid(3, 16, 2 * math.pi)
        c = np.zeros(g.shape, dtype=complex)
        c[4, 0, 0] = c[-4, 0, 0] = 1.0
        f = sc.SpectralField(g, c)
        assert sc.norm(f, "Hdot", 1.0) / sc.norm(f) == pytest.approx(4.0, rel=1e-14)

    def test_bernstein_pinned(self):
        reps = {r.id: r for r in dg.bernstein_check(seeds=10)}
        pins = {
            "bernstein-Linf": 0.012059385128115748,
            "bernstein-L6": 0.024548531086952374,
            "band-lower": 0.6257403124621387,
            "band-upper": 0.8158927882942953,
            "high-L2": 0.09398345746370981,
            "high-embed": 0.004423385287761765,
            "GN": 0.9964236759017127,
        }
        for key, val in pins.items():
            assert reps[key].max_ratio == pytest.approx(val, rel=1e-9), key
            assert reps[key].finite
        # band inequalities hold with constant one
        assert reps["band-lower"].max_ratio <= 1 and reps["band-upper"].max_ratio <= 1
        assert reps["GN"].max_ratio <= 1

    def test_degenerate_ratio(self):
        with pytest.raises(ValueError):
            dg._ratio(1.0, 0.0)
        assert dg._ratio(0.0, 0.0) == 0.0
