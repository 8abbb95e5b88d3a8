import logging
import math

import numpy as np
import pytest

from kssolver import mild_solver as ms
from kssolver import oracle
from kssolver import semigroup as sg
from kssolver import spectral_core as sc
from kssolver.initial_data import gaussian_data


def grid1d(n=64, L=8 * math.pi):
    return sc.make_grid(1, n, L)


def sup_l2(a, b, g):
    return float(np.max(sc.norm_array(a.p - b.p, g) + sc.norm_array(a.q - b.q, g)))


class TestComputeG:
    def test_zero_q(self):
        g = grid1d()
        p, _ = gaussian_data(g, 1.0)
        z = sc.SpectralField(g, np.zeros(g.shape, dtype=complex))
        assert np.max(np.abs(ms.compute_G(p, z).coeffs)) == 0

    def test_projected_constant_p(self):
        g = grid1d()
        _, q = gaussian_data(g, 1.0)
        c = np.zeros(g.shape, dtype=complex)
        c[g.zero_index] = 0.7
        G = ms.compute_G(sc.SpectralField(g, c), q, project=False)
        assert np.allclose(G.coeffs, -0.7 * q.coeffs * g.dealias_mask, atol=1e-16)
        with pytest.raises(ValueError):
            ms.compute_G(sc.SpectralField(g, c), q)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_constant_p_identity(self, dim):
        g = sc.make_grid(dim, 8, 2 * math.pi)
        c = np.zeros(g.shape, dtype=complex)
        c[g.zero_index] = 2.5
        q = np.zeros(g.shape, dtype=complex)
        idx = (1,) + (0,) * (dim - 1)
        neg = (-1,) + (0,) * (dim - 1)
        q[idx] = 0.3 + 0.1j
        q[neg] = 0.3 - 0.1j
        G = ms.compute_G_array(c, q, g, project=False)
        np.testing.assert_allclose(G, -2.5 * q, atol=1e-15)

    def test_split_identity(self):
        g = sc.make_grid(2, 24, 2 * math.pi)
        rng = np.random.default_rng(0)
        p = sc.fft_array(rng.standard_normal(g.shape), g) * g.dealias_mask
        q = sc.fft_array(rng.standard_normal(g.shape), g) * g.dealias_mask
        p[g.zero_index] = q[g.zero_index] = 0
        G, A, B = ms.compute_G_array(p, q, g, split=True)
        lam_G = g.kmag * G
        np.testing.assert_allclose(lam_G, A + B, atol=1e-13 * np.max(np.abs(lam_G)))

    def test_grid_mismatch(self):
        a, b = grid1d(), grid1d(L=1.0)
        with pytest.raises(ValueError):
            ms.compute_G(sc.SpectralField(a, np.zeros(64)), sc.SpectralField(b, np.zeros(64)))

    def test_batched_equals_single(self):
        g = grid1d(32)
        p, q = gaussian_data(g, 1.0)
        P = np.stack([p.coeffs, 2 * p.coeffs])
        Q = np.stack([q.coeffs, q.coeffs])
        G = ms.compute_G_array(P, Q, g)
        np.testing.assert_allclose(G[1], 2 * G[0], atol=1e-18)
        np.testing.assert_allclose(G[0], ms.compute_G(p, q).coeffs, atol=1e-18)


class TestPicard:
    def test_linear_reproduces_propagator(self):
        g = grid1d()
        p, q = gaussian_data(g, 1e-2)
        tr, rep = ms.picard_solve(p, q, 2.0, 16, nonlinear=False)
        for i in (0, 5, 16):
            a, b = sg.apply_linear(p, q, tr.times[i])
            np.testing.assert_array_equal(tr.p[i], a.coeffs)
            np.testing.assert_array_equal(tr.q[i], b.coeffs)
        assert rep.converged and rep.iterations == 1

    def test_small_data_contracts_and_matches_oracle(self):
        g = sc.make_grid(1, 256, 64 * math.pi)
        p, q = gaussian_data(g, 1e-2)
        tr, rep = ms.picard_solve(p, q, 4.0, 64)
        assert rep.converged and rep.max_ratio < 0.5
        assert rep.distances[-1] <= 1e-12
        run = oracle.direct_spectral_ode(p, q, 4.0, rtol=1e-10, times=tr.times)
        assert sup_l2(tr, run.trace, g) <= 1e-6

    def test_fixed_point_residual(self):
        g = grid1d()
        p, q = gaussian_data(g, 1e-2)
        tr, rep = ms.picard_solve(p, q, 2.0, 32, tol=1e-14)
        assert rep.residual <= 1e-14
        assert ms.duhamel_residual(tr) <= 1e-14

    def test_second_order_in_time_step(self):
        g = grid1d()
        p, q = gaussian_data(g, 1.0)
        ref = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-12, times=np.linspace(0, 2, 9))
        errs = []
        for n_t in (16, 32, 64):
            tr, _ = ms.picard_solve(p, q, 2.0, n_t, mode="research")
            sel = slice(None, None, n_t // 8)
            errs.append(float(np.max(sc.norm_array(tr.p[sel] - ref.trace.p, g) + sc.norm_array(tr.q[sel] - ref.trace.q, g))))
        for a, b in zip(errs, errs[1:]):
            assert 3.0 <= a / b <= 5.0

    def test_halving_data_halves_solution(self):
        g = sc.make_grid(1, 256, 64 * math.pi)
        sups = []
        for eps0 in (1e-2, 5e-3):
            p, q = gaussian_data(g, eps0)
            tr, _ = ms.picard_solve(p, q, 4.0, 32)
            sups.append(float(np.max(sc.norm_array(tr.p, g))))
        assert sups[1] / sups[0] == pytest.approx(0.5, rel=0.1)

    def test_non_contraction_aborts(self):
        g = sc.make_grid(1, 32, 4 * math.pi)
        p, q = gaussian_data(g, 30.0, width=0.15)
        with pytest.raises(ms.ContractionError) as info:
            ms.picard_solve(p, q, 4.0, 32, mode="research")
        assert len(info.value.report.ratios) >= 3
        assert all(r >= 1 for r in info.value.report.ratios[-3:])

    def test_strict_mode_gate(self):
        g = grid1d()
        p, q = gaussian_data(g, 0.1)
        with pytest.raises(ms.SmallnessError):
            ms.picard_solve(p, q, 1.0, 8)

    def test_research_mode_logs(self, caplog):
        g = grid1d()
        p, q = gaussian_data(g, 0.1)
        with caplog.at_level(logging.WARNING):
            _, rep = ms.picard_solve(p, q, 1.0, 8, mode="research")
        assert not rep.smallness_ok
        assert any("smallness" in r.message for r in caplog.records)

    def test_preconditions(self):
        g = grid1d()
        p, q = gaussian_data(g, 1e-2)
        with pytest.raises(ValueError):
            ms.picard_solve(p, q, 1.0, 4)
        with pytest.raises(ValueError):
            ms.picard_solve(p, q, 0.0, 16)
        bad = p.coeffs.copy()
        bad[0] = 1.0
        with pytest.raises(ValueError):
            ms.picard_solve(sc.SpectralField(g, bad), q, 1.0, 16)


class TestEtd:
    def test_linear_exact_for_any_step(self):
        g = grid1d()
        p, q = gaussian_data(g, 1.0)
        for dt in (0.5, 0.1):
            tr = ms.etd_march(p, q, 2.0, dt, nonlinear=False)
            a, b = sg.apply_linear(p, q, 2.0)
            scale = np.max(np.abs(a.coeffs))
            assert np.max(np.abs(tr.p[-1] - a.coeffs)) <= 1e-13 * scale
            assert np.max(np.abs(tr.q[-1] - b.coeffs)) <= 1e-13 * scale

    @pytest.mark.parametrize("order,lo,hi", [(2, 3.0, 5.0), (1, 1.6, 2.4)])
    def test_convergence_order(self, order, lo, hi):
        g = grid1d()
        p, q = gaussian_data(g, 1.0)
        ref = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-12, times=np.linspace(0, 2, 9))
        errs = []
        for n in (16, 32, 64):
            tr = ms.etd_march(p, q, 2.0, 2.0 / n, order=order)
            sel = slice(None, None, n // 8)
            errs.append(float(np.max(sc.norm_array(tr.p[sel] - ref.trace.p, g) + sc.norm_array(tr.q[sel] - ref.trace.q, g))))
        for a, b in zip(errs, errs[1:]):
            assert lo <= a / b <= hi

    def test_agrees_with_picard(self):
        g = grid1d()
        p, q = gaussian_data(g, 1e-2)
        tr_p, _ = ms.picard_solve(p, q, 2.0, 32)
        tr_e = ms.etd_march(p, q, 2.0, 2.0 / 32, corrections=4)
        assert sup_l2(tr_p, tr_e, g) <= 1e-12

    def test_small_data_close_to_linear(self):
        g = sc.make_grid(1, 256, 64 * math.pi)
        eps0 = 1e-2
        p, q = gaussian_data(g, eps0)
        tr = ms.etd_march(p, q, 4.0, 1 / 16)
        lp, _ = ms.linear_trace(p.coeffs, q.coeffs, g, tr.times)
        gap = np.abs(sc.norm_array(tr.p, g) - sc.norm_array(lp, g))
        assert np.max(gap) <= eps0**2

    def test_nan_detection(self, monkeypatch):
        g = grid1d(16)
        p, q = gaussian_data(g, 1e-2)

        def broken(p_hat, q_hat, grid, **kw):
            out = np.zeros_like(p_hat)
            out[..., 3] = np.nan
            return out

        monkeypatch.setattr(ms, "compute_G_array", broken)
        with pytest.raises(FloatingPointError, match=r"mode index \(3,\)"):
            ms.etd_march(p, q, 1.0, 0.25)


class TestVariables:
    def test_trivial_state(self):
        g = grid1d(16)
        u = sc.PhysicalField(g, np.full(g.shape, 1.3))
        v = sc.PhysicalField(g, np.ones(g.shape))
        p, q = ms.uv_to_pq(u, v, ms.ModelParams(u_bar=1.3))
        assert np.max(np.abs(p.coeffs)) <= 1e-15 and np.max(np.abs(q.coeffs)) == 0

    def test_cosine_potential(self):
        g = grid1d(32)
        (x,) = g.coordinates()
        u = sc.PhysicalField(g, np.ones(g.shape))
        v = sc.PhysicalField(g, np.exp(np.cos(g.k_min * x)))
        _, q = ms.uv_to_pq(u, v)
        big = np.abs(q.coeffs) > 1e-12
        assert np.count_nonzero(big) == 2
        np.testing.assert_allclose(np.abs(q.coeffs[[1, -1]]), g.k_min / 2, rtol=1e-12)

    def test_round_trip(self):
        g = sc.make_grid(2, 16, 2 * math.pi)
        X, Y = g.coordinates()
        u0 = sc.PhysicalField(g, 1.0 + 0.1 * np.sin(X) * np.cos(2 * Y))
        v0 = sc.PhysicalField(g, 2.0 * np.exp(0.2 * np.cos(X + Y)))
        params = ms.infer_params(u0, v0, mu=0.5)
        p, q = ms.uv_to_pq(u0, v0, params)
        u1, v1 = ms.pq_to_uv(ms.SolutionState(0.0, p, q), params)
        np.testing.assert_allclose(u1.values, u0.values, atol=1e-10)
        np.testing.assert_allclose(v1.values, v0.values, rtol=1e-10)
        # with unit gauge the reconstruction is v0 divided by its geometric mean
        _, v2 = ms.pq_to_uv(ms.SolutionState(0.0, p, q), ms.ModelParams(mu=0.5, u_bar=params.u_bar, c_gauge=1.0))
        np.testing.assert_allclose(v2.values, v0.values / params.c_gauge, rtol=1e-10)

    def test_gauge_invariance(self):
        g = grid1d(32)
        (x,) = g.coordinates()
        u0 = sc.PhysicalField(g, 1 + 0.1 * np.cos(g.k_min * x))
        v0 = sc.PhysicalField(g, np.exp(0.3 * np.sin(g.k_min * x)))
        p1, q1 = ms.uv_to_pq(u0, v0)
        p2, q2 = ms.uv_to_pq(u0, sc.PhysicalField(g, 7.5 * v0.values))
        np.testing.assert_array_equal(p1.coeffs, p2.coeffs)
        assert np.max(np.abs(q1.coeffs - q2.coeffs)) <= 1e-14 * np.max(np.abs(q1.coeffs))

    def test_nonpositive_v_rejected(self):
        g = grid1d(8)
        with pytest.raises(ValueError):
            ms.uv_to_pq(sc.PhysicalField(g, np.ones(8)), sc.PhysicalField(g, np.zeros(8)))

    def test_flat_v(self):
        g = grid1d(8)
        z = sc.SpectralField(g, np.zeros(8, dtype=complex))
        params = ms.ModelParams(mu=1.5, u_bar=1.0, c_gauge=3.0)
        _, v = ms.pq_to_uv(ms.SolutionState(2.0, z, z), params)
        np.testing.assert_allclose(v.values, 3.0 * math.exp(-1.0), rtol=1e-15)
        _, v = ms.pq_to_uv(ms.SolutionState(5.0, z, z), ms.ModelParams(mu=1.0, u_bar=1.0, c_gauge=3.0))
        np.testing.assert_allclose(v.values, 3.0, rtol=1e-15)

    def test_params_validation(self):
        for kw in ({"mu": -1}, {"u_bar": 0}, {"c_gauge": -2}):
            with pytest.raises(ValueError):
                ms.ModelParams(**kw)


class TestTrace:
    def test_rejects_unsorted_times(self):
        g = grid1d(8)
        z = np.zeros((2, 8), dtype=complex)
        with pytest.raises(ValueError):
            ms.SolutionTrace(g, np.array([1.0, 0.5]), z, z)

    def test_states(self):
        g = grid1d(8)
        z = np.zeros((3, 8), dtype=complex)
        tr = ms.SolutionTrace(g, np.array([0.0, 1.0, 2.0]), z, z)
        assert [s.t for s in tr.states()] == [0.0, 1.0, 2.0]
        assert tr.final().t == 2.0
