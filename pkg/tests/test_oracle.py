import math

import numpy as np
import pytest

from kssolver import mild_solver as ms
from kssolver import oracle
from kssolver import semigroup as sg
from kssolver import spectral_core as sc
from kssolver.initial_data import gaussian_data


class TestExpm:
    def test_identity_at_zero_time(self):
        np.testing.assert_allclose(oracle.expm2x2(0.0, 3.0), np.eye(2), atol=0)

    def test_identity_at_zero_wavenumber(self):
        for t in (0.5, 10.0):
            np.testing.assert_allclose(oracle.expm2x2(t, 0.0), np.eye(2), atol=0)

    def test_degenerate_entry(self):
        E = oracle.expm2x2(1.0, 2.0)
        assert E[0, 0] == pytest.approx(-math.exp(-2), rel=1e-13)
        assert E[0, 0] == pytest.approx(sg.m12(1.0, 2.0).m1, rel=1e-13)

    def test_batched_against_formula(self):
        rng = np.random.default_rng(7)
        t = rng.uniform(0, 20, 2000)
        k = 10 ** rng.uniform(-3, 3, 2000)
        k[:200] = 2 + rng.uniform(-1e-6, 1e-6, 200)
        assert np.max(np.abs(oracle.expm2x2(t, k) - sg.propagator(t, k))) <= 1e-10

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            oracle.expm2x2(-1.0, 1.0)


class TestDirectOde:
    def test_linear_matches_propagator(self):
        g = sc.make_grid(2, 16, 4 * math.pi)
        p, q = gaussian_data(g, 1.0)
        times = np.linspace(0, 2, 9)
        run = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-10, times=times, nonlinear=False)
        lp, lq = ms.linear_trace(p.coeffs, q.coeffs, g, times)
        err = sc.norm_array(run.trace.p - lp, g) + sc.norm_array(run.trace.q - lq, g)
        assert np.max(err) <= 1e-9 * (sc.norm(p) + sc.norm(q))

    def test_zero_data(self):
        g = sc.make_grid(1, 16, 2 * math.pi)
        z = sc.SpectralField(g, np.zeros(16, dtype=complex))
        run = oracle.direct_spectral_ode(z, z, 1.0)
        assert np.all(run.trace.p == 0) and np.all(run.trace.q == 0)

    def test_tolerance_self_consistency(self):
        g = sc.make_grid(1, 64, 8 * math.pi)
        p, q = gaussian_data(g, 0.5)
        times = np.linspace(0, 2, 5)
        a = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-8, times=times)
        b = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-10, times=times)
        d = sc.norm_array(a.trace.p - b.trace.p, g) + sc.norm_array(a.trace.q - b.trace.q, g)
        assert np.max(d) <= 1e-7

    def test_error_estimate_covers_defect(self):
        g = sc.make_grid(1, 32, 4 * math.pi)
        p, q = gaussian_data(g, 1.0)
        run = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-8, estimate_error=True)
        ref = oracle.direct_spectral_ode(p, q, 2.0, rtol=1e-12)
        obs = np.max(sc.norm_array(run.trace.p - ref.trace.p, g) + sc.norm_array(run.trace.q - ref.trace.q, g))
        assert np.isfinite(run.error_estimate)
        assert run.error_estimate >= 0.5 * obs

    def test_fd_variant_converges_to_spectral(self):
        errs = []
        for n in (16, 32):
            g = sc.make_grid(1, n, 2 * math.pi)
            (x,) = g.coordinates()
            p = sc.fft_array(np.sin(x) + 0.3 * np.cos(2 * x), g)
            q = sc.fft_array(np.cos(x) - 0.2 * np.sin(3 * x), g)
            a = ms.compute_G_array(p, q, g)
            errs.append(sc.norm_array(a - oracle.fd_G_1d(p, q, g), g) / sc.norm_array(a, g))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.25)

    def test_fd_trace_close_to_spectral_trace(self):
        g = sc.make_grid(1, 32, 4 * math.pi)
        p, q = gaussian_data(g, 1.0)
        a = oracle.direct_spectral_ode(p, q, 1.0, rtol=1e-9)
        b = oracle.direct_spectral_ode(p, q, 1.0, rtol=1e-9, g_method="fd")
        lin = oracle.direct_spectral_ode(p, q, 1.0, rtol=1e-9, nonlinear=False)
        d = np.max(sc.norm_array(a.trace.p - b.trace.p, g))
        nonlin = np.max(sc.norm_array(a.trace.p - lin.trace.p, g))
        assert d < 0.2 * nonlin

    def test_fd_requires_1d(self):
        g = sc.make_grid(2, 8, 1.0)
        with pytest.raises(ValueError):
            oracle.fd_G_1d(np.zeros(g.shape), np.zeros(g.shape), g)
