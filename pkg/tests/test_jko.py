import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omegaflow.energies import Energy, Kernel, POTENTIALS
from omegaflow.jko import (
    FlowTrajectory,
    JkoConfig,
    JkoError,
    flow,
    flow_time_dependent,
    isotonic_project,
    proximal_step,
    quantile_w2,
    rescaled_intermediate,
)
from omegaflow.measures import GridDensity, QuantileMeasure, lp_norm, make_atomic, to_quantile
from omegaflow.transport import w2_1d, w2_exact
from omegaflow.verify import (
    capped_aggregation_energy,
    dirac_state,
    entropy_energy,
    ks_surrogate_energy,
    quadratic_energy,
    uniform_state,
)


def isotonic_oracle(values, weights, min_gaps):
    """Exact projection by enumerating active constraint sets (small n)."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    n = len(v)
    g = np.zeros(n - 1) if min_gaps is None else np.asarray(min_gaps, float)
    offsets = np.concatenate([[0.0], np.cumsum(g)])
    z = v - offsets
    best, best_val = None, math.inf
    for active in itertools.product([0, 1], repeat=n - 1):
        # blocks of indices forced equal in z-coordinates
        blocks = [[0]]
        for i, a in enumerate(active):
            if a:
                blocks[-1].append(i + 1)
            else:
                blocks.append([i + 1])
        y = np.empty(n)
        for blk in blocks:
            y[blk] = np.sum(w[blk] * z[blk]) / np.sum(w[blk])
        if np.any(np.diff(y) < -1e-12):
            continue
        val = float(np.sum(w * (y - z) ** 2))
        if val < best_val - 1e-15:
            best_val = val
            best = y
    return best + offsets


class TestIsotonicProject:
    def test_feasible_unchanged(self):
        x = isotonic_project([0.0, 1.0, 3.0], None, [0.5, 0.5])
        assert np.allclose(x, [0.0, 1.0, 3.0])

    def test_two_point_pool(self):
        assert np.allclose(isotonic_project([1.0, 0.0]), [0.5, 0.5])

    def test_two_point_gap(self):
        assert np.allclose(isotonic_project([1.0, 0.0], None, [1.0]), [0.0, 1.0])

    def test_weighted_two_point(self):
        # KKT by hand: minimize w1(x1-1)^2 + w2(x2-0)^2 with x1 <= x2
        x = isotonic_project([1.0, 0.0], [3.0, 1.0])
        pooled = (3.0 * 1.0 + 1.0 * 0.0) / 4.0
        assert np.allclose(x, [pooled, pooled])

    def test_matches_active_set_oracle(self, rng):
        for _ in range(40):
            n = int(rng.integers(2, 7))
            v = rng.normal(size=n)
            w = rng.uniform(0.2, 2.0, size=n)
            g = rng.uniform(0.0, 0.5, size=n - 1)
            got = isotonic_project(v, w, g)
            ref = isotonic_oracle(v, w, g)
            assert np.max(np.abs(got - ref)) <= 1e-10

    @given(st.integers(2, 30), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_kkt_conditions(self, n, seed):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=n)
        w = rng.uniform(0.2, 2.0, size=n)
        g = rng.uniform(0.0, 0.3, size=n - 1)
        x = isotonic_project(v, w, g)
        # feasibility
        assert np.all(np.diff(x) - g >= -1e-12)
        # stationarity: lambda_i = lambda_{i-1} - 2 w_i (x_i - v_i)
        # with lambda_0 = lambda_n = 0, lambda_i >= 0, compl. slackness
        lam = 0.0
        for i in range(n):
            lam = lam - 2.0 * w[i] * (x[i] - v[i])
            if i < n - 1:
                assert lam >= -1e-10
                slack = (x[i + 1] - x[i]) - g[i]
                assert abs(lam * slack) <= 1e-8
        assert abs(lam) <= 1e-10


class TestProximalStep:
    def test_tau_zero_identity(self):
        mu = dirac_state(1.0, 4)
        assert proximal_step(quadratic_energy(), mu, 0.0) is mu

    def test_quadratic_dirac_closed_form(self):
        for a, tau in ((1.7, 0.25), (-0.9, 0.04), (2.4, 1.5)):
            out = proximal_step(quadratic_energy(), dirac_state(a, 8), tau,
                                JkoConfig(tau=tau, inner_tol=1e-12))
            assert np.max(np.abs(out.positions - a / (1.0 + tau))) <= 1e-10

    def test_atomic_input_round_trip(self):
        mu = make_atomic([1.0, 1.0], [0.5, 0.5])
        out = proximal_step(quadratic_energy(), mu, 0.5,
                            JkoConfig(tau=0.5, inner_tol=1e-11))
        assert isinstance(out, type(mu))
        assert np.max(np.abs(out.points - 1.0 / 1.5)) <= 1e-9

    def test_capped_step_stays_feasible(self):
        E = capped_aggregation_energy(2.0)
        mu = uniform_state(-1.0, 1.0, 32)
        out = proximal_step(E, mu, 0.2, JkoConfig(tau=0.2, inner_tol=1e-9))
        assert lp_norm(out, math.inf) <= 2.0 + 1e-8

    def test_objective_not_worse_than_stay(self):
        E = ks_surrogate_energy(2.0)
        mu = uniform_state(-0.7, 0.7, 32)
        tau = 0.05
        out = proximal_step(E, mu, tau, JkoConfig(tau=tau, inner_tol=1e-9))
        obj_out = 0.5 / tau * quantile_w2(mu, out) ** 2 + E.eval(out)
        assert obj_out <= E.eval(mu) + 1e-9

    def test_2d_quadratic_contraction(self, rng):
        pts = rng.normal(size=(6, 2))
        mu = make_atomic(pts, np.ones(6))
        tau = 0.3
        out = proximal_step(quadratic_energy(), mu, tau,
                            JkoConfig(tau=tau, inner_tol=1e-9))
        # V = |x|^2/2 acts per atom: positions shrink by 1/(1+tau)
        got = out.points_2d()
        expect = mu.points_2d() / (1.0 + tau)
        # match up to reordering: compare sorted first coordinates
        assert np.max(np.abs(np.sort(got[:, 0]) - np.sort(expect[:, 0]))) <= 1e-6

    def test_2d_atom_cap(self, rng):
        pts = rng.normal(size=(80, 2))
        mu = make_atomic(pts, np.ones(80))
        with pytest.raises(JkoError):
            proximal_step(quadratic_energy(), mu, 0.1)


class TestFlow:
    def test_dirac_chain_closed_form(self):
        tau, n = 0.1, 10
        tr = flow(quadratic_energy(), dirac_state(1.0, 4),
                  JkoConfig(tau=tau, steps=n, inner_tol=1e-12))
        expect = (1.0 + tau) ** -n
        assert abs(tr.states[-1].positions[0] - expect) <= 1e-9

    def test_refinement_approaches_exponential(self):
        t = 1.0
        errs = []
        for n in (16, 64, 256):
            tr = flow(quadratic_energy(), dirac_state(1.0, 2),
                      JkoConfig(tau=t / n, steps=n, inner_tol=1e-11))
            errs.append(abs(tr.states[-1].positions[0] - math.exp(-t)))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 2.0 / 256

    def test_zero_energy_constant(self):
        E = Energy()
        tr = flow(E, uniform_state(-1, 1, 16), JkoConfig(tau=0.1, steps=4))
        for s in tr.states[1:]:
            assert quantile_w2(tr.states[0], s) <= 1e-9

    def test_energy_descent_and_onestep_bound(self):
        E = ks_surrogate_energy(2.0)
        cfg = JkoConfig(tau=0.04, steps=15, inner_tol=1e-9)
        tr = flow(E, uniform_state(-0.8, 0.8, 32), cfg)
        assert np.all(np.diff(tr.energies) <= cfg.inner_tol * cfg.tau + 1e-12)
        for k in range(1, len(tr.states)):
            drop = tr.energies[k - 1] - tr.energies[k]
            assert tr.step_distances[k - 1] ** 2 <= 2 * cfg.tau * drop + 1e-9

    def test_nstep_drift_bound(self):
        E = ks_surrogate_energy(2.0)
        cfg = JkoConfig(tau=0.04, steps=15, inner_tol=1e-9)
        mu0 = uniform_state(-0.8, 0.8, 32)
        tr = flow(E, mu0, cfg)
        c_mu = tr.energies[0] - tr.energies.min()
        n = cfg.steps
        assert quantile_w2(mu0, tr.states[-1]) \
            <= math.sqrt(2 * n * cfg.tau * c_mu) + 1e-6

    def test_determinism(self):
        E = ks_surrogate_energy(2.0)
        cfg = JkoConfig(tau=0.05, steps=6, inner_tol=1e-9)
        tr1 = flow(E, uniform_state(-0.8, 0.8, 24), cfg)
        tr2 = flow(E, uniform_state(-0.8, 0.8, 24), cfg)
        for a, b in zip(tr1.states, tr2.states):
            assert np.array_equal(a.positions, b.positions)

    def test_constraint_preserved_along_flow(self):
        E = capped_aggregation_energy(2.0)
        tr = flow(E, uniform_state(-1, 1, 32),
                  JkoConfig(tau=0.05, steps=20, inner_tol=1e-9))
        assert tr.max_constraint_violation(math.inf, 2.0) <= 1e-8


class TestTimeDependent:
    @staticmethod
    def _sin_schedule(k, tau):
        t = k * tau
        scale = 1.0 + 0.5 * math.sin(t)
        from omegaflow.energies import Potential
        pot = Potential("sq", lambda x, s=scale: 0.5 * s * np.asarray(x) ** 2,
                        lambda x, s=scale: s * np.asarray(x), convex=True)
        return Energy(potential=pot)

    def test_constant_schedule_matches_flow(self):
        E = quadratic_energy()
        cfg = JkoConfig(tau=0.1, steps=6, inner_tol=1e-11)
        tr_a = flow(E, dirac_state(1.0, 4), cfg)
        tr_b = flow_time_dependent(lambda k, tau: E, dirac_state(1.0, 4), cfg)
        for a, b in zip(tr_a.states, tr_b.states):
            assert np.array_equal(a.positions, b.positions)

    def test_frozen_schedule_matches_flow_at_t0(self):
        frozen = self._sin_schedule(0, 0.1)
        cfg = JkoConfig(tau=0.1, steps=5, inner_tol=1e-11)
        tr_a = flow(frozen, dirac_state(1.0, 4), cfg)
        tr_b = flow_time_dependent(lambda k, tau: frozen, dirac_state(1.0, 4), cfg)
        for a, b in zip(tr_a.states, tr_b.states):
            assert np.array_equal(a.positions, b.positions)

    def test_refinements_cauchy(self):
        t = 1.0
        ref = flow_time_dependent(self._sin_schedule, dirac_state(1.0, 2),
                                  JkoConfig(tau=t / 1024, steps=1024,
                                            inner_tol=1e-10)).states[-1]
        errs = {}
        for n in (32, 64, 128):
            tr = flow_time_dependent(self._sin_schedule, dirac_state(1.0, 2),
                                     JkoConfig(tau=t / n, steps=n,
                                               inner_tol=1e-10))
            errs[n] = quantile_w2(tr.states[-1], ref)
        assert errs[32] / errs[64] >= 1.2
        assert errs[64] / errs[128] >= 1.2


class TestRescaledIntermediate:
    def test_h_equals_tau_returns_mu(self):
        mu = uniform_state(-1, 1, 8)
        nu = uniform_state(-0.5, 0.5, 8)
        out = rescaled_intermediate(mu, nu, None, 0.3, 0.3)
        assert np.allclose(out.positions, mu.positions)

    def test_h_zero_returns_mu_tau(self):
        mu = uniform_state(-1, 1, 8)
        nu = uniform_state(-0.5, 0.5, 8)
        out = rescaled_intermediate(mu, nu, None, 0.0, 0.3)
        assert np.allclose(out.positions, nu.positions)

    def test_lemma_verification_quadratic(self):
        # J_h applied to the partial displacement returns mu_tau
        E = quadratic_energy()
        tau, h = 0.2, 0.1
        mu = dirac_state(1.0, 4)
        cfg = JkoConfig(tau=tau, inner_tol=1e-11)
        mu_tau = proximal_step(E, mu, tau, cfg)
        nu = rescaled_intermediate(mu, mu_tau, None, h, tau)
        back = proximal_step(E, nu, h, cfg)
        assert quantile_w2(back, mu_tau) <= 1e-5

    def test_h_out_of_range(self):
        mu = uniform_state(-1, 1, 8)
        with pytest.raises(JkoError):
            rescaled_intermediate(mu, mu, None, 0.5, 0.3)

    def test_atomic_with_plan(self):
        mu = make_atomic([0.0, 1.0], [0.5, 0.5])
        nu = make_atomic([2.0, 3.0], [0.5, 0.5])
        _, plan = w2_1d(mu, nu)
        mid = rescaled_intermediate(mu, nu, plan, 0.15, 0.3)
        # half displacement toward nu
        assert np.allclose(np.sort(mid.points), [1.0, 2.0])


class TestGridParametrization:
    def test_grid_round_trip_step(self):
        E = quadratic_energy()
        g = GridDensity(-0.5, 0.01, np.ones(100))
        out = proximal_step(E, g, 0.1, JkoConfig(tau=0.1, inner_tol=1e-10,
                                                 n_nodes=128,
                                                 parametrization="grid"))
        assert isinstance(out, GridDensity)
        assert out.spacing == g.spacing
        assert abs(out.cell_masses().sum() - 1.0) <= 1e-9
        assert E.eval(out) < E.eval(g)

    def test_grid_cross_validates_quantile(self):
        E = quadratic_energy()
        g = GridDensity(-0.5, 0.01, np.ones(100))
        cfg = JkoConfig(tau=0.1, inner_tol=1e-10, n_nodes=128)
        out_grid = proximal_step(E, g, 0.1, cfg)
        out_q = proximal_step(E, to_quantile(g, 128), 0.1, cfg)
        d = w2_1d(out_grid, out_q, return_plan=False)
        assert d <= 0.02  # grid resolution scale


class TestPenaltyMode:
    def test_finite_p_cap_respected(self):
        E = Energy(kernel=Kernel("newtonian", d=1, c=2.0),
                   constraint=(4.0, 1.2))
        mu = uniform_state(-0.6, 0.6, 32)  # ||rho||_4 < 1.2 initially
        cfg = JkoConfig(tau=0.1, steps=8, inner_tol=1e-8)
        tr = flow(E, mu, cfg)
        for s in tr.states:
            assert lp_norm(s, 4.0) <= 1.2 * (1.0 + 2e-6)
        flags = [d.get("penalty_flag", False) for d in tr.diagnostics]
        assert not any(flags)


class TestConfigValidation:
    def test_bad_tau(self):
        with pytest.raises(JkoError):
            JkoConfig(tau=-1.0)

    def test_bad_parametrization(self):
        with pytest.raises(JkoError):
            JkoConfig(parametrization="spectral")
