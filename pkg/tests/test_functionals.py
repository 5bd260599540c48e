"""Free energy, entropy production, and the two Hessian quadratic forms."""

import math

import numpy as np
import pytest

from flocklab import (
    GridDensity,
    LineGrid,
    ModelParams,
    PolarGrid,
    SupportMismatchError,
    csiszar_kullback_gap,
    discrete_reference,
    eta,
    fisher_information,
    fourth_moment_bound,
    free_energy,
    free_energy_lower_bound,
    free_energy_second_form,
    gibbs_density,
    gibbs_state,
    h_function,
    make_stationary,
    potential,
    q1_form,
    q2_form,
    relative_entropy,
    self_consistent_mean,
)

P1 = ModelParams(1, 2.0, 0.3)
G1 = LineGrid(4.0, 512)


def random_density(geometry, rng, rough=1.0):
    raw = np.exp(rough * rng.standard_normal(geometry.n_cells))
    raw *= np.exp(-geometry.speeds**2)   # keep the tails representable
    return GridDensity.normalized(geometry, raw)


def mean_zero_perturbation(ref, rng):
    g = rng.standard_normal(ref.w.size)
    return g - float(g @ ref.w)


class TestFreeEnergy:

    def test_value_at_discrete_fixed_point(self):
        # F[f_u] collapses to u^2/2 - D log Z_h at the grid fixed point
        uh = self_consistent_mean(G1, P1, 0.8)
        f = gibbs_density(G1, P1, uh)
        psi = potential(G1.speeds, P1) - uh * G1.v1
        m = (-psi / P1.D) + np.log(G1.measures)
        top = m.max()
        log_z = top + math.log(np.exp(m - top).sum())
        assert free_energy(f, P1) == pytest.approx(
            0.5 * uh * uh - P1.D * log_z, rel=1e-13)

    def test_lower_bound_on_random_densities(self):
        rng = np.random.default_rng(11)
        for geom, p in [(G1, P1), (PolarGrid(2, 3.0, 48, 16),
                                   ModelParams(2, 2.0, 0.25))]:
            floor = free_energy_lower_bound(p)
            for _ in range(25):
                f = random_density(geom, rng)
                assert free_energy(f, p) >= floor - 1e-12

    def test_stationary_state_minimizes(self):
        uh = self_consistent_mean(G1, P1, 0.8)
        best = free_energy(gibbs_density(G1, P1, uh), P1)
        rng = np.random.default_rng(3)
        for _ in range(10):
            assert free_energy(random_density(G1, rng), P1) > best
        # the disordered state also sits strictly higher below threshold
        assert free_energy(gibbs_density(G1, P1, 0.0), P1) > best

    def test_second_form_discrepancy_is_alpha_m2(self):
        # the completed-square variant as stated overshoots by exactly
        # alpha int |v|^2 f; flipping that term's sign recovers the
        # first form to roundoff
        rng = np.random.default_rng(5)
        for geom, p in [(G1, P1), (PolarGrid(2, 3.0, 48, 16),
                                   ModelParams(2, 4.0, 0.3))]:
            for _ in range(5):
                f = random_density(geom, rng)
                m2 = float((geom.speeds**2 * f.values) @ geom.measures)
                gap = free_energy_second_form(f, p) - free_energy(f, p)
                assert gap == pytest.approx(p.alpha * m2, rel=1e-12)


class TestRelativeEntropy:

    def test_zero_at_reference(self):
        st = make_stationary(P1, branch="polarized")
        uh = self_consistent_mean(G1, P1, st.u)
        f = gibbs_density(G1, P1, uh)
        assert abs(relative_entropy(f, st)) < 1e-13

    def test_equals_free_energy_gap(self):
        st = make_stationary(P1, branch="polarized")
        uh = self_consistent_mean(G1, P1, st.u)
        fe_ref = free_energy(gibbs_density(G1, P1, uh), P1)
        rng = np.random.default_rng(17)
        for _ in range(5):
            f = random_density(G1, rng)
            gap = free_energy(f, P1) - fe_ref
            assert relative_entropy(f, st) == pytest.approx(
                gap, rel=1e-11, abs=1e-11)

    def test_nonnegative_against_global_minimizer(self):
        st = make_stationary(P1, branch="polarized")
        rng = np.random.default_rng(23)
        for _ in range(10):
            assert relative_entropy(random_density(G1, rng), st) > 0.0

    def test_support_mismatch_raises(self):
        # wide domain at small D: the reference underflows in the far
        # tail while the uniform candidate still carries mass there
        g = LineGrid(8.0, 64)
        f = GridDensity.normalized(g, np.ones(64))
        st = make_stationary(ModelParams(1, 2.0, 0.3), branch="polarized")
        with pytest.raises(SupportMismatchError):
            relative_entropy(f, st)


class TestFisherInformation:

    def test_zero_exactly_at_discrete_stationary(self):
        uh = self_consistent_mean(G1, P1, 0.8)
        f = gibbs_density(G1, P1, uh)
        assert fisher_information(f, P1) == pytest.approx(0.0, abs=1e-22)

    def test_positive_off_equilibrium(self):
        rng = np.random.default_rng(29)
        assert fisher_information(random_density(G1, rng), P1) > 1e-3

    def test_gibbs_state_tilted_by_current_mean(self):
        rng = np.random.default_rng(31)
        f = random_density(G1, rng)
        G = gibbs_state(f, P1)
        direct = gibbs_density(G1, P1, f.mean_velocity()[0])
        assert np.allclose(G.values, direct.values, rtol=1e-13)
        # idempotent exactly at the grid fixed point
        uh = self_consistent_mean(G1, P1, 0.8)
        fixed = gibbs_density(G1, P1, uh)
        again = gibbs_state(fixed, P1)
        assert np.allclose(again.values, fixed.values, rtol=1e-12)


class TestInequalities:

    def test_csiszar_kullback_gap_nonnegative(self):
        rng = np.random.default_rng(37)
        for geom, p in [(G1, P1), (PolarGrid(2, 3.0, 48, 16),
                                   ModelParams(2, 2.0, 0.6))]:
            for _ in range(25):
                f = random_density(geom, rng, rough=0.5)
                assert csiszar_kullback_gap(f, p) >= -1e-13

    def test_fourth_moment_under_cap(self):
        rng = np.random.default_rng(41)
        for _ in range(25):
            f = random_density(G1, rng)
            m4, cap = fourth_moment_bound(f, P1)
            assert 0.0 < m4 < cap


class TestQuadraticForms:

    def setup_method(self):
        self.p = ModelParams(1, 2.0, 0.8)   # disordered regime
        self.ref = discrete_reference(G1, self.p, 0.0)

    def test_q1_expansion_of_free_energy(self):
        # F[f(1+eps g)] - F[f] = eps^2/2 Q1[g] + O(eps^3)
        rng = np.random.default_rng(43)
        g = mean_zero_perturbation(self.ref, rng)
        f0 = gibbs_density(G1, self.p, 0.0)
        eps = 1e-4
        fp = GridDensity(G1, f0.values * (1.0 + eps * g), check=False)
        gap = free_energy(fp, self.p) - free_energy(f0, self.p)
        assert gap == pytest.approx(0.5 * eps**2 * q1_form(g, self.ref),
                                    rel=1e-4)

    def test_q2_expansion_of_fisher(self):
        # Fisher[f(1+eps g)] = eps^2 Q2[g] + O(eps^3); Q2 uses exact
        # face slopes so the two routes agree to the stencil error
        rng = np.random.default_rng(47)
        g = mean_zero_perturbation(self.ref, rng)
        g = np.convolve(g, np.ones(9) / 9.0, mode="same")   # smooth a bit
        g -= float(g @ self.ref.w)
        f0 = gibbs_density(G1, self.p, 0.0)
        eps = 1e-5
        fp = GridDensity(G1, f0.values * (1.0 + eps * g), check=False)
        fish = fisher_information(fp, self.p)
        assert fish == pytest.approx(eps**2 * q2_form(g, self.ref), rel=2e-3)

    def test_q1_norm_equivalence(self):
        # eta ||g||^2 <= Q1[g] <= D ||g||^2 above threshold
        rng = np.random.default_rng(53)
        lo = eta(self.p)
        assert lo > 0
        for _ in range(20):
            g = mean_zero_perturbation(self.ref, rng)
            nsq = float((g * g) @ self.ref.w)
            q1 = q1_form(g, self.ref)
            assert lo * nsq <= q1 <= self.p.D * nsq * (1.0 + 1e-12)

    def test_q1_on_axis_coordinate_meets_eta_scale(self):
        # g = v1 saturates the mean-velocity correction: Q1[v1] equals
        # D (mbar d - D mbar^2 d^2 / D...) reduced here to the dual
        # route through the moment difference, positive iff h < 0
        g = G1.v1 - float(G1.v1 @ self.ref.w)
        q1 = q1_form(g, self.ref)
        assert q1 > 0
        assert np.sign(q1) == -np.sign(h_function(self.p))

    def test_q1_sign_flips_below_threshold(self):
        p = ModelParams(1, 2.0, 0.3)
        ref = discrete_reference(G1, p, 0.0)
        g = G1.v1.copy()
        assert q1_form(g, ref) < 0 < h_function(p)

    def test_mean_zero_precondition_enforced(self):
        with pytest.raises(ValueError, match="average to zero"):
            q1_form(np.ones(G1.N), self.ref)
        with pytest.raises(ValueError, match="average to zero"):
            q2_form(np.ones(G1.N), self.ref)

    def test_q2_dominates_qualitatively(self):
        # both forms are positive on mean-zero data in the stable regime
        rng = np.random.default_rng(59)
        for _ in range(5):
            g = mean_zero_perturbation(self.ref, rng)
            assert q1_form(g, self.ref) > 0
            assert q2_form(g, self.ref) > 0
