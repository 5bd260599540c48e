"""End-to-end acceptance gate.

One test per headline capability, each announcing a single PASS/FAIL
verdict with the measured numbers.  Tolerances are part of the
contract; do not loosen them to make a run green.
"""

import time

import numpy as np

from conftest import record_verdict
from flocklab import (
    GridDensity,
    LineGrid,
    ModelParams,
    SolverConfig,
    assemble_linearized,
    coercivity_constant,
    critical_noise,
    critical_noise_qualitative_suite,
    csiszar_kullback_gap,
    discrete_reference,
    evolve,
    fit_decay_rate,
    free_energy,
    free_energy_lower_bound,
    gibbs_density,
    h_function,
    j_moment,
    make_stationary,
    order_parameter,
    poincare_constant,
    q1_form,
    q2_form,
    special_function_check,
    stationary_moments,
)

PARAM_GRID = [ModelParams(d, a, D)
              for d in (1, 2, 3)
              for a in (0.5, 1.0, 2.0, 4.0, 16.0)
              for D in (0.35, 0.8)]


def random_density(geometry, rng):
    raw = np.exp(rng.standard_normal(geometry.n_cells))
    raw *= np.exp(-geometry.speeds**2)
    return GridDensity.normalized(geometry, raw)


def test_threshold_d1():
    t0 = time.perf_counter()
    ds = critical_noise(1, 2.0)
    elapsed = time.perf_counter() - t0
    ok = abs(ds - 0.529) <= 2e-3 and elapsed < 1.0
    assert record_verdict(
        "threshold d=1 alpha=2",
        ok, f"D*={ds:.9f} (target 0.529+-0.002) in {elapsed:.2f}s")


def test_threshold_d2_both_alphas():
    results = []
    ok = True
    for alpha, target in ((2.0, 0.354), (4.0, 0.398)):
        t0 = time.perf_counter()
        ds = critical_noise(2, alpha)
        elapsed = time.perf_counter() - t0
        ok = ok and abs(ds - target) <= 2e-3 and elapsed < 1.0
        results.append(f"alpha={alpha:g}: {ds:.9f} in {elapsed:.2f}s")
    assert record_verdict("threshold d=2, both stiffnesses", ok,
                          "; ".join(results))


def test_special_function_cross_check():
    worst = 0.0
    for d, a in ((1, 2.0), (2, 2.0), (2, 4.0)):
        chk = special_function_check(d, a)
        worst = max(worst, chk.difference)
    ok = worst <= 1e-4
    assert record_verdict("closed-form threshold routes", ok,
                          f"worst |quadrature - closed form| = {worst:.3e}")


def test_threshold_qualitative_structure():
    rep = critical_noise_qualitative_suite(
        d_values=(1, 2, 3, 4, 5),
        alpha_values=(0.25, 0.5, 1.0, 2.0, 4.0, 16.0))
    n = len(rep.d_values) * len(rep.alpha_values)
    ok = (not rep.violations and rep.bounds_ok and rep.d_monotone_ok
          and rep.alpha_monotone_ok and rep.upper_limit_ok)
    assert record_verdict(
        "threshold bounds and monotonicity", ok,
        f"{n} thresholds, {len(rep.violations)} violations")


def test_moment_identity_suite():
    worst_ipp = 0.0
    min_square = np.inf
    for p in PARAM_GRID:
        for n in range(11):
            lhs = (p.alpha * j_moment(n + 4, p)
                   + (1.0 - p.alpha) * j_moment(n + 2, p))
            rhs = (n + 1) * p.D * j_moment(n, p)
            worst_ipp = max(worst_ipp, abs(lhs - rhs) / abs(rhs))
            combo = (j_moment(n + 5, p) - 2.0 * j_moment(n + 3, p)
                     + j_moment(n + 1, p))
            min_square = min(min_square, combo)
    ok = worst_ipp <= 1e-8 and min_square > 0.0
    assert record_verdict(
        "integration-by-parts and square positivity", ok,
        f"30-point grid, n=0..10: worst rel err {worst_ipp:.3e}, "
        f"smallest square moment {min_square:.3e}")


def test_moment_lemma_suite():
    sign_ok = True
    for d in (1, 2):
        ds = critical_noise(d, 2.0)
        for fac in (0.8, 0.95, 1.05, 1.2):
            p = ModelParams(d, 2.0, fac * ds)
            m = stationary_moments(0.0, p)
            sign_ok = sign_ok and (
                np.sign(m.speed_sq - d * p.D) == np.sign(h_function(p)))

    long_ok = True
    worst_trans = 0.0
    for d, a in ((2, 2.0), (2, 4.0)):
        ds = critical_noise(d, a)
        st = make_stationary(ModelParams(d, a, 0.7 * ds),
                             branch="polarized")
        var_long = st.moments.v1_sq - st.u**2
        long_ok = long_ok and 0.0 < var_long < st.params.D
        trans = st.moments.vperp_sq_total / (d - 1)
        worst_trans = max(worst_trans,
                          abs(trans / st.params.D - 1.0))
    st1 = make_stationary(ModelParams(1, 2.0, 0.3), branch="polarized")
    long_ok = long_ok and (st1.moments.v1_sq - st1.u**2) < 0.3

    ok = sign_ok and long_ok and worst_trans <= 1e-6
    assert record_verdict(
        "stationary moment inequalities", ok,
        f"disordered-variance signs ok={sign_ok}, longitudinal<D "
        f"ok={long_ok}, transverse rel err {worst_trans:.3e}")


def test_ordered_branch_continuity():
    ds = critical_noise(1, 2.0)
    us = [order_parameter(ModelParams(1, 2.0, ds - 10.0**(-k)))
          for k in range(2, 6)]
    ok = all(u > 0 for u in us) and all(a > b for a, b in
                                        zip(us, us[1:]))
    assert record_verdict(
        "order parameter vanishes continuously", ok,
        "u(D*-10^-k) = " + ", ".join(f"{u:.3e}" for u in us))


def test_pde_suite_disordered():
    t0 = time.perf_counter()
    p = ModelParams(1, 2.0, 0.8)
    g = LineGrid(4.0, 512)

    # invariance of the discrete stationary profile
    iso = gibbs_density(g, p, 0.0)
    tr0 = evolve(iso, p, SolverConfig(dt=0.01, t_final=5.0))
    drift = float(np.max(np.abs(tr0.final.values - iso.values)))
    per_step = drift / tr0.n_steps

    # relaxation of a perturbed start, with mass and energy audits
    bump = 1.0 + 0.05 * np.tanh(g.v1)
    f0 = GridDensity.normalized(g, iso.values * bump)
    st = make_stationary(p, branch="isotropic")
    tr = evolve(f0, p, SolverConfig(dt=0.005, t_final=50.0,
                                    diagnostics_stride=10),
                references={"stationary": st})
    mass_drift = float(np.max(np.abs(tr.mass - 1.0)))
    fe_slack = float(np.max(np.diff(tr.free_energy)))

    fit = fit_decay_rate(tr, "stationary")
    cc = coercivity_constant(discrete_reference(g, p, 0.0))
    ratio = fit.rate / (2.0 * cc.c_opt)
    elapsed = time.perf_counter() - t0

    ok = (mass_drift <= 1e-10 and fe_slack <= 1e-12
          and per_step <= 1e-12 and abs(ratio - 1.0) <= 0.15
          and elapsed < 120.0)
    assert record_verdict(
        "relaxation toward the disordered state", ok,
        f"mass drift {mass_drift:.1e}, energy slack {fe_slack:.1e}, "
        f"stationary drift/step {per_step:.1e}, fitted/predicted rate "
        f"{fit.rate:.6f}/{2 * cc.c_opt:.6f} = {ratio:.4f}, "
        f"{elapsed:.0f}s")


def test_pde_suite_polarized():
    p = ModelParams(1, 2.0, 0.3)
    g = LineGrid(4.0, 512)
    f0 = gibbs_density(g, p, 0.6)
    precondition = free_energy(f0, p) < free_energy(
        gibbs_density(g, p, 0.0), p)
    tr = evolve(f0, p, SolverConfig(dt=0.01, t_final=100.0))
    gap = abs(tr.mean1[-1] - order_parameter(p))
    ok = precondition and gap <= 1e-4
    assert record_verdict(
        "relaxation toward the ordered state", ok,
        f"asymmetric start below the disordered energy: {precondition}, "
        f"|u_f(100) - u(D)| = {gap:.2e}")


def test_spectral_suite():
    p = ModelParams(1, 2.0, 0.8)
    g = LineGrid(4.0, 512)
    ref = discrete_reference(g, p, 0.0)
    asm = assemble_linearized(ref)
    sa = asm.selfadjoint_residual

    rng = np.random.default_rng(2026)
    worst_form = 0.0
    for _ in range(10):
        gv = rng.standard_normal(g.N)
        gv -= float(gv @ ref.w)
        h = gv * ref.sqrt_w
        q2 = q2_form(gv, ref)
        worst_form = max(worst_form,
                         abs(float(h @ asm.apply_A(h)) - q2) / abs(q2))

    ds = critical_noise(1, 2.0)
    q1_sign = []
    for D in (ds - 0.02, ds + 0.02):
        pD = ModelParams(1, 2.0, D)
        refD = discrete_reference(g, pD, 0.0)
        gv = g.v1 - float(g.v1 @ refD.w)
        q1_sign.append(q1_form(gv, refD))
    sign_ok = q1_sign[0] < 0.0 < q1_sign[1]

    c = coercivity_constant(ref).c_opt
    naive = p.D * poincare_constant(g, p, 0.0, refine=False).value
    slack = 0.05 * naive
    bound_ok = c >= naive - slack

    ok = sa <= 1e-10 and worst_form <= 1e-10 and sign_ok and bound_ok
    assert record_verdict(
        "linearized operator audit", ok,
        f"self-adjointness {sa:.1e}, worst form mismatch "
        f"{worst_form:.1e}, axis-mode sign change {sign_ok}, "
        f"c_opt {c:.6f} vs noise-scaled gap {naive:.6f} "
        f"(required >= {naive - slack:.6f}: {bound_ok})")


def test_free_energy_suite():
    p = ModelParams(1, 2.0, 0.3)
    g = LineGrid(4.0, 256)
    floor = free_energy_lower_bound(p)
    rng = np.random.default_rng(7)
    worst_floor = np.inf
    worst_ck = np.inf
    for _ in range(100):
        f = random_density(g, rng)
        worst_floor = min(worst_floor, free_energy(f, p) - floor)
        worst_ck = min(worst_ck, csiszar_kullback_gap(f, p))
    ok = worst_floor >= -1e-12 and worst_ck >= -1e-13
    assert record_verdict(
        "free energy floor and entropy gap", ok,
        f"100 densities: min margin above floor {worst_floor:.3e}, "
        f"min quadratic entropy gap {worst_ck:.3e}")
