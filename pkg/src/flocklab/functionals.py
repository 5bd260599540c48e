"""Free energy, relative entropy, Fisher information, quadratic forms.

The free energy combines entropy, confinement, and the alignment
self-interaction; along solutions of the evolution equation it decays
at the rate given by the relative Fisher information.  Near a
stationary reference the two admit quadratic expansions Q1 and Q2,
which are evaluated here with the same face/cell weights used by the
linearized assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SupportMismatchError
from .grids import (
    DiscreteReference,
    GridDensity,
    gibbs_density,
    self_consistent_mean,
)
from .quadrature import ModelParams, potential

__all__ = [
    "mean_velocity",
    "free_energy",
    "free_energy_second_form",
    "free_energy_lower_bound",
    "relative_entropy",
    "gibbs_state",
    "fisher_information",
    "q1_form",
    "q2_form",
    "perturbation_velocity",
    "csiszar_kullback_gap",
    "fourth_moment_bound",
    "FunctionalReport",
    "evaluate_report",
]

_POSITIVE_FLOOR = 1e-300


def mean_velocity(f: GridDensity) -> np.ndarray:
    return f.mean_velocity()


def _entropy(f: GridDensity) -> float:
    # 0 log 0 := 0
    v = f.values
    pos = v > 0
    return float(np.sum(v[pos] * np.log(v[pos]) * f.geometry.measures[pos]))


def free_energy(f: GridDensity, params: ModelParams) -> float:
    """D int f log f + int f phi - |u_f|^2 / 2."""
    g = f.geometry
    fw = f.values * g.measures
    u = f.mean_velocity()
    conf = float(potential(g.speeds, params) @ fw)
    return params.D * _entropy(f) + conf - 0.5 * float(u @ u)


def free_energy_second_form(f: GridDensity, params: ModelParams) -> float:
    """The completed-square variant, evaluated exactly as stated.

    D int f log f + (1/2) int |v - u_f|^2 f
    + int (alpha/4 |v|^4 + alpha/2 |v|^2) f.

    Note the + alpha/2 |v|^2 term: with it this expression differs from
    free_energy by alpha * int |v|^2 f, which is not a constant; the
    sign-flipped term (- alpha/2 |v|^2, matching the Gibbs-state
    exponent) reproduces free_energy identically.  Kept as stated for
    the record; see the tests for the measured discrepancy.
    """
    g = f.geometry
    fw = f.values * g.measures
    u = f.mean_velocity()
    sq = g.speeds**2
    dist_sq = sq - 2.0 * u[0] * g.v1 + float(u @ u)
    if getattr(g, "full_circle", False) and u.size > 1:
        dist_sq = dist_sq - 2.0 * u[1] * g.v2
    quartic = (params.alpha / 4.0) * sq * sq + (params.alpha / 2.0) * sq
    return (params.D * _entropy(f) + 0.5 * float(dist_sq @ fw)
            + float(quartic @ fw))


def free_energy_lower_bound(params: ModelParams) -> float:
    """Analytic floor: -(D+alpha)^2/(4 alpha) - (d/2) log(2 pi) D."""
    return (-(params.D + params.alpha) ** 2 / (4.0 * params.alpha)
            - 0.5 * params.d * math.log(2.0 * math.pi) * params.D)


def _grid_reference(f: GridDensity, ref_state, params: ModelParams):
    """Discrete stationary profile of ref_state's branch on f's grid.

    Uses the grid's own self-consistent mean (seeded by the continuum
    value) so discrete identities hold to roundoff rather than to the
    discretization error.
    """
    u_h = self_consistent_mean(f.geometry, params, ref_state.u)
    return gibbs_density(f.geometry, params, u_h), u_h


def relative_entropy(f: GridDensity, ref_state, params: ModelParams | None = None
                     ) -> float:
    """D int f log(f/f_ref) - |u_f - u_ref|^2 / 2.

    Agrees with free_energy(f) - free_energy(f_ref) by construction of
    the discrete reference.
    """
    params = params or ref_state.params
    fref, u_h = _grid_reference(f, ref_state, params)
    g = f.geometry
    bad = (f.values > _POSITIVE_FLOOR) & (fref.values <= _POSITIVE_FLOOR)
    if np.any(bad):
        raise SupportMismatchError(
            f"density carries mass on {int(bad.sum())} cells where the "
            f"reference underflows; enlarge the domain ({g.describe()})")
    mask = f.values > _POSITIVE_FLOOR
    fw = f.values[mask] * g.measures[mask]
    log_ratio = np.log(f.values[mask]) - np.log(fref.values[mask])
    u = f.mean_velocity()
    du = u.copy()
    du[0] -= u_h
    return params.D * float(log_ratio @ fw) - 0.5 * float(du @ du)


def gibbs_state(f: GridDensity, params: ModelParams) -> GridDensity:
    """Gibbs density sharing f's mean velocity, normalized on the grid."""
    u = f.mean_velocity()
    return gibbs_density(f.geometry, params, u)


def _face_mask(values: np.ndarray, geometry):
    """Faces whose two cells both carry representable density."""
    ok = values > _POSITIVE_FLOOR
    return ok[geometry.face_left] & ok[geometry.face_right]


def fisher_information(f: GridDensity, params: ModelParams) -> float:
    """int |D grad f / f + grad psi_{u_f}|^2 f via face differences.

    Vanishes exactly on the discrete Gibbs profile with matching mean.
    Cells below the positivity floor are excluded from the stencil;
    strictly negative cells are rejected.
    """
    if np.any(f.values < 0):
        raise ValueError("Fisher information requires nonnegative density")
    g = f.geometry
    u = f.mean_velocity()
    psi = potential(g.speeds, params) - u[0] * g.v1
    if getattr(g, "full_circle", False) and u.size > 1:
        psi = psi - u[1] * g.v2

    keep = _face_mask(f.values, g)
    fl = g.face_left[keep]
    fr = g.face_right[keep]
    logf = np.where(f.values > _POSITIVE_FLOOR, np.log(
        np.maximum(f.values, _POSITIVE_FLOOR)), 0.0)
    dlf = logf[fr] - logf[fl]
    dpsi = psi[fr] - psi[fl]
    face_density = np.exp(0.5 * (logf[fr] + logf[fl]))
    quot = (params.D * dlf + dpsi) / g.face_dist[keep]
    return float(np.sum(g.face_area[keep] * g.face_dist[keep]
                        * face_density * quot * quot))


def perturbation_velocity(g_vals: np.ndarray, ref: DiscreteReference
                          ) -> np.ndarray:
    """v_g = (1/D) int (v - u) g f_ref, one component per tracked coord."""
    out = [float(((c - ub) * g_vals) @ ref.w) / ref.params.D
           for c, ub in zip(ref.coords, ref.u_vec)]
    return np.array(out)


def _check_mean(g_vals, ref, tol):
    m = float(g_vals @ ref.w)
    scale = math.sqrt(float((g_vals * g_vals) @ ref.w)) or 1.0
    if abs(m) > tol * scale:
        raise ValueError(
            f"perturbation must average to zero against the reference: "
            f"got {m:.3e} at scale {scale:.3e}")


def q1_form(g_vals: np.ndarray, ref: DiscreteReference, *,
            mean_tol: float = 1e-10) -> float:
    """Entropy Hessian: D int g^2 f_ref - D^2 |v_g|^2."""
    g_vals = np.asarray(g_vals, dtype=float).ravel()
    _check_mean(g_vals, ref, mean_tol)
    D = ref.params.D
    vg = perturbation_velocity(g_vals, ref)
    return D * float((g_vals * g_vals) @ ref.w) - D * D * float(vg @ vg)


def q2_form(g_vals: np.ndarray, ref: DiscreteReference, *,
            mean_tol: float = 1e-10) -> float:
    """Fisher Hessian: D^2 int |grad g - v_g|^2 f_ref."""
    g_vals = np.asarray(g_vals, dtype=float).ravel()
    _check_mean(g_vals, ref, mean_tol)
    D = ref.params.D
    geo = ref.geometry
    dg = g_vals[geo.face_right] - g_vals[geo.face_left]
    dirichlet = float(ref.t_face @ (dg * dg))
    vg = perturbation_velocity(g_vals, ref)
    total = dirichlet + float(vg @ vg)   # int f_ref = 1
    for vgb, slope in zip(vg, ref.coord_slopes):
        cross = float(ref.t_face @ (dg * slope * geo.face_dist))
        total -= 2.0 * vgb * cross
    return D * D * total


def csiszar_kullback_gap(f: GridDensity, params: ModelParams) -> float:
    """int f log(f/G_f) - ||f - G_f||_1^2 / 4; nonnegative."""
    G = gibbs_state(f, params)
    g = f.geometry
    bad = (f.values > _POSITIVE_FLOOR) & (G.values <= _POSITIVE_FLOOR)
    if np.any(bad):
        raise SupportMismatchError(
            "density carries mass where its Gibbs state underflows")
    mask = f.values > _POSITIVE_FLOOR
    fw = f.values[mask] * g.measures[mask]
    ent = float((np.log(f.values[mask]) - np.log(G.values[mask])) @ fw)
    l1 = float(np.abs(f.values - G.values) @ g.measures)
    return ent - 0.25 * l1 * l1


def fourth_moment_bound(f: GridDensity, params: ModelParams):
    """(int |v|^4 f, analytic cap implied by the free energy)."""
    g = f.geometry
    m4 = float((g.speeds**4 * f.values) @ g.measures)
    fe = free_energy(f, params)
    rad = (params.D + params.alpha) ** 2 + 4.0 * params.alpha * (
        fe + 0.5 * params.d * math.log(2.0 * math.pi) * params.D)
    cap = ((params.D + params.alpha + math.sqrt(rad)) / params.alpha) ** 2
    return m4, cap


@dataclass(frozen=True)
class FunctionalReport:
    """Snapshot of the scalar diagnostics of a density."""

    mass: float
    mean_velocity: tuple
    free_energy: float
    fisher_information: float
    relative_entropy: dict = field(default_factory=dict)
    time: float | None = None

    @staticmethod
    def header(reference_names=()):
        cols = ["time", "mass", "u1", "u2", "free_energy",
                "fisher_information"]
        cols += [f"relative_entropy_{name}" for name in reference_names]
        return cols

    def row(self, reference_names=()):
        u = list(self.mean_velocity) + [0.0, 0.0]
        vals = [self.time if self.time is not None else 0.0,
                self.mass, u[0], u[1], self.free_energy,
                self.fisher_information]
        vals += [self.relative_entropy[name] for name in reference_names]
        return vals


def evaluate_report(f: GridDensity, params: ModelParams,
                    references: dict | None = None,
                    time: float | None = None) -> FunctionalReport:
    rel = {}
    for name, state in (references or {}).items():
        rel[name] = relative_entropy(f, state, params)
    u = f.mean_velocity()
    return FunctionalReport(
        mass=f.mass(), mean_velocity=tuple(float(x) for x in u),
        free_energy=free_energy(f, params),
        fisher_information=fisher_information(f, params),
        relative_entropy=rel, time=time)
