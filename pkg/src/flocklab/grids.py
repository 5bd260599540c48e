"""Velocity-space grids, gridded densities, and discrete references.

Two geometries: a uniform interval for d = 1, and a polar (speed,
angle) grid for d >= 2 carrying the s^{d-1} sin^{d-2}(theta) volume
element.  The polar grid covers theta in [0, pi] for the axisymmetric
class, or the full circle (d = 2 only) when non-axisymmetric
perturbations are wanted.

Faces between adjacent cells are enumerated once with their areas and
center distances; fluxes, Dirichlet forms, and Fisher sums all run
over the same face arrays so the discrete calculus stays consistent.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from .errors import BracketError, GeometryError
from .quadrature import ModelParams, potential, sphere_area

__all__ = [
    "LineGrid",
    "PolarGrid",
    "GridDensity",
    "gibbs_density",
    "self_consistent_mean",
    "DiscreteReference",
    "discrete_reference",
]


class LineGrid:
    """Uniform cell-centered grid on [-L, L] for d = 1."""

    d = 1

    def __init__(self, L: float, N: int):
        if not (L > 0 and math.isfinite(L)):
            raise GeometryError(f"L must be positive, got {L!r}")
        if N < 4:
            raise GeometryError(f"N must be at least 4, got {N!r}")
        self.L = float(L)
        self.N = int(N)
        self.h = 2.0 * self.L / self.N
        self.shape = (self.N,)
        self.n_cells = self.N
        self.centers = -self.L + (np.arange(self.N) + 0.5) * self.h
        self.speeds = np.abs(self.centers)
        self.v1 = self.centers.copy()
        self.measures = np.full(self.N, self.h)
        self.face_left = np.arange(self.N - 1)
        self.face_right = np.arange(1, self.N)
        self.face_area = np.ones(self.N - 1)
        self.face_dist = np.full(self.N - 1, self.h)
        self.full_circle = False

    @property
    def coords(self):
        return [self.v1]

    def refined(self) -> "LineGrid":
        return LineGrid(self.L, 2 * self.N)

    def describe(self) -> str:
        return f"line1d(L={self.L:g},N={self.N})"


class PolarGrid:
    """Cell-centered (speed, angle) grid for d >= 2.

    Sector mode spans theta in [0, pi] and weights cells by the full
    sphere factor |S^{d-2}| sin^{d-2}(theta), so axisymmetric densities
    integrate over all of R^d.  Full mode (d = 2 only) spans
    (-pi, pi] with periodic angular faces.
    """

    def __init__(self, d: int, S: float, Ns: int, Ntheta: int,
                 full: bool = False):
        if d < 2:
            raise GeometryError("polar grid requires d >= 2")
        if full and d != 2:
            raise GeometryError("full-circle grid only supported for d = 2")
        if not (S > 0 and math.isfinite(S)):
            raise GeometryError(f"S must be positive, got {S!r}")
        if Ns < 4 or Ntheta < 4:
            raise GeometryError("Ns and Ntheta must be at least 4")
        self.d = int(d)
        self.S = float(S)
        self.Ns = int(Ns)
        self.Ntheta = int(Ntheta)
        self.full_circle = bool(full)
        self.shape = (self.Ns, self.Ntheta)
        self.n_cells = self.Ns * self.Ntheta

        self.hs = self.S / self.Ns
        span = 2.0 * math.pi if full else math.pi
        self.ht = span / self.Ntheta
        self.s = (np.arange(self.Ns) + 0.5) * self.hs
        if full:
            self.theta = -math.pi + (np.arange(self.Ntheta) + 0.5) * self.ht
            ang_weight = np.ones(self.Ntheta)
        else:
            self.theta = (np.arange(self.Ntheta) + 0.5) * self.ht
            ang_weight = (sphere_area(d - 2)
                          * np.sin(self.theta) ** (d - 2))
        self._ang_weight = ang_weight

        rad = self.s ** (d - 1)
        self.measures = np.outer(rad, ang_weight).ravel() * self.hs * self.ht
        self.speeds = np.outer(self.s, np.ones(self.Ntheta)).ravel()
        self.v1 = np.outer(self.s, np.cos(self.theta)).ravel()
        self.v2 = np.outer(self.s, np.sin(self.theta)).ravel()

        self._build_faces()

    def _build_faces(self):
        d, Ns, Nt = self.d, self.Ns, self.Ntheta
        idx = np.arange(Ns * Nt).reshape(Ns, Nt)

        # radial faces at r = (i+1) hs, between (i, k) and (i+1, k)
        r = (np.arange(1, Ns) * self.hs)
        sL = idx[:-1, :].ravel()
        sR = idx[1:, :].ravel()
        s_area = np.outer(r ** (d - 1), self._ang_weight).ravel() * self.ht
        s_dist = np.full(sL.size, self.hs)

        # angular faces along each ring; arc length s_i * ht apart
        if self.full_circle:
            kL = np.arange(Nt)
            kR = (kL + 1) % Nt
            tL = idx[:, kL].ravel()
            tR = idx[:, kR].ravel()
            coef = np.ones(Nt)
        else:
            tL = idx[:, :-1].ravel()
            tR = idx[:, 1:].ravel()
            theta_face = np.arange(1, Nt) * self.ht
            coef = sphere_area(d - 2) * np.sin(theta_face) ** (d - 2)
        t_area = np.outer(self.s ** (d - 2), coef).ravel() * self.hs
        t_dist = np.repeat(self.s, coef.size) * self.ht

        self.face_left = np.concatenate([sL, tL])
        self.face_right = np.concatenate([sR, tR])
        self.face_area = np.concatenate([s_area, t_area])
        self.face_dist = np.concatenate([s_dist, t_dist])
        self.n_radial_faces = sL.size

    @property
    def coords(self):
        if self.full_circle:
            return [self.v1, self.v2]
        return [self.v1]

    def refined(self) -> "PolarGrid":
        return PolarGrid(self.d, self.S, 2 * self.Ns, 2 * self.Ntheta,
                         full=self.full_circle)

    def describe(self) -> str:
        kind = "polar_full" if self.full_circle else "polar"
        return (f"{kind}(d={self.d},S={self.S:g},"
                f"Ns={self.Ns},Ntheta={self.Ntheta})")


class GridDensity:
    """A nonnegative density sampled at cell centers, unit total mass."""

    def __init__(self, geometry, values, *, check: bool = True):
        values = np.asarray(values, dtype=float).ravel()
        if values.size != geometry.n_cells:
            raise GeometryError(
                f"expected {geometry.n_cells} values, got {values.size}")
        self.geometry = geometry
        self.values = values
        if check:
            self.validate()

    @classmethod
    def normalized(cls, geometry, raw):
        raw = np.asarray(raw, dtype=float).ravel()
        if np.any(raw < 0):
            raise ValueError("density values must be nonnegative")
        total = float(raw @ geometry.measures)
        if not (total > 0 and math.isfinite(total)):
            raise ValueError(f"cannot normalize: total mass {total!r}")
        return cls(geometry, raw / total)

    def validate(self, mass_tol: float = 1e-10):
        if np.any(self.values < 0):
            worst = float(self.values.min())
            raise ValueError(f"negative density value {worst:.3e}")
        m = self.mass()
        if abs(m - 1.0) > mass_tol:
            raise ValueError(f"mass {m!r} deviates from 1 beyond {mass_tol}")

    def mass(self) -> float:
        return float(self.values @ self.geometry.measures)

    def mean_velocity(self) -> np.ndarray:
        """First velocity moment; zero-padded to d components."""
        g = self.geometry
        m = self.mass()
        if m <= 0:
            raise ValueError("zero-mass density has no mean velocity")
        u1 = float(self.v1_moment_weights() @ self.values) / m
        if getattr(g, "full_circle", False):
            u2 = float((g.v2 * g.measures) @ self.values) / m
            return np.array([u1, u2])
        out = np.zeros(g.d)
        out[0] = u1
        return out

    def v1_moment_weights(self) -> np.ndarray:
        return self.geometry.v1 * self.geometry.measures

    def copy(self) -> "GridDensity":
        return GridDensity(self.geometry, self.values.copy(), check=False)


def _drift_potential(geometry, params: ModelParams, u) -> np.ndarray:
    """psi(v) = phi(|v|) - u . v at cell centers; u scalar means u e1."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    psi = potential(geometry.speeds, params) - u[0] * geometry.v1
    if u.size > 1 and u[1] != 0.0:
        if not getattr(geometry, "full_circle", False):
            raise GeometryError(
                "transverse mean requires the full-circle geometry")
        psi = psi - u[1] * geometry.v2
    return psi


def gibbs_density(geometry, params: ModelParams, u) -> GridDensity:
    """Discrete Gibbs density exp(-psi_u/D), normalized on the grid."""
    logw = -_drift_potential(geometry, params, u) / params.D
    log_z = _logsumexp(logw + np.log(geometry.measures))
    return GridDensity(geometry, np.exp(logw - log_z), check=False)


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.sum(np.exp(x - m))))


def self_consistent_mean(geometry, params: ModelParams, u_seed: float,
                         tol: float = 1e-13) -> float:
    """Fixed point of u -> mean of the discrete Gibbs density at u.

    This is the grid-level analogue of the branch condition; it differs
    from the continuum order parameter by the discretization error of
    the grid.  u_seed = 0 returns 0 (the isotropic fixed point).
    """
    if u_seed == 0.0:
        return 0.0

    def defect(u):
        return float(gibbs_density(geometry, params, u).mean_velocity()[0]) - u

    lo, hi = 0.5 * u_seed, 1.5 * u_seed + 0.05
    f_lo, f_hi = defect(lo), defect(hi)
    for _ in range(12):
        if f_lo > 0 > f_hi:
            break
        lo *= 0.5
        hi *= 1.5
        f_lo, f_hi = defect(lo), defect(hi)
    else:
        raise BracketError(
            f"no discrete fixed point bracket around u={u_seed:.6g}")
    return brentq(defect, lo, hi, xtol=tol, rtol=8.9e-16)


class DiscreteReference:
    """A stationary profile realized on a grid, with cached face data.

    Shared by the quadratic forms, the Fisher sum, and the linearized
    assembly so that all of them use identical weights: w are cell
    masses (summing to one), t_face are Dirichlet transmissibilities
    (area/dist times the face density), and coord_slopes are the
    face-difference quotients of each tracked velocity coordinate.
    """

    def __init__(self, geometry, params, u_vec, log_density, w, t_face,
                 coord_slopes):
        self.geometry = geometry
        self.params = params
        self.u_vec = u_vec
        self.log_density = log_density
        self.w = w
        self.sqrt_w = np.sqrt(w)
        self.t_face = t_face
        self.coord_slopes = coord_slopes

    @property
    def coords(self):
        return self.geometry.coords

    def density(self) -> GridDensity:
        return GridDensity(self.geometry,
                           self.w / self.geometry.measures, check=False)


def discrete_reference(geometry, params: ModelParams, u,
                       potential_override=None) -> DiscreteReference:
    """Build the discrete reference for f_u (or a custom potential).

    potential_override, if given, is a callable phi(|v|) replacing the
    model confinement; used for oracle comparisons against exactly
    solvable references.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if potential_override is None:
        psi = _drift_potential(geometry, params, u)
    else:
        psi = potential_override(geometry.speeds) - u[0] * geometry.v1
        if u.size > 1 and u[1] != 0.0:
            psi = psi - u[1] * geometry.v2
    logw = -psi / params.D
    log_z = _logsumexp(logw + np.log(geometry.measures))
    log_density = logw - log_z
    w = np.exp(log_density) * geometry.measures

    fl, fr = geometry.face_left, geometry.face_right
    face_density = np.exp(0.5 * (log_density[fl] + log_density[fr]))
    t_face = geometry.face_area / geometry.face_dist * face_density

    coord_slopes = [(c[fr] - c[fl]) / geometry.face_dist
                    for c in geometry.coords]
    u_list = [float(u[0])] + [0.0] * (len(geometry.coords) - 1)
    if u.size > 1 and len(geometry.coords) > 1:
        u_list[1] = float(u[1])
    return DiscreteReference(geometry, params, np.array(u_list),
                             log_density, w, t_face, coord_slopes)
