"""Time integration of the nonlinear, non-local Fokker-Planck equation.

Finite-volume exponential-fitting fluxes (Gibbs-weighted two-point
fluxes) make the discrete Gibbs profile stationary to roundoff and
keep the implicit Euler update an M-matrix, so mass is conserved
exactly and positivity is unconditional.  The mean velocity entering
the drift is lagged by one step, which is where the non-locality of
the model enters the scheme.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .errors import GeometryError, MassConservationError, PositivityError
from .functionals import fisher_information, free_energy
from .grids import (
    GridDensity,
    LineGrid,
    PolarGrid,
    gibbs_density,
    self_consistent_mean,
)
from .quadrature import ModelParams, potential

__all__ = [
    "SolverConfig",
    "EvolutionTrace",
    "RateFit",
    "RateGapReport",
    "step",
    "evolve",
    "symmetric_preserving_evolve",
    "fit_decay_rate",
    "rate_vs_gap_report",
    "save_checkpoint",
    "load_checkpoint",
]


def _bernoulli(x: np.ndarray) -> np.ndarray:
    """B(x) = x / (e^x - 1), series below 1e-8 to avoid cancellation."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 - 0.5 * x + x * x / 12.0,
                   safe / np.expm1(safe))
    return out


def _centered(x: np.ndarray) -> np.ndarray:
    # second-order centered flux; positivity not guaranteed
    return 1.0 - 0.5 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class SolverConfig:
    """Numerical controls for the time integrator."""

    dt: float
    t_final: float
    time_stepping: str = "semi_implicit"      # or "explicit"
    flux_scheme: str = "gibbs_weighted"       # or "centered"
    diagnostics_stride: int = 10
    checkpoint_stride: int | None = None
    checkpoint_dir: str | None = None
    positivity_tol: float = 1e-13
    mass_tol: float = 1e-10
    cfl_max: float = 0.9

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least one step")
        if self.time_stepping not in ("semi_implicit", "explicit"):
            raise ValueError(f"unknown time_stepping {self.time_stepping!r}")
        if self.flux_scheme not in ("gibbs_weighted", "centered"):
            raise ValueError(f"unknown flux_scheme {self.flux_scheme!r}")
        if self.diagnostics_stride < 1:
            raise ValueError("diagnostics_stride must be >= 1")
        if self.checkpoint_stride is not None and self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be >= 1")


class _Stepper:
    """Pre-indexed flux assembly for a fixed geometry."""

    def __init__(self, geometry, params: ModelParams, config: SolverConfig):
        self.geometry = geometry
        self.params = params
        self.config = config
        self.phi = potential(geometry.speeds, params)
        fl, fr = geometry.face_left, geometry.face_right
        vol = geometry.measures
        base = params.D * geometry.face_area / geometry.face_dist
        self.c_left = base / vol[fl]
        self.c_right = base / vol[fr]
        self.fl, self.fr = fl, fr
        self.n = geometry.n_cells
        self.flux_fn = (_bernoulli if config.flux_scheme == "gibbs_weighted"
                        else _centered)
        self._plan_solver()

    def _plan_solver(self):
        g = self.geometry
        if isinstance(g, LineGrid):
            self.bandwidth = 1
        elif isinstance(g, PolarGrid) and not g.full_circle:
            # flattened (s, theta): radial neighbors sit Ntheta apart
            self.bandwidth = g.Ntheta
        else:
            self.bandwidth = None   # periodic wrap: sparse LU
        if self.bandwidth is not None:
            self._ab = np.zeros((2 * self.bandwidth + 1, self.n))
            self._offs = self.bandwidth + self.fl - self.fr   # row in ab

    def _coefficients(self, u_vec):
        psi = self.phi - u_vec[0] * self.geometry.v1
        if len(u_vec) > 1 and u_vec[1] != 0.0:
            psi = psi - u_vec[1] * self.geometry.v2
        delta = (psi[self.fr] - psi[self.fl]) / self.params.D
        b_fwd = self.flux_fn(delta)
        b_bwd = self.flux_fn(-delta)
        return b_fwd, b_bwd

    def rate_diagonal(self, u_vec):
        """Outflow rates; explicit stability requires dt * max <= cfl."""
        b_fwd, b_bwd = self._coefficients(u_vec)
        diag = np.zeros(self.n)
        np.add.at(diag, self.fl, self.c_left * b_fwd)
        np.add.at(diag, self.fr, self.c_right * b_bwd)
        return diag

    def apply_operator(self, f, u_vec):
        """df/dt for the explicit update."""
        b_fwd, b_bwd = self._coefficients(u_vec)
        flux = b_fwd * f[self.fl] - b_bwd * f[self.fr]
        out = np.zeros(self.n)
        np.add.at(out, self.fl, -self.c_left * flux)
        np.add.at(out, self.fr, self.c_right * flux)
        return out

    def implicit_step(self, f, u_vec, dt):
        b_fwd, b_bwd = self._coefficients(u_vec)
        if self.bandwidth is not None:
            ab = self._ab
            ab[:] = 0.0
            bw = self.bandwidth
            np.add.at(ab[bw], self.fl, dt * self.c_left * b_fwd)
            np.add.at(ab[bw], self.fr, dt * self.c_right * b_bwd)
            ab[bw] += 1.0
            # row index bw + i - j for entry (i, j)
            ab[self._offs, self.fr] = -dt * self.c_left * b_bwd
            ab[2 * bw - self._offs, self.fl] = -dt * self.c_right * b_fwd
            return solve_banded((bw, bw), ab, f)
        return self._sparse_step(f, b_fwd, b_bwd, dt)

    def _sparse_step(self, f, b_fwd, b_bwd, dt):
        from scipy.sparse import coo_matrix
        from scipy.sparse.linalg import splu
        diag = np.zeros(self.n)
        np.add.at(diag, self.fl, dt * self.c_left * b_fwd)
        np.add.at(diag, self.fr, dt * self.c_right * b_bwd)
        rows = np.concatenate([np.arange(self.n), self.fl, self.fr])
        cols = np.concatenate([np.arange(self.n), self.fr, self.fl])
        data = np.concatenate([1.0 + diag, -dt * self.c_left * b_bwd,
                               -dt * self.c_right * b_fwd])
        m = coo_matrix((data, (rows, cols)), shape=(self.n, self.n)).tocsc()
        return splu(m).solve(f)

    def advance(self, f, u_vec, dt):
        if self.config.time_stepping == "explicit":
            diag = self.rate_diagonal(u_vec)
            top = dt * float(diag.max())
            if top > self.config.cfl_max:
                raise ValueError(
                    f"explicit step violates the positivity bound: "
                    f"dt*max_rate = {top:.3f} > {self.config.cfl_max}")
            return f + dt * self.apply_operator(f, u_vec)
        return self.implicit_step(f, u_vec, dt)


def step(f: GridDensity, params: ModelParams, config: SolverConfig,
         u_vec=None) -> GridDensity:
    """One time step; the drift uses f's own mean unless u_vec is given."""
    stepper = _Stepper(f.geometry, params, config)
    if u_vec is None:
        u_vec = f.mean_velocity()
    new_vals = stepper.advance(f.values, np.atleast_1d(u_vec), config.dt)
    return GridDensity(f.geometry, new_vals, check=False)


@dataclass
class RateFit:
    rate: float
    intercept: float
    r_squared: float
    n_points: int
    t_span: tuple
    window: tuple


@dataclass
class EvolutionTrace:
    """Diagnostics sampled along a run, plus the final density."""

    times: np.ndarray
    mass: np.ndarray
    mean1: np.ndarray
    mean2: np.ndarray
    free_energy: np.ndarray
    fisher: np.ndarray
    min_density: np.ndarray
    relative_entropy: dict
    floors: dict                 # reference name -> discrete F[f_ref]
    reference_means: dict        # reference name -> discrete u*
    final: GridDensity
    params: ModelParams
    config: SolverConfig
    n_steps: int


def _grid_references(geometry, params, references):
    """Realize each reference state on the grid once."""
    out = {}
    for name, state in (references or {}).items():
        u_h = self_consistent_mean(geometry, params, state.u)
        fref = gibbs_density(geometry, params, u_h)
        log_ref = np.log(np.maximum(fref.values, 1e-300))
        out[name] = (u_h, fref, log_ref, free_energy(fref, params))
    return out


def _relative_entropy_fast(f_vals, geometry, params, u_vec, u_h, log_ref):
    mask = f_vals > 0
    fw = f_vals[mask] * geometry.measures[mask]
    val = float((np.log(f_vals[mask]) - log_ref[mask]) @ fw) * params.D
    du1 = u_vec[0] - u_h
    du_sq = du1 * du1 + (u_vec[1] ** 2 if len(u_vec) > 1 else 0.0)
    return val - 0.5 * du_sq


def evolve(f0: GridDensity, params: ModelParams, config: SolverConfig,
           references: dict | None = None) -> EvolutionTrace:
    """Integrate to t_final with lagged mean velocity.

    references maps names to stationary states; each gets a relative
    entropy column (against its discrete grid realization) in the
    trace.
    """
    geometry = f0.geometry
    stepper = _Stepper(geometry, params, config)
    refs = _grid_references(geometry, params, references)
    n_steps = int(round(config.t_final / config.dt))

    rows = {k: [] for k in ("t", "mass", "u1", "u2", "fe", "fi", "mn")}
    rel_rows = {name: [] for name in refs}

    f = f0.values.copy()
    ckpt_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None

    def record(t, f_vals, u_vec):
        dens = GridDensity(geometry, f_vals, check=False)
        rows["t"].append(t)
        rows["mass"].append(dens.mass())
        rows["u1"].append(u_vec[0])
        rows["u2"].append(u_vec[1] if len(u_vec) > 1 else 0.0)
        rows["fe"].append(free_energy(dens, params))
        # centered fluxes may sit a hair below zero within the
        # positivity tolerance; the log-gradient is undefined there
        if float(f_vals.min()) >= 0.0:
            rows["fi"].append(fisher_information(dens, params))
        else:
            rows["fi"].append(float("nan"))
        rows["mn"].append(float(f_vals.min()))
        for name, (u_h, _, log_ref, _) in refs.items():
            rel_rows[name].append(_relative_entropy_fast(
                f_vals, geometry, params, u_vec, u_h, log_ref))

    u_vec = GridDensity(geometry, f, check=False).mean_velocity()
    record(0.0, f, u_vec)

    for k in range(1, n_steps + 1):
        f = stepper.advance(f, u_vec, config.dt)
        t = k * config.dt
        mn = float(f.min())
        if mn < -config.positivity_tol:
            raise PositivityError(
                f"negative cell value {mn:.3e} at t={t:.6g}",
                time=t, step=k, cell=int(f.argmin()), value=mn,
                state=f.copy())
        mass = float(f @ geometry.measures)
        if abs(mass - 1.0) > config.mass_tol:
            raise MassConservationError(
                f"mass drifted to {mass!r} at t={t:.6g}")
        u_vec = GridDensity(geometry, f, check=False).mean_velocity()
        if k % config.diagnostics_stride == 0 or k == n_steps:
            record(t, f, u_vec)
        if (ckpt_dir is not None and config.checkpoint_stride
                and k % config.checkpoint_stride == 0):
            save_checkpoint(ckpt_dir, k, t, geometry, params, f)

    return EvolutionTrace(
        times=np.array(rows["t"]), mass=np.array(rows["mass"]),
        mean1=np.array(rows["u1"]), mean2=np.array(rows["u2"]),
        free_energy=np.array(rows["fe"]), fisher=np.array(rows["fi"]),
        min_density=np.array(rows["mn"]),
        relative_entropy={k: np.array(v) for k, v in rel_rows.items()},
        floors={k: v[3] for k, v in refs.items()},
        reference_means={k: v[0] for k, v in refs.items()},
        final=GridDensity(geometry, f, check=False),
        params=params, config=config, n_steps=n_steps)


def symmetric_preserving_evolve(f0: GridDensity, params: ModelParams,
                                config: SolverConfig,
                                references: dict | None = None
                                ) -> EvolutionTrace:
    """Evolution restricted to the axisymmetric class (polar sector).

    Requires the sector geometry, whose mean velocity is pinned to the
    order axis by construction, and an initial free energy strictly
    below the isotropic one so the run relaxes to the polarized state.
    """
    g = f0.geometry
    if not isinstance(g, PolarGrid) or g.full_circle:
        raise GeometryError(
            "symmetric_preserving_evolve requires the polar sector geometry")
    fe0 = free_energy(f0, params)
    fe_iso = free_energy(gibbs_density(g, params, 0.0), params)
    if not fe0 < fe_iso:
        raise ValueError(
            f"initial free energy {fe0:.6f} is not below the isotropic "
            f"value {fe_iso:.6f}; the run may relax to the wrong branch")
    return evolve(f0, params, config, references)


def fit_decay_rate(trace: EvolutionTrace, reference: str,
                   window: tuple = (1e-10, 1e-3),
                   min_points: int = 6) -> RateFit | None:
    """Least-squares slope of log(F(t) - F_ref) inside the gap window.

    Returns None when fewer than min_points samples fall inside the
    window (run longer or tighten the diagnostics stride).
    """
    floor = trace.floors[reference]
    gap = trace.free_energy - floor
    lo, hi = window
    sel = (gap >= lo) & (gap <= hi) & (trace.times > 0)
    if int(sel.sum()) < min_points:
        return None
    t = trace.times[sel]
    y = np.log(gap[sel])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(rate=-float(slope), intercept=float(intercept),
                   r_squared=r2, n_points=int(sel.sum()),
                   t_span=(float(t[0]), float(t[-1])), window=window)


@dataclass(frozen=True)
class RateGapReport:
    """Fitted decay rate against the spectral predictions.

    predicted_rate is twice the optimal coercivity constant (the gap
    enters the free-energy decay squared through the Gronwall
    argument); the single-normalization value is kept alongside since
    both conventions appear in the literature on this model.
    """

    fitted_rate: float
    r_squared: float
    predicted_rate: float               # 2 * c_opt
    predicted_rate_single: float        # c_opt
    poincare_rate: float | None         # 2 * D * Lambda (* (1-kappa))
    poincare_rate_single: float | None
    ratio: float
    within_tolerance: bool
    tolerance: float


def rate_vs_gap_report(fit: RateFit, *, c_opt: float,
                       poincare_scaled: float | None = None,
                       tolerance: float = 0.25) -> RateGapReport:
    predicted = 2.0 * c_opt
    ratio = fit.rate / predicted
    return RateGapReport(
        fitted_rate=fit.rate, r_squared=fit.r_squared,
        predicted_rate=predicted, predicted_rate_single=c_opt,
        poincare_rate=(2.0 * poincare_scaled
                       if poincare_scaled is not None else None),
        poincare_rate_single=poincare_scaled,
        ratio=ratio,
        within_tolerance=abs(ratio - 1.0) <= tolerance,
        tolerance=tolerance)


def save_checkpoint(directory, step_index: int, time: float, geometry,
                    params: ModelParams, values: np.ndarray) -> Path:
    """Flat float64 dump plus a JSON sidecar describing grid and state."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = directory / f"state_{step_index:08d}"
    values.astype(np.float64).tofile(stem.with_suffix(".bin"))
    meta = {
        "time": time,
        "step": step_index,
        "shape": list(np.shape(values)),
        "dtype": "float64",
        "geometry": geometry.describe(),
        "params": {"d": params.d, "alpha": params.alpha, "D": params.D},
    }
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return stem.with_suffix(".bin")


def load_checkpoint(path):
    """Returns (values, metadata) for a checkpoint .bin file."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    values = np.fromfile(path, dtype=np.dtype(meta["dtype"]))
    return values.reshape(meta["shape"]), meta
