"""Spectral gaps of the linearized dynamics around a stationary state.

Works with the pair of quadratic forms Q1 (entropy Hessian) and Q2
(Fisher Hessian): the decay rate of the linearized flow is governed by
the smallest generalized eigenvalue of Q2 against Q1 over mean-zero
perturbations.  Everything is assembled in the symmetrized variable
h = sqrt(w) g, where w are the reference cell masses; the metric then
becomes D I minus a few rank-one terms, and all weight ratios are
formed in log space so tail underflow cannot poison the matrices.

The constant function is always projected out.  On the full-circle
geometry around a polarized state the rotation direction is a common
null vector of both forms (a neutral reparametrization, not a decay
mode); it is projected out as well and reported separately, since its
discrete eigenvalue is an O(h^2)/O(h^2) quotient with no limit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConvergenceError, IndefiniteMetricError
from .grids import DiscreteReference, discrete_reference, self_consistent_mean
from .quadrature import ModelParams

__all__ = [
    "SpectralAssembly",
    "PoincareResult",
    "CoercivityResult",
    "SpectralReport",
    "assemble_linearized",
    "poincare_constant",
    "coercivity_constant",
    "spectral_report",
    "report_csv_header",
    "report_csv_row",
]

_DENSE_LIMIT = 2600


def _log_face_data(ref: DiscreteReference):
    g = ref.geometry
    fl, fr = g.face_left, g.face_right
    lf = ref.log_density
    base = g.face_area / g.face_dist
    mu = g.measures
    # couplings of the Dirichlet form in h = sqrt(w) g variables
    off = base / np.sqrt(mu[fl] * mu[fr])
    diag_l = base * np.exp(0.5 * (lf[fr] - lf[fl])) / mu[fl]
    diag_r = base * np.exp(0.5 * (lf[fl] - lf[fr])) / mu[fr]
    # one-sided factors t/sqrt(w) for the cross vectors
    side_l = base * np.exp(0.5 * lf[fr]) / np.sqrt(mu[fl])
    side_r = base * np.exp(0.5 * lf[fl]) / np.sqrt(mu[fr])
    return fl, fr, off, diag_l, diag_r, side_l, side_r


def _dirichlet_sparse(ref: DiscreteReference) -> scipy.sparse.csr_matrix:
    """Dirichlet form of the reference in symmetrized variables."""
    n = ref.geometry.n_cells
    fl, fr, off, diag_l, diag_r, _, _ = _log_face_data(ref)
    diag = np.zeros(n)
    np.add.at(diag, fl, diag_l)
    np.add.at(diag, fr, diag_r)
    rows = np.concatenate([np.arange(n), fl, fr])
    cols = np.concatenate([np.arange(n), fr, fl])
    data = np.concatenate([diag, -off, -off])
    return scipy.sparse.coo_matrix((data, (rows, cols)),
                                   shape=(n, n)).tocsr()


def _cross_vectors(ref: DiscreteReference):
    """c_beta with c_beta . h = int grad g . grad v_beta dmu_ref."""
    g = ref.geometry
    fl, fr, _, _, _, side_l, side_r = _log_face_data(ref)
    out = []
    for slope in ref.coord_slopes:
        dv = slope * g.face_dist
        c = np.zeros(g.n_cells)
        np.add.at(c, fl, -side_l * dv)
        np.add.at(c, fr, side_r * dv)
        out.append(c)
    return out


def _metric_vectors(ref: DiscreteReference):
    """r_beta with (r_beta . h)^2 = (D v_g,beta)^2."""
    return [(c - ub) * ref.sqrt_w
            for c, ub in zip(ref.coords, ref.u_vec)]


@dataclass
class SpectralAssembly:
    """Deflated forms ready for the generalized eigensolve."""

    ref: DiscreteReference
    Z: np.ndarray                 # orthonormal basis of the admissible space
    K: scipy.sparse.csr_matrix    # Dirichlet part, full space
    cross: list                   # c_beta vectors
    metric: list                  # r_beta vectors
    deflated: tuple               # labels
    rotation_metric_gap: float | None
    rotation_overlap: float | None
    selfadjoint_residual: float

    @property
    def n_reduced(self) -> int:
        return self.Z.shape[1]

    def apply_A(self, x):
        """Q2 form applied to a vector or block of vectors."""
        D = self.ref.params.D
        y = self.K @ x
        for c, r in zip(self.cross, self.metric):
            v = r / D
            y -= np.multiply.outer(c, v @ x) + np.multiply.outer(v, c @ x)
            y += np.multiply.outer(v, v @ x)
        return D * D * y

    def apply_M(self, x):
        y = self.ref.params.D * x
        for r in self.metric:
            y = y - np.multiply.outer(r, r @ x)
        return y

    def reduced_dense(self):
        """(A_z, M_z) on the deflated subspace, exactly symmetric."""
        Z = self.Z
        D = self.ref.params.D
        KZ = self.K @ Z
        Az = Z.T @ KZ
        for c, r in zip(self.cross, self.metric):
            cz = Z.T @ c
            vz = Z.T @ (r / D)
            Az -= np.outer(cz, vz) + np.outer(vz, cz)
            Az += np.outer(vz, vz)
        Az *= D * D
        Mz = D * np.eye(Z.shape[1])
        for r in self.metric:
            rz = Z.T @ r
            Mz -= np.outer(rz, rz)
        return Az, Mz


def _deflation_basis(ref: DiscreteReference, deflate_rotation: bool):
    """Orthonormal directions removed from the admissible space."""
    # sum w = 1, so sqrt_w is already the unit constant direction
    cols = [ref.sqrt_w]
    labels = ["constant"]
    rot_gap = rot_overlap = None
    if deflate_rotation:
        q = ref.geometry.v2 * ref.sqrt_w
        q = q - (cols[0] @ q) * cols[0]
        nq = float(np.linalg.norm(q))
        if nq > 0:
            q /= nq
            cols.append(q)
            labels.append("rotation")
    return cols, labels, rot_gap, rot_overlap


def _metric_summary(ref, removed_cols, metric):
    """Eigenvalues of the metric on the admissible space, exactly.

    M = D I - sum r r^T, so all non-trivial eigenvalues come from the
    span of the projected r vectors: a k x k problem.
    """
    D = ref.params.D
    proj = []
    for r in metric:
        p = r.copy()
        for c in removed_cols:
            p -= (c @ p) * c
        proj.append(p)
    if not proj:
        return D, D, None
    G = np.array([[a @ b for b in proj] for a in proj])
    evals, evecs = np.linalg.eigh(G)
    lam = D - evals[::-1]          # ascending metric eigenvalues
    witness = None
    if lam[0] < D:
        combo = evecs[:, -1]
        direction = sum(c * p for c, p in zip(combo, proj))
        nn = np.linalg.norm(direction)
        if nn > 0:
            r1 = proj[0] / (np.linalg.norm(proj[0]) or 1.0)
            witness = abs(float(direction @ r1)) / nn
    return float(lam[0]), D, witness


def assemble_linearized(ref: DiscreteReference, *,
                        deflate_rotation: str | bool = "auto",
                        metric_tol: float = 1e-10) -> SpectralAssembly:
    """Build the deflated (Q2, Q1) pencil around a discrete reference.

    Raises IndefiniteMetricError when Q1 has a negative direction on
    the admissible space (the isotropic state below the critical
    noise).  deflate_rotation "auto" removes the angular
    reparametrization exactly when the geometry is the full circle and
    the reference is polarized.
    """
    geo = ref.geometry
    if deflate_rotation == "auto":
        deflate_rotation = (getattr(geo, "full_circle", False)
                            and ref.u_vec[0] != 0.0)
    metric = _metric_vectors(ref)
    cols, labels, _, _ = _deflation_basis(ref, bool(deflate_rotation))

    m_min, m_max, witness = _metric_summary(ref, cols, metric)
    if m_min < -metric_tol * m_max:
        raise IndefiniteMetricError(
            f"entropy Hessian has a negative direction "
            f"(min {m_min:.6e}); the reference is linearly unstable",
            min_eigenvalue=m_min, witness_overlap=witness)

    rot_gap = rot_overlap = None
    if deflate_rotation:
        # diagnostics before removal: the rotation direction should be
        # metric-null up to the O(h^2) consistency error of the grid
        q = cols[1]
        rot_gap = float(ref.params.D - sum((r @ q) ** 2 for r in metric))
        low = _lowest_metric_direction(ref, cols[:1], metric)
        if low is not None:
            rot_overlap = abs(float(low @ q))

    Y = np.column_stack(cols)
    Z = scipy.linalg.null_space(Y.T)
    K = _dirichlet_sparse(ref)
    asym = abs(K - K.T)
    residual = float(asym.max()) if asym.nnz else 0.0
    return SpectralAssembly(
        ref=ref, Z=Z, K=K, cross=_cross_vectors(ref), metric=metric,
        deflated=tuple(labels), rotation_metric_gap=rot_gap,
        rotation_overlap=rot_overlap, selfadjoint_residual=residual)


def _lowest_metric_direction(ref, removed_cols, metric):
    D = ref.params.D
    proj = []
    for r in metric:
        p = r.copy()
        for c in removed_cols:
            p -= (c @ p) * c
        proj.append(p)
    if not proj:
        return None
    G = np.array([[a @ b for b in proj] for a in proj])
    evals, evecs = np.linalg.eigh(G)
    combo = evecs[:, -1]           # largest |P r|^2 -> smallest metric value
    direction = sum(c * p for c, p in zip(combo, proj))
    nn = float(np.linalg.norm(direction))
    return direction / nn if nn > 0 else None


def _lowest_pencil_dense(assembly: SpectralAssembly, k: int = 6):
    Az, Mz = assembly.reduced_dense()
    evals, evecs = scipy.linalg.eigh(Az, Mz)
    return evals[:k], assembly.Z @ evecs[:, :k]


def _lowest_pencil_lobpcg(assembly: SpectralAssembly, seed_vec=None,
                          k: int = 6, tol: float = 1e-10,
                          maxiter: int = 3000):
    ref = assembly.ref
    n = ref.geometry.n_cells
    D = ref.params.D

    if "rotation" in assembly.deflated:
        # the rotation direction is metric-null, so it cannot be handled
        # as a B-orthogonality constraint; project it out of both forms
        # and park it at a large penalty eigenvalue instead
        q = _rotation_unit(ref)
        beta = 1e3 * D * D

        def project(x):
            return x - np.multiply.outer(q, q @ x)

        def a_fun(x):
            return project(assembly.apply_A(project(x))) \
                + beta * np.multiply.outer(q, q @ x)

        def m_fun(x):
            return project(assembly.apply_M(project(x))) \
                + D * np.multiply.outer(q, q @ x)
    else:
        a_fun, m_fun = assembly.apply_A, assembly.apply_M
        project = None

    A_op = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=a_fun, matmat=a_fun)
    M_op = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=m_fun, matmat=m_fun)
    # exact factorization of the shifted Dirichlet part; the low-rank
    # terms it omits only touch a handful of directions
    shifted = (D * D) * assembly.K + 1e-2 * D * D * scipy.sparse.identity(n)
    lu = scipy.sparse.linalg.splu(shifted.tocsc())
    if project is None:
        prec_fun = lu.solve
    else:
        def prec_fun(x):
            y = project(lu.solve(project(x)))
            return y + (1.0 / beta) * np.multiply.outer(q, q @ x)
    prec = scipy.sparse.linalg.LinearOperator(
        (n, n), matvec=prec_fun, matmat=prec_fun)
    rng = np.random.default_rng(12345)
    X = rng.standard_normal((n, k))
    if seed_vec is not None:
        X[:, 0] = seed_vec if project is None else project(seed_vec)
    with warnings.catch_warnings():
        # upper block vectors may lag behind the requested tolerance;
        # only the lowest mode matters and its residual is checked below
        warnings.simplefilter("ignore")
        evals, evecs = scipy.sparse.linalg.lobpcg(
            A_op, X, B=M_op, M=prec, Y=ref.sqrt_w[:, None], largest=False,
            tol=tol, maxiter=maxiter)
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    z0, lam0 = evecs[:, 0], float(evals[0])
    res = np.linalg.norm(a_fun(z0) - lam0 * m_fun(z0))
    scale = max(abs(lam0) * np.linalg.norm(m_fun(z0)), 1e-300)
    if res / scale > 1e-6:
        raise ConvergenceError(
            f"iterative eigensolve stalled: relative residual "
            f"{res / scale:.3e} for the lowest mode")
    return evals, evecs


def _lowest_pencil(assembly: SpectralAssembly, seed_vec=None):
    if assembly.ref.geometry.n_cells <= _DENSE_LIMIT:
        return _lowest_pencil_dense(assembly)
    return _lowest_pencil_lobpcg(assembly, seed_vec=seed_vec)


def _rotation_unit(ref):
    q = ref.geometry.v2 * ref.sqrt_w
    q = q - (ref.sqrt_w @ q) * ref.sqrt_w
    return q / np.linalg.norm(q)


@dataclass(frozen=True)
class PoincareResult:
    """Spectral gap of the reference measure (weighted Dirichlet form)."""

    value: float
    error_estimate: float | None
    coarse_value: float
    fine_value: float | None
    grid: str


def poincare_constant(geometry, params: ModelParams, u=0.0, *,
                      potential_override=None,
                      refine: bool = True) -> PoincareResult:
    """Smallest Dirichlet eigenvalue over mean-zero functions.

    For a Gaussian reference (quadratic override potential) the exact
    value is 1/D, which the tests use as the geometry oracle.  The
    error estimate is the Richardson gap |coarse - fine| / 3 of the
    second-order discretization.
    """
    def gap_on(geo):
        ref = discrete_reference(geo, params, u,
                                 potential_override=potential_override)
        K = _dirichlet_sparse(ref)
        n = geo.n_cells
        if n <= _DENSE_LIMIT:
            Z = scipy.linalg.null_space(ref.sqrt_w[None, :])
            Kz = Z.T @ (K @ Z)
            return float(scipy.linalg.eigh(
                Kz, eigvals_only=True, subset_by_index=[0, 0])[0])
        # shift-invert just below zero: the two nearest eigenvalues are
        # the exact constant null and the gap
        evals = scipy.sparse.linalg.eigsh(
            K, k=2, sigma=-1e-2, which="LM", return_eigenvectors=False)
        return float(np.sort(evals)[1])

    coarse = gap_on(geometry)
    if not refine:
        return PoincareResult(value=coarse, error_estimate=None,
                              coarse_value=coarse, fine_value=None,
                              grid=geometry.describe())
    fine = gap_on(geometry.refined())
    return PoincareResult(
        value=fine, error_estimate=abs(coarse - fine) / 3.0,
        coarse_value=coarse, fine_value=fine, grid=geometry.describe())


@dataclass(frozen=True)
class CoercivityResult:
    """Optimal constant in Q2 >= c Q1 on the admissible space."""

    c_opt: float
    error_estimate: float | None
    eigenvalues: tuple             # lowest few of the pencil
    metric_min: float
    deflated: tuple
    rotation_metric_gap: float | None
    rotation_overlap: float | None
    selfadjoint_residual: float
    grid: str


def coercivity_constant(ref: DiscreteReference, *,
                        deflate_rotation: str | bool = "auto",
                        refine: bool = False) -> CoercivityResult:
    """Lowest generalized eigenvalue of (Q2, Q1) around the reference."""
    assembly = assemble_linearized(ref, deflate_rotation=deflate_rotation)
    cols, _, _, _ = _deflation_basis(ref, "rotation" in assembly.deflated)
    m_min_adm, _, _ = _metric_summary(ref, cols, assembly.metric)

    evals, evecs = _lowest_pencil(assembly)
    c_coarse = float(evals[0])

    err = None
    if refine:
        geo_f = ref.geometry.refined()
        # each grid must carry its own self-consistent mean, or the
        # mean-zero structure behind the deflation degrades to the
        # inter-grid consistency error and iterative solves stall
        u_f = ref.u_vec.copy()
        if u_f[0] != 0.0:
            u_f[0] = self_consistent_mean(geo_f, ref.params, float(u_f[0]))
        ref_f = discrete_reference(geo_f, ref.params, u_f)
        asm_f = assemble_linearized(ref_f, deflate_rotation=deflate_rotation)
        seed = _prolong(evecs[:, 0], ref.geometry)
        try:
            evf, _ = _lowest_pencil(asm_f, seed_vec=seed)
        except Exception as exc:     # pragma: no cover - solver hiccup
            raise ConvergenceError(
                f"fine-grid eigensolve failed: {exc}") from exc
        c_fine = float(evf[0])
        err = abs(c_fine - c_coarse) / 3.0
        c_opt = c_fine
    else:
        c_opt = c_coarse

    return CoercivityResult(
        c_opt=c_opt, error_estimate=err,
        eigenvalues=tuple(float(x) for x in evals[:6]),
        metric_min=m_min_adm,
        deflated=assembly.deflated,
        rotation_metric_gap=assembly.rotation_metric_gap,
        rotation_overlap=assembly.rotation_overlap,
        selfadjoint_residual=assembly.selfadjoint_residual,
        grid=ref.geometry.describe())


def _prolong(h_coarse, geo_c):
    """Cell-split a coarse symmetrized eigenvector as a fine-grid seed."""
    if hasattr(geo_c, "Ns"):
        g = h_coarse.reshape((geo_c.Ns, geo_c.Ntheta))
        g = np.repeat(np.repeat(g, 2, axis=0), 2, axis=1).ravel()
    else:
        g = np.repeat(h_coarse, 2)
    return g / (np.linalg.norm(g) or 1.0)


@dataclass(frozen=True)
class SpectralReport:
    """One-stop summary used by the command-line report path."""

    params: ModelParams
    branch: str
    u: float
    u_grid: float
    kappa: float | None
    lambda_poincare: float
    lambda_error: float | None
    c_opt: float
    c_opt_error: float | None
    c_poincare_scaled: float       # D * Lambda (* (1 - kappa) if polarized)
    c_variance_scaled: float       # Lambda * (D - longitudinal variance)
    predicted_rate: float          # 2 * c_opt
    eigenvalues: tuple
    metric_min: float
    selfadjoint_residual: float
    rotation_metric_gap: float | None
    rotation_overlap: float | None
    grid: str


def spectral_report(params: ModelParams, geometry, *, branch: str = "auto",
                    refine: bool = True,
                    deflate_rotation: str | bool = "auto") -> SpectralReport:
    """Assemble the full gap report around the stationary state on a grid."""
    from .grids import self_consistent_mean
    from .stationary import critical_noise, kappa as kappa_of, make_stationary

    dstar = critical_noise(params.d, params.alpha)
    if branch == "auto":
        branch = "polarized" if params.D < dstar else "isotropic"
    state = make_stationary(params, branch=branch)
    u_grid = self_consistent_mean(geometry, params, state.u)
    ref = discrete_reference(geometry, params, u_grid)

    pc = poincare_constant(geometry, params, u_grid, refine=refine)
    cc = coercivity_constant(ref, deflate_rotation=deflate_rotation,
                             refine=refine)

    if branch == "polarized":
        kap = kappa_of(state)
        var_long = params.D * kap
    else:
        kap = None
        var_long = state.moments.v1_sq
    scale = (1.0 - kap) if kap is not None else 1.0
    return SpectralReport(
        params=params, branch=branch, u=state.u, u_grid=u_grid, kappa=kap,
        lambda_poincare=pc.value, lambda_error=pc.error_estimate,
        c_opt=cc.c_opt, c_opt_error=cc.error_estimate,
        c_poincare_scaled=params.D * pc.value * scale,
        c_variance_scaled=pc.value * (params.D - var_long),
        predicted_rate=2.0 * cc.c_opt,
        eigenvalues=cc.eigenvalues, metric_min=cc.metric_min,
        selfadjoint_residual=cc.selfadjoint_residual,
        rotation_metric_gap=cc.rotation_metric_gap,
        rotation_overlap=cc.rotation_overlap,
        grid=geometry.describe())


def report_csv_header():
    return ["d", "alpha", "D", "branch", "u", "u_grid", "kappa",
            "lambda_poincare", "lambda_error", "c_opt", "c_opt_error",
            "c_poincare_scaled", "c_variance_scaled", "predicted_rate",
            "metric_min", "selfadjoint_residual", "rotation_metric_gap",
            "rotation_overlap", "grid"]


def report_csv_row(r: SpectralReport):
    return [r.params.d, r.params.alpha, r.params.D, r.branch, r.u, r.u_grid,
            r.kappa, r.lambda_poincare, r.lambda_error, r.c_opt,
            r.c_opt_error, r.c_poincare_scaled, r.c_variance_scaled,
            r.predicted_rate, r.metric_min, r.selfadjoint_residual,
            r.rotation_metric_gap, r.rotation_overlap, r.grid]
