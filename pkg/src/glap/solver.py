"""Discrete g-Laplace operators on P1 meshes.

Two solvers share one assembly:

* ``inner_solve`` minimises the strictly convex energy
  ``sum_T |T| G(|grad u|_eps) + sum_v m_v [L G(|u_v|) - psi_v u_v]``
  (the solution operator S of  -Delta_g u + L g(u) = psi,  u = 0 on the boundary);
* ``direct_solve`` runs damped Newton on the weak residual of
  Delta_g u + B(x, u, grad u) + lambda = 0.

Zeroth-order terms use lumped vertex quadrature; gradient terms are exact
per element.  ``|grad u|_eps = sqrt(|grad u|^2 + eps^2)``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .mesh import Field, Mesh, gradient_per_element, nodal_gradient
from .source import SourceTerm
from .young import YoungFunction

ARMIJO = 1e-4
MIN_STEP = 1e-14
ROUNDOFF = 1e-13


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    mesh: Mesh
    yf: YoungFunction
    source: SourceTerm | None = None
    lam: float = 0.0
    L: float = 0.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0 < self.epsilon <= 1e-2:
            raise ValueError("epsilon must lie in (0, 1e-2]")
        if self.lam < 0 or self.L < 0:
            raise ValueError("lambda and L must be nonnegative")

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list
    energy_history: list | None = None
    final_sup_norm: float = 0.0
    wall_time: float = 0.0
    message: str = ""
    escaped: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": "solve_report", "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "residual_history": [float(r) for r in self.residual_history],
                "energy_history": (None if self.energy_history is None
                                   else [float(e) for e in self.energy_history]),
                "final_sup_norm": float(self.final_sup_norm),
                "message": self.message, "escaped": bool(self.escaped)}


# ---------------------------------------------------------------------------
# assembly

def _vals(u, mesh):
    v = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    if v.shape != (mesh.n_vertices,):
        raise SolverError("field length does not match the mesh")
    return v


def _signed_g(yf, u):
    return yf.g(np.abs(u)) * np.sign(u)


def _reg_norm(grad, eps):
    return np.sqrt(np.einsum("md,md->m", grad, grad) + eps * eps)


def operator_vector(dp: DiscreteProblem, u):
    """<-Delta_g u, phi_i> for every hat function phi_i."""
    mesh = dp.mesh
    grad = gradient_per_element(mesh, u)
    r = _reg_norm(grad, dp.epsilon)
    flux = (dp.yf.g(r) / r)[:, None] * grad
    contrib = mesh.element_measures[:, None] * np.einsum(
        "md,mkd->mk", flux, mesh.basis_gradients)
    return np.bincount(mesh.elements.ravel(), weights=contrib.ravel(),
                       minlength=mesh.n_vertices)


def operator_tangent(dp: DiscreteProblem, u):
    """Jacobian of :func:`operator_vector`: g'(r) P + g(r)/r (I - P) per element."""
    mesh = dp.mesh
    grad = gradient_per_element(mesh, u)
    r = _reg_norm(grad, dp.epsilon)
    a = dp.yf.gprime(r)
    b = dp.yf.g(r) / r
    d = mesh.dimension
    P = np.einsum("md,me->mde", grad, grad) / (r * r)[:, None, None]
    A = a[:, None, None] * P + b[:, None, None] * (np.eye(d)[None] - P)
    Ke = mesh.element_measures[:, None, None] * np.einsum(
        "mid,mde,mje->mij", mesh.basis_gradients, A, mesh.basis_gradients)
    rows, cols = mesh.coo_index
    n = mesh.n_vertices
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))


def _source_terms(dp: DiscreteProblem, u):
    mesh = dp.mesh
    pn = nodal_gradient(mesh, u)
    return dp.source(mesh.vertices, u, pn), pn


def _check_finite(vec, what):
    bad = np.flatnonzero(~np.isfinite(vec))
    if bad.size:
        raise SolverError(f"non-finite {what} at node {int(bad[0])}", node=int(bad[0]))


def residual(dp: DiscreteProblem, u, psi=None, mode="inner"):
    """Nodal weak residual; boundary rows are replaced by u_v.

    ``inner``: <-Delta_g u, v> + (L g(u) - psi, v);  ``direct``:
    <-Delta_g u, v> - (B(x, u, grad u) + lambda, v).
    """
    mesh = dp.mesh
    uv = _vals(u, mesh)
    m = mesh.vertex_masses
    R = operator_vector(dp, uv)
    if mode == "inner":
        psi_v = np.zeros(mesh.n_vertices) if psi is None else _vals(psi, mesh)
        R = R + m * (dp.L * _signed_g(dp.yf, uv) - psi_v)
    elif mode == "direct":
        B = np.zeros(mesh.n_vertices) if dp.source is None else _source_terms(dp, uv)[0]
        R = R - m * (B + dp.lam)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    R = np.where(mesh.boundary, uv, R)
    _check_finite(R, "residual")
    return R


def energy(dp: DiscreteProblem, u, psi):
    mesh = dp.mesh
    uv = _vals(u, mesh)
    r = _reg_norm(gradient_per_element(mesh, uv), dp.epsilon)
    grad_part = np.sum(mesh.element_measures * dp.yf.G(r))
    zero_part = np.sum(mesh.vertex_masses * (dp.L * dp.yf.G(np.abs(uv)) - psi * uv))
    return float(grad_part + zero_part)


def _solve_linear(A, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A.tocsc(), b)
        except (spla.MatrixRankWarning, RuntimeError):
            return None
    return x if np.all(np.isfinite(x)) else None


# ---------------------------------------------------------------------------
# inner solver (solution operator S)

def inner_solve(dp: DiscreteProblem, psi, tol=1e-8, u0=None, max_iter=200):
    """Minimise the convex inner energy by damped Newton with Armijo backtracking.

    Stops once the free residual norm is at most ``tol * max(1, |m psi|)``.
    Returns ``(Field, SolveReport)``; ``energy_history`` holds the energy after
    every accepted step and is non-increasing.
    """
    t_start = time.perf_counter()
    mesh = dp.mesh
    free = mesh.free
    m = mesh.vertex_masses
    psi_v = _vals(psi, mesh).copy()
    _check_finite(psi_v, "psi")
    u = np.zeros(mesh.n_vertices) if u0 is None else _vals(u0, mesh).copy()
    u[mesh.boundary] = 0.0

    # relative stopping test: the residual carries the scale of the load
    scale = max(1.0, float(np.linalg.norm((m * psi_v)[free])))
    res_hist, en_hist = [], []
    E = energy(dp, u, psi_v)
    en_hist.append(E)
    converged, msg, it = False, "max_iter reached", 0

    for it in range(max_iter + 1):
        F = residual(dp, u, psi_v, "inner")[free]
        rn = float(np.linalg.norm(F))
        res_hist.append(rn)
        if rn <= tol * scale:
            converged, msg = True, "converged"
            break
        if it == max_iter:
            break
        H = operator_tangent(dp, u)
        zero_curv = dp.L * m * dp.yf.gprime(np.maximum(np.abs(u), dp.epsilon))
        H = (H + sp.diags(zero_curv))[free][:, free]
        d = _solve_linear(H, -F)
        if d is None or not float(F @ d) < 0:
            shift = 1e-8 * float(np.abs(H.diagonal()).max() or 1.0)
            d = _solve_linear(H + shift * sp.identity(len(free)), -F)
            if d is None or not float(F @ d) < 0:
                d = -F
        slope = float(F @ d)
        step, accepted = 1.0, False
        trial = u.copy()
        if abs(slope) <= ROUNDOFF * (1.0 + abs(E)):
            # energy decrease below rounding: backtrack on the residual norm instead
            while step >= MIN_STEP:
                trial[free] = u[free] + step * d
                E_new = energy(dp, trial, psi_v)
                if (np.linalg.norm(residual(dp, trial, psi_v, "inner")[free]) < rn
                        and E_new <= E + ROUNDOFF * (1.0 + abs(E))):
                    accepted = True
                    break
                step *= 0.5
        while not accepted and step >= MIN_STEP:
            trial[free] = u[free] + step * d
            E_new = energy(dp, trial, psi_v)
            if E_new <= E + ARMIJO * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # energy differences below rounding: accept a plain decrease
            trial[free] = u[free] + d
            E_new = energy(dp, trial, psi_v)
            F_new = residual(dp, trial, psi_v, "inner")[free]
            if E_new <= E and np.linalg.norm(F_new) < rn:
                accepted = True
        if not accepted:
            msg = "line search stalled"
            break
        u, E = trial, E_new
        en_hist.append(E)

    report = SolveReport(converged, it, res_hist, en_hist, float(np.max(np.abs(u))),
                         time.perf_counter() - t_start, msg)
    return Field(mesh, u), report


# ---------------------------------------------------------------------------
# direct solver for Delta_g u + B + lambda = 0

def _source_jacobian(dp: DiscreteProblem, u, pn):
    """Sparse d/du of the nodal source values B(x_v, u_v, grad_avg u(x_v))."""
    mesh, st = dp.mesh, dp.source
    x = mesh.vertices
    if st.dt is not None:
        dBdt = st.dt(x, u, pn)
    else:
        d = 1e-7 * (1 + np.abs(u))
        dBdt = (st(x, u + d, pn) - st(x, u - d, pn)) / (2 * d)
    J = sp.diags(dBdt)
    if st.dp is not None:
        dBdp = st.dp(x, u, pn)
    else:
        dBdp = np.empty_like(pn)
        for k in range(mesh.dimension):
            e = np.zeros_like(pn)
            dk = 1e-7 * (1 + np.abs(pn[:, k]))
            e[:, k] = dk
            dBdp[:, k] = (st(x, u, pn + e) - st(x, u, pn - e)) / (2 * dk)
    for k, Gk in enumerate(mesh.nodal_gradient_operators):
        if np.any(dBdp[:, k]):
            J = J + sp.diags(dBdp[:, k]) @ Gk
    return J


def direct_solve(dp: DiscreteProblem, u0, tol=1e-8, max_iter=60, enforce_positive=False,
                 escape_bound=1e6, max_residual=1e6):
    """Damped Newton on the ``direct`` residual with residual-norm line search.

    The report's ``escaped`` flag is set when the residual exceeds
    ``max_residual`` or the sup-norm exceeds ``escape_bound``.
    """
    t_start = time.perf_counter()
    mesh = dp.mesh
    free = mesh.free
    m = mesh.vertex_masses
    u = _vals(u0, mesh).copy()
    u[mesh.boundary] = 0.0
    if enforce_positive:
        u = np.maximum(u, 0.0)

    def F_of(v):
        return residual(dp, v, mode="direct")[free]

    res_hist = []
    converged, escaped, msg, it = False, False, "max_iter reached", 0
    try:
        F = F_of(u)
    except SolverError as exc:
        return Field(mesh, np.zeros_like(u)), SolveReport(
            False, 0, [], None, float("nan"), time.perf_counter() - t_start,
            str(exc), True)
    for it in range(max_iter + 1):
        rn = float(np.linalg.norm(F))
        res_hist.append(rn)
        if rn <= tol:
            converged, msg = True, "converged"
            break
        if rn > max_residual or np.max(np.abs(u)) > escape_bound:
            escaped, msg = True, "escaped"
            break
        if it == max_iter:
            break
        J = operator_tangent(dp, u)
        if dp.source is not None:
            J = J - sp.diags(m) @ _source_jacobian(dp, u, nodal_gradient(mesh, u))
        d = _solve_linear(J.tocsr()[free][:, free], -F)
        if d is None:
            msg = "singular Jacobian"
            break
        step, accepted = 1.0, False
        while step >= 2.0 ** -30:
            trial = u.copy()
            trial[free] = u[free] + step * d
            if enforce_positive:
                trial = np.maximum(trial, 0.0)
            try:
                F_new = F_of(trial)
            except SolverError:
                F_new = None
            if F_new is not None and np.linalg.norm(F_new) <= (1 - ARMIJO * step) * rn:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            msg = "line search stalled"
            break
        u, F = trial, F_new

    sup = float(np.max(np.abs(u)))
    report = SolveReport(converged, it, res_hist, None, sup,
                         time.perf_counter() - t_start, msg, escaped)
    return Field(mesh, u), report


# ---------------------------------------------------------------------------
# seeds for nontrivial solutions

def torsion_bump(mesh: Mesh):
    """Solution of -Delta w = 1, w = 0 on the boundary, scaled to max 1."""
    dp = DiscreteProblem(mesh, YoungFunction.power(2))
    K = operator_tangent(dp, np.zeros(mesh.n_vertices))
    free = mesh.free
    w = np.zeros(mesh.n_vertices)
    w[free] = spla.spsolve(K.tocsc()[free][:, free], mesh.vertex_masses[free])
    return w / np.max(w)


def nehari_amplitude(dp: DiscreteProblem, shape, a_min=1e-4, a_max=1e6, n=241):
    """Scalar A with <-Delta_g(A w), A w> = ((B + lambda), A w) for the profile w.

    Returns None when the balance has no sign change on [a_min, a_max].
    """
    mesh = dp.mesh
    w = np.asarray(shape, float)
    gr = np.linalg.norm(gradient_per_element(mesh, w), axis=1)
    pn = nodal_gradient(mesh, w)
    m = mesh.vertex_masses

    def balance(a):
        lhs = np.sum(mesh.element_measures * dp.yf.g(a * gr) * a * gr)
        B = dp.source(mesh.vertices, a * w, a * pn) if dp.source is not None else 0.0
        return lhs - np.sum(m * (B + dp.lam) * a * w)

    amps = np.logspace(np.log10(a_min), np.log10(a_max), n)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.array([balance(a) for a in amps])
    for i in range(n - 1):
        if vals[i] > 0 and vals[i + 1] <= 0:
            lo, hi = amps[i], amps[i + 1]
            for _ in range(80):
                mid = np.sqrt(lo * hi)
                if balance(mid) > 0:
                    lo = mid
                else:
                    hi = mid
            return float(np.sqrt(lo * hi))
    return None


def find_positive_solution(dp: DiscreteProblem, tol=1e-8, amplitudes=(0.1, 1.0, 3.0, 10.0),
                           min_sup=1e-2, rng=None, extra_seeds=(), enforce_positive=True):
    """Multi-start direct Newton aimed at a nontrivial nonnegative solution.

    Seeds, in order: ``extra_seeds``, the Nehari-scaled torsion bump, then
    ``amplitudes`` times the bump.  ``rng`` adds a 1% deterministic jitter.
    Returns ``(Field, SolveReport)`` of the first acceptable run, or the last
    attempt with ``converged=False``.
    """
    bump = torsion_bump(dp.mesh)
    seeds = [np.asarray(s.values if isinstance(s, Field) else s, float) for s in extra_seeds]
    a = nehari_amplitude(dp, bump)
    if a is not None:
        seeds.append(a * bump)
    seeds += [amp * bump for amp in amplitudes]
    last = None
    for k, s in enumerate(seeds):
        if rng is not None:
            s = s * (1 + 0.01 * rng.standard_normal(s.shape))
        u, rep = direct_solve(dp, s, tol=tol, enforce_positive=enforce_positive)
        rep.extra["seed_index"] = k
        last = (u, rep)
        if rep.converged and u.sup() >= min_sup:
            return u, rep
    u, rep = last
    rep.converged = False
    rep.message = "no nontrivial solution from any seed"
    return u, rep
