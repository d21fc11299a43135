"""Blow-up diagnostics: rescaling around maxima, limit checks, continuation in lambda,
and the scaling probe for the Lane-Emden problem on growing disks.

Rescaling with scale N and centre y maps a solution u on Omega to

    v(x) = u(y + x / phi(N)) / N   on   Omega_N = phi(N) (Omega - y),

where phi solves phi(N) g(N phi(N)) = f(N).  The rescaled nonlinearities are

    g_N(t) = g(N phi(N) t) / g(N phi(N)),
    B_N(x, t, p) = B(y + x / phi(N), N t, N phi(N) p) / f(N).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._roots import solve_increasing
from .errors import DomainError, SolverError
from .mesh import Field, Mesh, disk_mesh, interpolate, locate, rectangle_mesh, interval_mesh
from .source import SourceTerm, check_subcritical, lane_emden
from .solver import DiscreteProblem, direct_solve, find_positive_solution
from .young import YoungFunction, phi_implicit, regvar_exponent


def thread_count(default=1):
    """Worker cap from GLAP_THREADS (>= 1)."""
    try:
        return max(1, int(os.environ.get("GLAP_THREADS", default)))
    except ValueError:
        return default


# ---------------------------------------------------------------------------
# rescaling

@dataclass
class RescaleResult:
    case: str
    M_k: float
    x_k: list
    N_k: float
    y_k: list
    phi_Nk: float
    mu_k: float
    v: Field
    rescaled_mesh: Mesh
    boundary_distance: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"kind": "rescale_result", "case": self.case, "M_k": self.M_k,
                "x_k": self.x_k, "N_k": self.N_k, "y_k": self.y_k,
                "phi_Nk": self.phi_Nk, "mu_k": self.mu_k, "sup_v": self.v.sup(),
                "boundary_distance": self.boundary_distance,
                "n_vertices": self.rescaled_mesh.n_vertices, "flags": self.flags}


def _f_inverse(st: SourceTerm, y):
    try:
        return float(st.f.inverse(y))
    except ValueError:
        return float(solve_increasing(lambda t: st.f(t), np.array([y]))[0])


def _box_mesh(d, half_width, h):
    if d == 1:
        return interval_mesh(-half_width, half_width, h)
    return rectangle_mesh(-half_width, half_width, -half_width, half_width, h)


def rescale(u, dp: DiscreteProblem, case="case1", lambda_k=0.0, half_width=10.0,
            box_h=None) -> RescaleResult:
    """Blow-up rescaling of ``u`` in ``case1`` (N = sup u) or ``case2`` (N = f^-1(lambda)).

    The image mesh phi(N)(Omega - y) is used directly when it fits in the box
    [-half_width, half_width]^d.  Otherwise v is resampled onto a box mesh of
    spacing ``box_h`` with zero extension outside Omega_N and a ``truncated`` flag.
    """
    mesh = dp.mesh
    st = dp.source
    if st is None:
        raise DomainError("rescaling needs a source term with a growth law f")
    vals = u.values if isinstance(u, Field) else np.asarray(u, float)
    flags = []
    i_max = int(np.argmax(vals))
    M = float(vals[i_max])
    x_k = mesh.vertices[i_max]
    if case == "case1":
        if not M > 0:
            raise DomainError("case1 rescaling needs a field with positive sup")
        N, y = M, x_k.copy()
    elif case == "case2":
        if not lambda_k > 0:
            raise DomainError("case2 rescaling needs lambda_k > 0")
        N = _f_inverse(st, lambda_k)
        if not N > 0:
            raise DomainError(f"case2 scale f^-1({lambda_k:g}) = {N:g} is not positive")
        y = np.zeros(mesh.dimension)
        _, _, mn = locate(mesh, y[None, :])
        if mn[0] < -1e-12:
            y = mesh.vertices.mean(axis=0)
            flags.append("origin outside domain: centred at vertex centroid")
    else:
        raise ValueError(f"unknown case {case!r}")
    phi = phi_implicit(dp.yf, st.f, N)
    if not math.isfinite(phi) or phi <= 0:
        raise DomainError(f"phi(N) not finite for N={N:g}")
    mu = float(lambda_k / float(st.f(np.array([N]))[0]))

    image = phi * (mesh.vertices - y)
    if np.max(np.abs(image)) <= half_width * (1 + 1e-12):
        new_mesh = Mesh(image, mesh.elements, mesh.boundary,
                        {**mesh.shape, "rescaled_by": phi})
        v = vals / N
    else:
        flags.append("truncated")
        if box_h is None:
            box_h = min(mesh.h * phi, 2 * half_width / (1024 if mesh.dimension == 1 else 128))
        # even cell count keeps the origin (image of the centre) a vertex
        hb = half_width / math.ceil(half_width / box_h)
        new_mesh = _box_mesh(mesh.dimension, half_width, hb)
        v = interpolate(mesh, vals, y + new_mesh.vertices / phi, outside="zero") / N
    bnd = mesh.vertices[mesh.boundary]
    dist = float(np.min(np.linalg.norm(bnd - x_k, axis=1))) if len(bnd) else math.inf
    return RescaleResult(case, M, x_k.tolist(), float(N), np.asarray(y).tolist(), float(phi),
                         mu, Field(new_mesh, v), new_mesh, dist, flags)


# ---------------------------------------------------------------------------
# limit checks

@dataclass
class DeviationTable:
    N: list
    deviation: list
    exponent: float
    monotone: bool
    flags: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def slope(self, start=0):
        """Log-log slope of deviation against N."""
        N = np.log(np.asarray(self.N[start:]))
        d = np.log(np.asarray(self.deviation[start:]))
        return float(np.polyfit(N, d, 1)[0])

    def to_dict(self, kind="deviation_table"):
        return {"kind": kind, "N": self.N, "deviation": self.deviation,
                "exponent": self.exponent, "monotone": self.monotone,
                "flags": self.flags, **self.data}


def gk_limit_check(yf: YoungFunction, f, N_list, t_grid=None, p=None) -> DeviationTable:
    """sup_t |g(N phi(N) t)/g(N phi(N)) - t^(p-1)| for each N.

    ``p`` defaults to the exponent at infinity from :func:`regvar_exponent`.
    """
    N = np.asarray(N_list, float)
    if np.any(np.diff(N) <= 0):
        raise ValueError("N_list must be increasing")
    t = np.asarray(t_grid if t_grid is not None else np.linspace(0.0, 2.0, 201), float)
    if p is None:
        p, _ = regvar_exponent(yf)
    dev = []
    for Nk in N:
        s = Nk * phi_implicit(yf, f, Nk)
        gk = yf.g(s * t) / yf.g(s)
        dev.append(float(np.max(np.abs(gk - t ** (p - 1)))))
    mono = bool(np.all(np.diff(dev) <= 1e-10))
    return DeviationTable(N.tolist(), dev, float(p), mono)


def Bk_limit_check(st: SourceTerm, yf: YoungFunction, N_list, t_grid=None, p_grid=None,
                   x_samples=None, stall_ratio=0.5) -> DeviationTable:
    """Deviation of B_N from b(x) t^(q-1) with q the declared exponent of ``st``.

    Also reports ``growth_ratio`` = max |B_N| / (1 + f(N t)/f(N) + G(|p|)) per N
    and flags a plateau when the final deviation exceeds ``stall_ratio`` times
    the first.
    """
    N = np.asarray(N_list, float)
    if np.any(np.diff(N) <= 0):
        raise ValueError("N_list must be increasing")
    t = np.asarray(t_grid if t_grid is not None else np.linspace(0.0, 2.0, 41), float)
    pm = np.asarray(p_grid if p_grid is not None else [0.0, 0.5, 1.0, 2.0], float)
    x = np.asarray(x_samples if x_samples is not None else [[0.0], [0.5], [1.0]], float)
    x = x[:, None] if x.ndim == 1 else x
    X = np.repeat(x, len(t) * len(pm), axis=0)
    T = np.tile(np.repeat(t, len(pm)), len(x))
    P = np.zeros_like(X)
    P[:, 0] = np.tile(pm, len(x) * len(t))
    target = st.b(X) * T ** (st.q - 1)
    dev, growth = [], []
    with np.errstate(over="ignore", invalid="ignore"):
        for Nk in N:
            fN = float(st.f(np.array([Nk]))[0])
            a = Nk * phi_implicit(yf, st.f, Nk)
            Bk = st(X, Nk * T, a * P) / fN
            dev.append(float(np.max(np.abs(Bk - target))))
            denom = 1.0 + st.f(Nk * T) / fN + yf.G(np.abs(P[:, 0]))
            growth.append(float(np.max(np.abs(Bk) / denom)))
    # exponent and profile of the p = 0 slice at the largest N
    sel = (P[:, 0] == 0) & np.all(X == x[0], axis=1) & (T > 0)
    q_hat = 1.0 + float(np.polyfit(np.log(T[sel]), np.log(np.abs(Bk[sel]) + 1e-300), 1)[0])
    fN = float(st.f(np.array([N[-1]]))[0])
    b_hat = [float(st(xi[None, :], np.array([N[-1]]), np.zeros((1, x.shape[1])))[0] / fN)
             for xi in x]
    flags = []
    if dev[0] > 0 and dev[-1] > stall_ratio * dev[0]:
        flags.append("plateau: rescaled source does not approach b(x) t^(q-1)")
    mono = bool(np.all(np.diff(dev) <= 1e-12 * (1 + dev[0])))
    return DeviationTable(N.tolist(), dev, float(st.q), mono, flags,
                          {"q_hat": q_hat, "b_hat": b_hat, "growth_ratio": growth})


# ---------------------------------------------------------------------------
# continuation in lambda

@dataclass
class ContinuationConfig:
    tol: float = 1e-8
    n_bisect: int = 6
    warm_starts: int = 4
    amplitudes: tuple = (0.1, 1.0, 3.0, 10.0)
    min_sup: float = 1e-2
    warm_start: bool = True

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        if "amplitudes" in d:
            d["amplitudes"] = tuple(d["amplitudes"])
        return cls(**d)


@dataclass
class ContinuationTable:
    rows: list
    lambda_star_estimate: float
    max_bound_observed: float
    bracket: list | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        finite = math.isfinite(self.lambda_star_estimate)
        return {"kind": "continuation_table",
                "lambda_star": self.lambda_star_estimate if finite else None,
                "lambda_star_finite": finite, "C_emp": self.max_bound_observed,
                "bracket": self.bracket, "n_rows": len(self.rows), "notes": self.notes}


def _attempt(dp, lam, seeds, cfg):
    """Direct Newton from each seed in turn; returns (u, iterations) or (None, iterations)."""
    pdp = dp.replace(lam=lam)
    its = 0
    for s in seeds:
        try:
            u, rep = direct_solve(pdp, s, tol=cfg.tol, enforce_positive=True)
        except SolverError:
            continue
        its += rep.iterations
        if rep.converged and u.sup() >= cfg.min_sup:
            return u, its
    return None, its


def _cold(dp, lam, cfg):
    u, rep = find_positive_solution(dp.replace(lam=lam), tol=cfg.tol,
                                    amplitudes=cfg.amplitudes, min_sup=cfg.min_sup)
    return (u if rep.converged else None), rep.iterations


def _warm_seeds(prev, prev2, n):
    seeds = [prev]
    if prev2 is not None:
        seeds.append(np.maximum(2 * prev - prev2, 0.0))
    seeds += [1.05 * prev, 0.95 * prev, 1.2 * prev]
    return seeds[:n]


def lambda_continuation(dp_base: DiscreteProblem, lambda_grid, cfg=None) -> ContinuationTable:
    """Follow the positive branch along ``lambda_grid`` and bracket the first failure.

    A failure means no converged positive Newton run from ``cfg.warm_starts``
    seeds (or from the cold multi-start at the first lambda); it does not
    distinguish nonexistence from solver failure.
    """
    cfg = cfg or ContinuationConfig()
    lam = np.asarray(lambda_grid, float)
    if lam.size == 0 or np.any(np.diff(lam) <= 0):
        raise ValueError("lambda_grid must be nonempty and strictly increasing")
    rows = []

    def record(lv, u, its):
        rows.append({"lambda": float(lv), "sup_norm": u.sup() if u is not None else float("nan"),
                     "converged": u is not None, "iterations": int(its)})

    bracket = None
    if not cfg.warm_start:
        with ThreadPoolExecutor(thread_count()) as ex:
            results = list(ex.map(lambda lv: _cold(dp_base, lv, cfg), lam))
        for lv, (u, its) in zip(lam, results):
            record(lv, u, its)
            if u is None and bracket is None:
                last_ok = [r["lambda"] for r in rows if r["converged"]]
                bracket = [last_ok[-1] if last_ok else None, float(lv)]
    else:
        prev = prev2 = None
        for j, lv in enumerate(lam):
            if prev is None:
                u, its = _cold(dp_base, lv, cfg)
            else:
                u, its = _attempt(dp_base, lv, _warm_seeds(prev, prev2, cfg.warm_starts), cfg)
            record(lv, u, its)
            if u is None:
                bracket = [float(lam[j - 1]) if j > 0 else None, float(lv)]
                break
            prev2, prev = prev, u.values
        if bracket is not None and bracket[0] is not None:
            lo, hi = bracket
            base = prev
            for _ in range(cfg.n_bisect):
                mid = 0.5 * (lo + hi)
                u, its = _attempt(dp_base, mid, _warm_seeds(base, None, cfg.warm_starts), cfg)
                record(mid, u, its)
                if u is None:
                    hi = mid
                else:
                    lo, base = mid, u.values
            bracket = [lo, hi]
    rows.sort(key=lambda r: r["lambda"])
    ok = [r for r in rows if r["converged"]]
    C_emp = max((r["sup_norm"] + r["lambda"] for r in ok), default=float("nan"))
    notes = ["failure = no converged positive Newton run; nonexistence and solver "
             "failure are not distinguished"]
    if bracket is None:
        lam_star = math.inf
        notes.append("no failure on the grid: lambda* not bracketed")
    elif bracket[0] is None:
        lam_star = float(bracket[1])
        notes.append("failure at the first lambda")
    else:
        lam_star = 0.5 * (bracket[0] + bracket[1])
    return ContinuationTable(rows, lam_star, float(C_emp), bracket, notes)


# ---------------------------------------------------------------------------
# scaling probe on disks

@dataclass
class LiouvilleResult:
    p: float
    q: float
    radii: list
    sup_norms: list
    converged: list
    slope: float
    expected_slope: float
    pair_ratios: list
    flags: list = field(default_factory=list)

    def to_dict(self):
        return {"kind": "liouville_probe", "p": self.p, "q": self.q, "radii": self.radii,
                "sup_norms": self.sup_norms, "converged": self.converged,
                "slope": self.slope, "expected_slope": self.expected_slope,
                "pair_ratios": self.pair_ratios, "flags": self.flags}


def _disk_solve(p, q, R, h, tol):
    mesh = disk_mesh(R, h)
    dp = DiscreteProblem(mesh, YoungFunction.power(p), lane_emden(q))
    u, rep = find_positive_solution(dp, tol=tol, min_sup=1e-8)
    return u.sup(), rep.converged


def liouville_scaling_probe(p, q, radii=(1.0, 2.0, 4.0, 8.0), h=0.125, tol=1e-8,
                            exclude_smallest=True) -> LiouvilleResult:
    """Positive solutions of Delta_p u + u^(q-1) = 0 on disks B_R at fixed spacing ``h``.

    Fits the log-log slope of sup u_R against R (omitting the smallest radius
    by default); the scaling symmetry predicts -p/(q-p).
    """
    rep = check_subcritical(q, p, 2)
    if not (1 < p and rep.passed):
        raise DomainError(f"need 1 < p and p < q < p*: {rep.details}")
    radii = sorted(float(r) for r in radii)
    with ThreadPoolExecutor(thread_count()) as ex:
        out = list(ex.map(lambda R: _disk_solve(p, q, R, h, tol), radii))
    sups = [s for s, _ in out]
    conv = [c for _, c in out]
    flags = [f"solver failure at R={R:g}" for R, c in zip(radii, conv) if not c]
    start = 1 if exclude_smallest and len(radii) > 2 else 0
    use = [i for i in range(start, len(radii)) if conv[i]]
    slope = (float(np.polyfit(np.log([radii[i] for i in use]), np.log([sups[i] for i in use]), 1)[0])
             if len(use) >= 2 else float("nan"))
    ratios = [sups[i + 1] / sups[i] for i in range(len(radii) - 1)]
    return LiouvilleResult(float(p), float(q), radii, sups, conv, slope, -p / (q - p),
                           ratios, flags)
