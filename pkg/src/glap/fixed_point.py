"""Cone fixed-point machinery: T(u) = B + L g(u), Lambda = S o T, H(t, u) = S(T(u) + t lambda0).

Plain (damped) Picard iteration on Lambda is not globally convergent for
superlinear sources: the positive solution is typically a repelling fixed
point.  :func:`solve_multistart` therefore brackets it between collapsing
and escaping starts, refines the bracket by amplitude bisection and polishes
the best iterate with direct Newton.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .mesh import Field, gradient_per_element, nodal_gradient
from .solver import DiscreteProblem, direct_solve, inner_solve, residual, torsion_bump

OUTCOMES = ("converged", "escaped_R", "collapsed_to_zero", "max_iters")
CONE_TOL = 1e-10


@dataclass
class FixedPointConfig:
    omega: float = 0.5
    homotopy_t: float = 0.0
    lambda0: float = 0.0
    r: float = 1e-2
    R: float = 1e2
    max_outer: int = 200
    tol_outer: float = 1e-8
    inner_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.omega <= 1:
            raise ValueError("damping omega must lie in (0, 1]")
        if not 0 < self.r < self.R:
            raise ValueError("need 0 < r < R")
        if not 0 <= self.homotopy_t <= 1:
            raise ValueError("homotopy_t must lie in [0, 1]")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative")

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__})

    def to_dict(self):
        return asdict(self)


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    outcome: str = "max_iters"
    weak_residual: float | None = None
    fixed_point_gap: float | None = None
    inner_failure: bool = False
    cone_violations: int = 0
    via: str = "picard"
    starts: list = field(default_factory=list)
    # (relative update, iterate) with the smallest relative update inside the annulus
    best: tuple | None = field(default=None, repr=False)

    def add(self, **rec):
        self.records.append(rec)

    def summary(self):
        return {"kind": "iteration_trace", "outcome": self.outcome,
                "iterations": len(self.records),
                "final_sup_norm": self.records[-1]["sup_norm"] if self.records else None,
                "weak_residual": self.weak_residual,
                "fixed_point_gap": self.fixed_point_gap,
                "inner_failure": self.inner_failure,
                "cone_violations": self.cone_violations, "via": self.via,
                "starts": self.starts}


def c1_norm(mesh, u):
    """Discrete C^1 norm: sup |u| + max over elements of |grad u|."""
    v = u.values if isinstance(u, Field) else np.asarray(u, float)
    g = np.linalg.norm(gradient_per_element(mesh, v), axis=1)
    return float(np.max(np.abs(v)) + (np.max(g) if g.size else 0.0))


def apply_T(dp: DiscreteProblem, u):
    """Nodal T(u) = B(x, u, averaged grad u) + L g(|u|) sgn(u)."""
    mesh = dp.mesh
    v = u.values if isinstance(u, Field) else np.asarray(u, float)
    out = dp.L * dp.yf.g(np.abs(v)) * np.sign(v)
    if dp.source is not None:
        B = dp.source(mesh.vertices, v, nodal_gradient(mesh, v))
        bad = np.flatnonzero(~np.isfinite(B))
        if bad.size:
            from .errors import SolverError
            raise SolverError(f"non-finite source at node {int(bad[0])}", node=int(bad[0]))
        out = out + B
    return Field(mesh, out)


def apply_Lambda(dp: DiscreteProblem, u, cfg: FixedPointConfig, u_guess=None):
    """S(T(u) + homotopy_t * lambda0), projected onto the nonnegative cone.

    The report's ``extra["cone_violations"]`` counts nodes below -1e-10
    before projection.
    """
    psi = apply_T(dp, u).values + cfg.homotopy_t * cfg.lambda0
    w, rep = inner_solve(dp, psi, tol=cfg.inner_tol, u0=u_guess)
    vals = w.values
    rep.extra["cone_violations"] = int(np.sum(vals < -CONE_TOL))
    return Field(dp.mesh, np.maximum(vals, 0.0)), rep


def iterate(dp: DiscreteProblem, u0, cfg: FixedPointConfig):
    """Damped iteration u <- (1 - omega) u + omega Lambda(u) with annulus stops."""
    mesh = dp.mesh
    u = np.maximum(u0.values if isinstance(u0, Field) else np.asarray(u0, float), 0.0)
    u[mesh.boundary] = 0.0
    trace = IterationTrace()
    guess = None
    for k in range(cfg.max_outer):
        lam_u, rep = apply_Lambda(dp, u, cfg, guess)
        trace.cone_violations += rep.extra["cone_violations"]
        if not rep.converged:
            trace.inner_failure = True
            trace.outcome = "max_iters"
            break
        guess = lam_u
        new = (1 - cfg.omega) * u + cfg.omega * lam_u.values
        upd = c1_norm(mesh, new - u)
        sup = float(np.max(np.abs(new)))
        trace.add(iter=k + 1, sup_norm=sup, c1_norm=c1_norm(mesh, new), update=upd,
                  inner_iters=rep.iterations)
        c1 = trace.records[-1]["c1_norm"]
        if cfg.r <= sup <= cfg.R and (trace.best is None or upd / c1 < trace.best[0]):
            trace.best = (upd / c1, new.copy())
        u = new
        if not np.isfinite(sup) or sup > cfg.R:
            trace.outcome = "escaped_R"
            break
        if sup < cfg.r * 1e-2:
            trace.outcome = "collapsed_to_zero"
            break
        if upd <= cfg.tol_outer:
            trace.outcome = "converged"
            break
    if trace.outcome == "converged":
        _finalise(dp, u, cfg, trace)
    return Field(mesh, u), trace


def _finalise(dp, u, cfg, trace):
    # cold inner start: a warm start at u would return u unchanged
    lam_u, _ = apply_Lambda(dp, u, cfg)
    trace.fixed_point_gap = float(np.max(np.abs(lam_u.values - u)))
    pdp = dp.replace(lam=cfg.homotopy_t * cfg.lambda0)
    trace.weak_residual = float(np.linalg.norm(residual(pdp, u, mode="direct")[dp.mesh.free]))


def solve_multistart(dp: DiscreteProblem, cfg: FixedPointConfig,
                     amplitudes=(0.1, 1.0, 3.0, 10.0), shape=None, n_refine=12,
                     newton_tol=1e-10):
    """Multi-start damped iteration with amplitude bracketing and Newton fallback.

    Returns ``(Field, IterationTrace)``; ``trace.via`` records whether the
    fixed point came from Picard iteration or the Newton polish.
    """
    mesh = dp.mesh
    bump = torsion_bump(mesh) if shape is None else np.asarray(shape, float)
    starts, best = [], None

    def run(a):
        nonlocal best
        u, tr = iterate(dp, a * bump, cfg)
        starts.append({"amplitude": float(a), "outcome": tr.outcome,
                       "iterations": len(tr.records)})
        if tr.best is not None and (best is None or tr.best[0] < best[0]):
            best = tr.best
        return u, tr

    collapse, escape = None, None
    for a in sorted(amplitudes):
        u, tr = run(a)
        if tr.outcome == "converged":
            tr.starts = starts
            return u, tr
        if tr.outcome == "collapsed_to_zero":
            collapse = a if collapse is None else max(collapse, a)
        elif tr.outcome == "escaped_R" and escape is None:
            escape = a
    if collapse is not None and escape is not None and collapse < escape:
        lo, hi = collapse, escape
        for _ in range(n_refine):
            mid = np.sqrt(lo * hi)
            u, tr = run(mid)
            if tr.outcome == "converged":
                tr.starts = starts
                return u, tr
            if tr.outcome == "collapsed_to_zero":
                lo = mid
            elif tr.outcome == "escaped_R":
                hi = mid
            else:
                break
    trace = IterationTrace(starts=starts, via="newton_fallback")
    if best is None:
        return Field(mesh, np.zeros(mesh.n_vertices)), trace
    pdp = dp.replace(lam=cfg.homotopy_t * cfg.lambda0)
    u, rep = direct_solve(pdp, best[1], tol=newton_tol, enforce_positive=True)
    sup = u.sup()
    trace.add(iter=0, sup_norm=sup, c1_norm=c1_norm(mesh, u), update=float("nan"),
              inner_iters=rep.iterations)
    if rep.converged and cfg.r <= sup <= cfg.R:
        trace.outcome = "converged"
        _finalise(dp, u.values, cfg, trace)
    elif sup > cfg.R or rep.escaped:
        trace.outcome = "escaped_R"
    elif rep.converged and sup < cfg.r:
        trace.outcome = "collapsed_to_zero"
    else:
        trace.outcome = "max_iters"
    return u, trace


def probe_small_sphere(dp: DiscreteProblem, cfg: FixedPointConfig, t_values=(0.0, 0.25, 0.5, 0.75, 1.0),
                       shape=None):
    """Probe u = t Lambda(u) on the sphere ||u||_C1 = r along the profile direction.

    Returns, per t, ``||u - t Lambda(u)||_sup`` for u = r * w / ||w||_C1; a
    positive gap at every t is consistent with no solution on the small sphere.
    """
    mesh = dp.mesh
    w = torsion_bump(mesh) if shape is None else np.asarray(shape, float)
    u = cfg.r * w / c1_norm(mesh, w)
    lam_u, _ = apply_Lambda(dp, u, FixedPointConfig(**{**cfg.to_dict(), "homotopy_t": 0.0}))
    return [{"t": float(t), "gap": float(np.max(np.abs(u - t * lam_u.values)))}
            for t in t_values]
