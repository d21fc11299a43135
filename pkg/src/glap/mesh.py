"""Simplicial P1 meshes in 1D/2D, nodal fields, and discrete Orlicz modulars/norms."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshError

MAX_VERTICES = 10_000_000


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh with per-vertex boundary flags.

    ``vertices`` has shape (n, d); ``elements`` has shape (m, d + 1).
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    shape: dict | None = None

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        E = np.asarray(self.elements, dtype=np.int64)
        B = np.asarray(self.boundary, dtype=bool)
        if E.shape[1] != V.shape[1] + 1:
            raise MeshError("elements must be simplices of the mesh dimension")
        if B.shape != (V.shape[0],):
            raise MeshError("one boundary flag per vertex required")
        for name, arr in (("vertices", V), ("elements", E), ("boundary", B)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.element_measures <= 0):
            bad = int(np.argmin(self.element_measures))
            raise MeshError(f"degenerate element {bad}")

    @property
    def dimension(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @cached_property
    def _geometry(self):
        X = self.vertices[self.elements]                     # (m, d+1, d)
        D = X[:, 1:, :] - X[:, :1, :]                        # rows X_i - X_0
        det = np.linalg.det(D)
        if np.any(np.abs(det) <= 1e-300):
            raise MeshError("degenerate element")
        Dinv = np.linalg.inv(D)                              # (m, d, d)
        grads = np.empty_like(X)
        grads[:, 1:, :] = np.transpose(Dinv, (0, 2, 1))
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        meas = np.abs(det) / math.factorial(self.dimension)
        return meas, grads

    @cached_property
    def element_measures(self):
        return self._geometry[0]

    @cached_property
    def basis_gradients(self):
        """Gradients of the P1 hat functions, shape (m, d+1, d)."""
        return self._geometry[1]

    @cached_property
    def vertex_masses(self):
        k = self.dimension + 1
        w = np.repeat(self.element_measures / k, k)
        return np.bincount(self.elements.ravel(), weights=w, minlength=self.n_vertices)

    @property
    def measure(self):
        return float(self.element_measures.sum())

    @cached_property
    def free(self):
        return np.flatnonzero(~self.boundary)

    @cached_property
    def h(self):
        X = self.vertices[self.elements]
        k = X.shape[1]
        lengths = [np.linalg.norm(X[:, i] - X[:, j], axis=1)
                   for i in range(k) for j in range(i + 1, k)]
        return float(np.max(lengths))

    @cached_property
    def gradient_operators(self):
        """Sparse maps u -> element gradient component, one (m x n) matrix per axis."""
        m, k = self.elements.shape
        rows = np.repeat(np.arange(m), k)
        cols = self.elements.ravel()
        return [sp.csr_matrix((self.basis_gradients[:, :, d].ravel(), (rows, cols)),
                              shape=(m, self.n_vertices)) for d in range(self.dimension)]

    @cached_property
    def averaging_operator(self):
        """Sparse (n x m) map: element values -> measure-weighted vertex averages."""
        m, k = self.elements.shape
        rows = self.elements.ravel()
        cols = np.repeat(np.arange(m), k)
        w = np.repeat(self.element_measures, k)
        A = sp.csr_matrix((w, (rows, cols)), shape=(self.n_vertices, m))
        tot = np.asarray(A.sum(axis=1)).ravel()
        return sp.diags(1.0 / tot) @ A

    @cached_property
    def nodal_gradient_operators(self):
        """Sparse (n x n) maps u -> vertex-averaged gradient component."""
        W = self.averaging_operator
        return [(W @ Gd).tocsr() for Gd in self.gradient_operators]

    @cached_property
    def coo_index(self):
        """Row/column indices of the flattened element matrices."""
        k = self.elements.shape[1]
        rows = np.repeat(self.elements, k, axis=1).ravel()
        cols = np.tile(self.elements, (1, k)).ravel()
        return rows, cols

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.vertices[self.elements].mean(axis=1))

    def min_angle(self):
        """Smallest interior angle in degrees (2D meshes only)."""
        if self.dimension != 2:
            raise MeshError("min_angle is defined for triangle meshes")
        X = self.vertices[self.elements]
        out = np.inf
        for i in range(3):
            a = X[:, (i + 1) % 3] - X[:, i]
            b = X[:, (i + 2) % 3] - X[:, i]
            c = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out = min(out, float(np.degrees(np.arccos(np.clip(c, -1, 1))).min()))
        return out


@dataclass(frozen=True, eq=False)
class Field:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise MeshError("field length does not match the vertex count")
        if not np.all(np.isfinite(v)):
            raise MeshError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def sup(self):
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# mesh construction

def _count(length, h):
    r = length / h
    n = round(r)
    if abs(r - n) > 1e-9 * max(1.0, r):
        n = math.ceil(r)
    return max(1, int(n))


def _guard(n):
    if n > MAX_VERTICES:
        raise MeshError(f"requested mesh has {n} vertices (> {MAX_VERTICES})")


def interval_mesh(a, b, h):
    if not b > a or h <= 0:
        raise MeshError("interval needs b > a and h > 0")
    n = _count(b - a, h)
    _guard(n + 1)
    x = np.linspace(a, b, n + 1)
    el = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    bnd = np.zeros(n + 1, bool)
    bnd[[0, -1]] = True
    return Mesh(x[:, None], el, bnd, {"shape": "interval", "a": a, "b": b, "h": h})


def rectangle_mesh(ax, bx, ay, by, h):
    """Crossed-triangle mesh: every cell split into four by its centre."""
    if not (bx > ax and by > ay) or h <= 0:
        raise MeshError("rectangle needs positive extents and h > 0")
    nx, ny = _count(bx - ax, h), _count(by - ay, h)
    _guard((nx + 1) * (ny + 1) + nx * ny)
    xs, ys = np.linspace(ax, bx, nx + 1), np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    corners = np.column_stack([X.ravel(), Y.ravel()])
    cx, cy = 0.5 * (xs[1:] + xs[:-1]), 0.5 * (ys[1:] + ys[:-1])
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    centres = np.column_stack([CX.ravel(), CY.ravel()])
    verts = np.vstack([corners, centres])

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    v00 = I * (ny + 1) + J
    v10 = (I + 1) * (ny + 1) + J
    v11 = (I + 1) * (ny + 1) + J + 1
    v01 = I * (ny + 1) + J + 1
    c = (nx + 1) * (ny + 1) + I * ny + J
    el = np.vstack([np.column_stack([v00, v10, c]), np.column_stack([v10, v11, c]),
                    np.column_stack([v11, v01, c]), np.column_stack([v01, v00, c])])
    tol = 1e-12 * max(bx - ax, by - ay)
    bnd = ((np.abs(verts[:, 0] - ax) < tol) | (np.abs(verts[:, 0] - bx) < tol)
           | (np.abs(verts[:, 1] - ay) < tol) | (np.abs(verts[:, 1] - by) < tol))
    return Mesh(verts, el, bnd, {"shape": "rectangle", "ax": ax, "bx": bx,
                                 "ay": ay, "by": by, "h": h})


def disk_mesh(radius, h, sides=None, center=(0.0, 0.0)):
    """Regular ``sides``-gon approximation of a disk: centre point plus rings.

    Ring gaps grade geometrically from the boundary edge length down to ``h``
    so that a coarse polygon with a fine interior keeps well-shaped triangles.
    """
    if radius <= 0 or h <= 0:
        raise MeshError("disk needs positive radius and h")
    if sides is None:
        sides = max(6, round(2 * math.pi * radius / h))
    sides = int(sides)
    if sides < 3:
        raise MeshError("disk needs at least 3 sides")
    H = 2 * math.pi * radius / sides
    inner_r = radius * math.cos(math.pi / sides)
    rings = []                      # (radius, tangential spacing), outside in
    r, gap = radius, max(h, 0.87 * H)
    while gap > h * (1 + 1e-9) and r - gap > gap:
        r -= gap
        rings.append((r, gap))
        gap = max(h, gap / 1.4)
    # extreme sides/h mismatch: keep the last graded spacing down to the centre
    k = max(1, round(r / gap))
    rings += [(r * j / k, gap) for j in range(k - 1, 0, -1)]
    rings = [(min(rho, inner_r - 0.25 * s), s) for rho, s in rings]
    counts = [max(6, round(2 * math.pi * rho / s)) for rho, s in rings]
    _guard(1 + sum(counts) + sides)
    pts = [np.zeros((1, 2))]
    for j, ((rho, _), nj) in enumerate(zip(rings, counts)):
        th = 2 * math.pi * (np.arange(nj) + 0.5 * (j % 2)) / nj
        pts.append(np.column_stack([rho * np.cos(th), rho * np.sin(th)]))
    th = 2 * math.pi * np.arange(sides) / sides
    pts.append(np.column_stack([radius * np.cos(th), radius * np.sin(th)]))
    verts = np.vstack(pts)
    el = Delaunay(verts).simplices.astype(np.int64)
    # drop hull slivers (cocircular boundary points)
    X = verts[el]
    area = 0.5 * np.abs((X[:, 1, 0] - X[:, 0, 0]) * (X[:, 2, 1] - X[:, 0, 1])
                        - (X[:, 2, 0] - X[:, 0, 0]) * (X[:, 1, 1] - X[:, 0, 1]))
    el = el[area > 1e-12 * radius * radius]
    bnd = np.zeros(len(verts), bool)
    bnd[-sides:] = True
    verts = verts + np.asarray(center, float)
    return Mesh(verts, el, bnd, {"shape": "disk", "radius": radius, "sides": sides,
                                 "h": h, "center": list(map(float, center))})


def build_mesh(spec: dict) -> Mesh:
    """Build a mesh from ``{"shape": ..., extents..., "h": ...}``."""
    shape = spec.get("shape")
    h = float(spec["h"])
    if shape == "interval":
        return interval_mesh(float(spec.get("a", 0.0)), float(spec.get("b", 1.0)), h)
    if shape == "rectangle":
        return rectangle_mesh(float(spec.get("ax", 0.0)), float(spec.get("bx", 1.0)),
                              float(spec.get("ay", 0.0)), float(spec.get("by", 1.0)), h)
    if shape == "disk":
        return disk_mesh(float(spec.get("radius", 1.0)), h, spec.get("sides"),
                         tuple(spec.get("center", (0.0, 0.0))))
    raise MeshError(f"unknown mesh shape {shape!r}")


# ---------------------------------------------------------------------------
# field operations

def _values(u):
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


def gradient_per_element(mesh: Mesh, u) -> np.ndarray:
    """Exact gradient of the P1 interpolant on every element, shape (m, d)."""
    vals = _values(u)
    return np.einsum("mk,mkd->md", vals[mesh.elements], mesh.basis_gradients)


def nodal_gradient(mesh: Mesh, u) -> np.ndarray:
    """Measure-weighted average of element gradients at each vertex, shape (n, d)."""
    return mesh.averaging_operator @ gradient_per_element(mesh, u)


def modular(mesh: Mesh, u, yf, which="Phi_G"):
    """Discrete Phi_G (lumped vertex quadrature) or Phi_1G (one point per element)."""
    vals = _values(u)
    if which == "Phi_G":
        return float(np.sum(mesh.vertex_masses * yf.G(np.abs(vals))))
    if which == "Phi_1G":
        gr = np.linalg.norm(gradient_per_element(mesh, vals), axis=1)
        return float(np.sum(mesh.element_measures * yf.G(gr)))
    raise ValueError(f"unknown modular {which!r}")


def luxemburg_norm(mesh: Mesh, u, yf, which="L_G", rtol=1e-14):
    """inf{lam > 0 : modular(u / lam) <= 1}, by bracketing and bisection.

    The returned value always satisfies modular(u / value) <= 1.
    """
    mod = {"L_G": "Phi_G", "W1_G-seminorm": "Phi_1G"}.get(which)
    if mod is None:
        raise ValueError(f"unknown norm {which!r}")
    vals = _values(u)
    if mod == "Phi_G":
        mags, weights = np.abs(vals), mesh.vertex_masses
    else:
        mags = np.linalg.norm(gradient_per_element(mesh, vals), axis=1)
        weights = mesh.element_measures
    if not np.any(mags > 0):
        return 0.0

    def phi(lam):
        return float(np.sum(weights * yf.G(mags / lam)))

    # initial guess from a power-law homogeneity scale
    lam0 = float(np.max(mags)) * max(weights.sum(), 1e-300) ** 0.5
    lo, hi = 1e-3 * lam0, 1e3 * lam0
    while phi(hi) > 1:
        lo, hi = hi, hi * 1e3
    while phi(lo) <= 1:
        lo, hi = lo * 1e-3, lo
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if phi(mid) <= 1:
            hi = mid
        else:
            lo = mid
        if hi - lo <= rtol * hi:
            break
    return hi


def locate(mesh: Mesh, points, tol=1e-12, k=12):
    """Element index and barycentric coordinates per point (index -1 if not found)."""
    P = np.atleast_2d(np.asarray(points, float))
    if mesh.dimension == 1 and P.shape[1] != 1:
        P = P.reshape(-1, 1)
    npts = P.shape[0]
    elem = np.full(npts, -1)
    bary = np.zeros((npts, mesh.dimension + 1))
    X0 = mesh.vertices[mesh.elements[:, 0]]
    Dinv_T = mesh.basis_gradients[:, 1:, :]   # rows = grad lambda_i, i >= 1

    def coords(eidx, pts):
        lam = np.einsum("nid,nd->ni", Dinv_T[eidx], pts - X0[eidx])
        return np.column_stack([1 - lam.sum(axis=1), lam])

    kk = min(k, mesh.n_elements)
    _, cand = mesh._centroid_tree.query(P, k=kk)
    cand = np.asarray(cand).reshape(npts, kk)
    best_min = np.full(npts, -np.inf)
    for j in range(kk):
        lam = coords(cand[:, j], P)
        mn = lam.min(axis=1)
        better = mn > best_min
        elem[better] = cand[better, j]
        bary[better] = lam[better]
        best_min[better] = mn[better]
    miss = np.flatnonzero(best_min < -tol)
    for i in miss:   # exhaustive fallback
        lam = coords(np.arange(mesh.n_elements), np.repeat(P[i:i + 1], mesh.n_elements, 0))
        mn = lam.min(axis=1)
        j = int(np.argmax(mn))
        if mn[j] > best_min[i]:
            elem[i], bary[i], best_min[i] = j, lam[j], mn[j]
    return elem, bary, best_min


def interpolate(mesh: Mesh, u, points, tol=1e-12, clamp_tol=1e-6, outside="error",
                return_flags=False):
    """P1 interpolation of ``u`` at ``points``.

    Points within ``tol`` (barycentric) of the mesh are interior.  Points up to
    ``clamp_tol`` (relative to the mesh diameter) outside are clamped to the
    nearest element and flagged.  Farther points raise MeshError, or evaluate
    to zero when ``outside="zero"``.
    """
    vals = _values(u)
    elem, bary, mn = locate(mesh, points, tol)
    flags = mn < -tol
    far = np.zeros_like(flags)
    if flags.any():
        P = np.atleast_2d(np.asarray(points, float)).reshape(len(elem), -1)
        b = np.clip(bary[flags], 0, None)
        b /= b.sum(axis=1, keepdims=True)
        proj = np.einsum("nk,nkd->nd", b, mesh.vertices[mesh.elements[elem[flags]]])
        dist = np.linalg.norm(proj - P[flags], axis=1)
        diam = float(np.ptp(mesh.vertices, axis=0).max())
        far_local = dist > clamp_tol * diam
        far[np.flatnonzero(flags)[far_local]] = True
        if far.any() and outside == "error":
            raise MeshError(f"{int(far.sum())} point(s) far outside the domain")
        bary[flags] = b
    out = np.einsum("nk,nk->n", bary, vals[mesh.elements[elem]])
    # points sitting exactly on a vertex return its value without rounding
    P = np.atleast_2d(np.asarray(points, float)).reshape(len(elem), -1)
    k = np.argmax(bary, axis=1)
    vid = mesh.elements[elem, k]
    hit = np.all(mesh.vertices[vid] == P, axis=1)
    out[hit] = vals[vid[hit]]
    out[far] = 0.0
    if return_flags:
        return out, flags
    return out
