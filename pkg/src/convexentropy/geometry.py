"""Convex bodies and the constructions used to normalize and decompose them.

Bodies are tagged variants: polytope (dual V/H representation), Euclidean
ball, axis-aligned box, simplex.  Supported dimensions are 1..4; polytope
V<->H conversion is done by direct enumeration, which is fine at that scale.

All tolerances are absolute 1e-9 on offsets and determinants unless a call
site documents otherwise.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from .accel import halfspace_contains
from .errors import DegenerateBody, EmptyErosion, InradiusTooSmall, NumericFailure

TOL = 1e-9


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * radius**d


# ---------------------------------------------------------------------------
# affine maps


@dataclass(frozen=True)
class AffineMap:
    """x -> matrix @ x + translation."""

    matrix: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @classmethod
    def identity(cls, d: int) -> "AffineMap":
        return cls(np.eye(d), np.zeros(d))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + self.translation

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other: (self.compose(other))(x) == self(other(x))."""
        return AffineMap(self.matrix @ other.matrix, self.matrix @ other.translation + self.translation)

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(inv, -inv @ self.translation)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))


# ---------------------------------------------------------------------------
# helpers for the dual polytope representation


def _unit_halfspaces(normals, offsets):
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms < TOL):
        raise DegenerateBody("zero normal in half-space list")
    return normals / norms[:, None], offsets / norms


def _dedupe_rows(rows, decimals=8):
    seen = {}
    for r in rows:
        key = tuple(np.round(r, decimals))
        if key not in seen:
            seen[key] = r
    out = list(seen.values())
    out.sort(key=lambda r: tuple(r))
    return np.array(out)


def halfspaces_from_vertices(verts: np.ndarray):
    """Outward unit normals and offsets of conv(verts); verts must span R^d."""
    verts = np.asarray(verts, dtype=float)
    d = verts.shape[1]
    if d == 1:
        lo, hi = float(verts.min()), float(verts.max())
        if hi - lo < TOL:
            raise DegenerateBody("1-d polytope with empty interior")
        return np.array([[-1.0], [1.0]]), np.array([-lo, hi])
    try:
        hull = ConvexHull(verts)
    except Exception as exc:  # qhull failures on flat input
        raise DegenerateBody(f"convex hull failed: {exc}") from exc
    eq = hull.equations  # rows [normal, offset] with normal.x + offset <= 0 inside
    rows = _dedupe_rows(np.hstack([eq[:, :d], -eq[:, d:]]))
    return rows[:, :d].copy(), rows[:, d].copy()


def vertices_from_halfspaces(normals: np.ndarray, offsets: np.ndarray):
    """Enumerate vertices of {x : A x <= b} by intersecting d-subsets of planes."""
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    m, d = normals.shape
    pts = []
    for combo in itertools.combinations(range(m), d):
        A = normals[list(combo)]
        if abs(np.linalg.det(A)) < TOL:
            continue
        x = np.linalg.solve(A, offsets[list(combo)])
        if np.all(normals @ x <= offsets + 1e-7):
            pts.append(x)
    if not pts:
        raise DegenerateBody("half-space system has no vertices")
    return _dedupe_rows(np.array(pts), decimals=7)


def fan_triangulate_indices(points: np.ndarray):
    """Triangulate a full-dimensional convex polytope given by its vertices.

    Returns a list of (k+1)-tuples of indices into `points`.  The scheme cones
    from the lexicographically smallest vertex over the facets that do not
    contain it, recursing on the facets.
    """
    points = np.asarray(points, dtype=float)
    n, k = points.shape
    if k == 1:
        return [(int(np.argmin(points[:, 0])), int(np.argmax(points[:, 0])))]
    if n == k + 1:
        return [tuple(range(n))]
    normals, offsets = halfspaces_from_vertices(points)
    order = sorted(range(n), key=lambda i: tuple(points[i]))
    apex = order[0]
    simplices = []
    for a, b in zip(normals, offsets):
        if a @ points[apex] >= b - 1e-8:
            continue  # apex lies on this facet
        idx = [i for i in range(n) if abs(a @ points[i] - b) <= 1e-8]
        if len(idx) < k:
            raise DegenerateBody("facet with too few vertices")
        face = points[idx]
        basis = _plane_basis(a)
        proj = (face - face[0]) @ basis
        for sub in fan_triangulate_indices(proj):
            simplices.append(tuple(idx[j] for j in sub) + (apex,))
    return simplices


def _plane_basis(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis (d x (d-1)) of the hyperplane orthogonal to `normal`."""
    d = normal.shape[0]
    _, _, vt = np.linalg.svd(normal[None, :])
    return vt[1:d].T


def _simplex_volume(verts: np.ndarray) -> float:
    d = verts.shape[1]
    return abs(np.linalg.det(verts[1:] - verts[0])) / math.factorial(d)


# ---------------------------------------------------------------------------
# the body type


@dataclass
class ConvexBody:
    kind: str
    dim: int
    verts: np.ndarray | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    _volume: float | None = field(default=None, repr=False)

    # -- constructors -------------------------------------------------------

    @classmethod
    def ball(cls, center, radius: float) -> "ConvexBody":
        center = np.asarray(center, dtype=float)
        if radius <= TOL:
            raise DegenerateBody("ball radius must be positive")
        return cls(kind="ball", dim=center.shape[0], center=center, radius=float(radius))

    @classmethod
    def unit_ball(cls, d: int) -> "ConvexBody":
        return cls.ball(np.zeros(d), 1.0)

    @classmethod
    def box(cls, lower, upper) -> "ConvexBody":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(upper - lower <= TOL):
            raise DegenerateBody("box with empty interior")
        return cls(kind="box", dim=lower.shape[0], lower=lower, upper=upper)

    @classmethod
    def unit_cube(cls, d: int) -> "ConvexBody":
        return cls.box(np.zeros(d), np.ones(d))

    @classmethod
    def simplex(cls, verts) -> "ConvexBody":
        verts = np.asarray(verts, dtype=float)
        d = verts.shape[1]
        if verts.shape[0] != d + 1:
            raise DegenerateBody("simplex needs d+1 vertices")
        if abs(np.linalg.det(verts[1:] - verts[0])) < TOL:
            raise DegenerateBody("simplex vertices affinely dependent")
        normals, offsets = halfspaces_from_vertices(verts)
        return cls(kind="simplex", dim=d, verts=verts, normals=normals, offsets=offsets)

    @classmethod
    def polytope(cls, vertices=None, normals=None, offsets=None) -> "ConvexBody":
        if vertices is not None:
            verts = np.asarray(vertices, dtype=float)
            d = verts.shape[1]
            ns, os_ = halfspaces_from_vertices(verts)
            # keep only actual extreme points: vertices tight on >= d facets
            tight = np.sum(np.abs(verts @ ns.T - os_[None, :]) <= 1e-7, axis=1)
            verts = verts[tight >= d]
            body = cls(kind="polytope", dim=d, verts=_dedupe_rows(verts, 9), normals=ns, offsets=os_)
        elif normals is not None and offsets is not None:
            ns, os_ = _unit_halfspaces(normals, offsets)
            verts = vertices_from_halfspaces(ns, os_)
            body = cls(kind="polytope", dim=ns.shape[1], verts=verts, normals=ns, offsets=os_)
        else:
            raise ValueError("need vertices or half-spaces")
        if body.volume() < TOL:
            raise DegenerateBody("polytope has (numerically) empty interior")
        return body

    @classmethod
    def unit_simplex(cls, d: int) -> "ConvexBody":
        return cls.simplex(np.vstack([np.zeros(d), np.eye(d)]))

    # -- representations -----------------------------------------------------

    def vertex_array(self) -> np.ndarray:
        if self.kind in ("polytope", "simplex"):
            return self.verts
        if self.kind == "box":
            corners = np.array(list(itertools.product(*zip(self.lower, self.upper))))
            return corners
        raise ValueError(f"{self.kind} has no vertex list")

    def halfspace_arrays(self):
        if self.normals is not None:
            return self.normals, self.offsets
        if self.kind == "box":
            d = self.dim
            eye = np.eye(d)
            normals = np.vstack([eye, -eye])
            offsets = np.concatenate([self.upper, -self.lower])
            self.normals, self.offsets = normals, offsets
            return normals, offsets
        if self.kind in ("polytope", "simplex"):
            self.normals, self.offsets = halfspaces_from_vertices(self.verts)
            return self.normals, self.offsets
        raise ValueError(f"{self.kind} has no half-space list")

    def as_polytope(self) -> "ConvexBody":
        if self.kind == "polytope":
            return self
        if self.kind == "ball":
            raise ValueError("a ball is not a polytope")
        ns, os_ = self.halfspace_arrays()
        return ConvexBody(kind="polytope", dim=self.dim, verts=self.vertex_array(), normals=ns, offsets=os_)

    # -- basic queries -------------------------------------------------------

    def volume(self) -> float:
        if self._volume is not None:
            return self._volume
        if self.kind == "ball":
            v = ball_volume(self.dim, self.radius)
        elif self.kind == "box":
            v = float(np.prod(self.upper - self.lower))
        elif self.kind == "simplex":
            v = _simplex_volume(self.verts)
        else:
            v = 0.0
            verts = self.verts
            for idx in fan_triangulate_indices(verts):
                v += _simplex_volume(verts[list(idx)])
        if v < TOL:
            raise DegenerateBody("zero volume body")
        self._volume = v
        return v

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "ball":
            return np.linalg.norm(points - self.center, axis=1) <= self.radius + tol
        if self.kind == "box":
            return np.all((points >= self.lower - tol) & (points <= self.upper + tol), axis=1)
        ns, os_ = self.halfspace_arrays()
        return halfspace_contains(points, ns, os_, tol)

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the boundary for points inside the body."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "ball":
            return self.radius - np.linalg.norm(points - self.center, axis=1)
        ns, os_ = self.halfspace_arrays()
        return np.min(os_[None, :] - points @ ns.T, axis=1)

    def chebyshev(self):
        """(center, inradius) of the largest inscribed ball, by linear program."""
        if self.kind == "ball":
            return self.center.copy(), self.radius
        ns, os_ = self.halfspace_arrays()
        m, d = ns.shape
        c = np.zeros(d + 1)
        c[d] = -1.0
        A_ub = np.hstack([ns, np.ones((m, 1))])
        res = linprog(c, A_ub=A_ub, b_ub=os_, bounds=[(None, None)] * d + [(0, None)], method="highs")
        if not res.success:
            raise NumericFailure(f"Chebyshev LP failed: {res.message}")
        return res.x[:d], float(res.x[d])

    def aligned_bounds(self):
        if self.kind == "ball":
            return self.center - self.radius, self.center + self.radius
        if self.kind == "box":
            return self.lower.copy(), self.upper.copy()
        v = self.verts
        return v.min(axis=0), v.max(axis=0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform sample of n points, rejection from the aligned bounding box."""
        if self.kind == "ball":
            u = rng.normal(size=(n, self.dim))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            r = rng.uniform(size=n) ** (1.0 / self.dim)
            return self.center + self.radius * u * r[:, None]
        lo, hi = self.aligned_bounds()
        out = np.empty((n, self.dim))
        got = 0
        while got < n:
            cand = rng.uniform(lo, hi, size=(max(n, 1024), self.dim))
            keep = cand[self.contains(cand)]
            take = min(n - got, keep.shape[0])
            out[got : got + take] = keep[:take]
            got += take
        return out

    def transformed(self, T: AffineMap) -> "ConvexBody":
        if self.kind == "ball":
            A = T.matrix
            gram = A @ A.T
            scale = math.sqrt(abs(gram[0, 0]))
            if not np.allclose(gram, scale**2 * np.eye(self.dim), atol=1e-9):
                raise ValueError("only similarity maps keep a ball a ball")
            return ConvexBody.ball(T(self.center[None, :])[0], self.radius * scale)
        if self.kind == "box" and np.allclose(T.matrix, np.diag(np.diag(T.matrix)), atol=1e-12):
            dg = np.diag(T.matrix)
            if np.all(dg > 0):
                lo = T(self.lower[None, :])[0]
                hi = T(self.upper[None, :])[0]
                return ConvexBody.box(lo, hi)
        verts = T(self.vertex_array())
        if self.kind == "simplex":
            return ConvexBody.simplex(verts)
        return ConvexBody.polytope(vertices=verts)

    # -- interchange format --------------------------------------------------

    def to_dict(self) -> dict:
        doc = {"dim": self.dim, "variant": self.kind}
        if self.kind in ("polytope", "simplex"):
            ns, os_ = self.halfspace_arrays()
            doc["vertices"] = self.verts.tolist()
            doc["halfspaces"] = [{"normal": n.tolist(), "offset": float(o)} for n, o in zip(ns, os_)]
        elif self.kind == "ball":
            doc["center"] = self.center.tolist()
            doc["radius"] = self.radius
        elif self.kind == "box":
            doc["lower"] = self.lower.tolist()
            doc["upper"] = self.upper.tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ConvexBody":
        kind = doc["variant"]
        if kind == "ball":
            return cls.ball(doc["center"], doc["radius"])
        if kind == "box":
            return cls.box(doc["lower"], doc["upper"])
        if kind == "simplex":
            return cls.simplex(doc["vertices"])
        if kind == "polytope":
            if "vertices" in doc and doc["vertices"]:
                return cls.polytope(vertices=doc["vertices"])
            hs = doc["halfspaces"]
            return cls.polytope(
                normals=[h["normal"] for h in hs], offsets=[h["offset"] for h in hs]
            )
        raise ValueError(f"unknown variant {kind!r}")


def save_body(body: ConvexBody, path) -> None:
    with open(path, "w") as fh:
        json.dump(body.to_dict(), fh, indent=1, sort_keys=True)


def load_body(path) -> ConvexBody:
    with open(path) as fh:
        return ConvexBody.from_dict(json.load(fh))


BUILTIN_BODIES = {
    "unit-cube-1": lambda: ConvexBody.unit_cube(1),
    "unit-cube-2": lambda: ConvexBody.unit_cube(2),
    "unit-cube-3": lambda: ConvexBody.unit_cube(3),
    "unit-ball-2": lambda: ConvexBody.unit_ball(2),
    "unit-ball-3": lambda: ConvexBody.unit_ball(3),
    "unit-simplex-2": lambda: ConvexBody.unit_simplex(2),
    "unit-simplex-3": lambda: ConvexBody.unit_simplex(3),
    "right-triangle": lambda: ConvexBody.simplex([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
}


# ---------------------------------------------------------------------------
# boxing and normalization


@dataclass(frozen=True)
class RotatedBox:
    """{x : lo <= Q^T x <= hi} with orthonormal columns Q."""

    axes: np.ndarray  # (d, d), columns orthonormal
    lo: np.ndarray
    hi: np.ndarray

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        y = points @ self.axes
        return np.all((y >= self.lo - tol) & (y <= self.hi + tol), axis=1)


def _lift_point(verts: np.ndarray, basis: np.ndarray, anchor: np.ndarray, target: np.ndarray):
    """A point of conv(verts) whose basis-projection (relative to anchor) is target."""
    n = verts.shape[0]
    A_eq = np.vstack([basis.T @ verts.T, np.ones((1, n))])
    b_eq = np.concatenate([target + basis.T @ anchor, [1.0]])
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    if not res.success:
        raise NumericFailure("lift LP infeasible; projected target not in hull")
    return verts.T @ res.x


def _box_recursion(verts: np.ndarray):
    """Recursive diameter construction: returns (RotatedBox, inner vertex list)."""
    n, k = verts.shape
    if k == 1:
        lo, hi = float(verts.min()), float(verts.max())
        if hi - lo < TOL:
            raise NumericFailure("degenerate direction in boxing recursion")
        box = RotatedBox(np.eye(1), np.array([lo]), np.array([hi]))
        return box, np.array([[lo], [hi]])
    diffs = verts[:, None, :] - verts[None, :, :]
    dist2 = np.sum(diffs * diffs, axis=2)
    i, j = np.unravel_index(np.argmax(dist2), dist2.shape)
    h = math.sqrt(dist2[i, j])
    if h < TOL:
        raise NumericFailure("diameter search found no extent")
    x, y = verts[i], verts[j]
    u = (y - x) / h
    basis = _plane_basis(u)  # (k, k-1)
    proj = (verts - x) @ basis
    sub_box, sub_inner = _box_recursion(proj)
    lifted = [x, y]
    for t in sub_inner:
        lifted.append(_lift_point(verts, basis, x, t))
    inner = _dedupe_rows(np.array(lifted), decimals=9)
    axes = np.hstack([basis @ sub_box.axes, u[:, None]])
    anchor = axes.T @ x
    lo = np.concatenate([sub_box.lo, [0.0]]) + anchor
    hi = np.concatenate([sub_box.hi, [h]]) + anchor
    return RotatedBox(axes, lo, hi), inner


def bounding_box(body: ConvexBody):
    """Enclosing rotated box and inscribed polytope with at most 2d vertices.

    The box has volume at most d! * |body| and the inner polytope has volume
    at least |body| / d!.  Balls and boxes take the analytic route; polytopes
    run the diameter recursion with exact pairwise vertex distances.
    """
    d = body.dim
    if body.kind == "ball":
        box = RotatedBox(np.eye(d), body.center - body.radius, body.center + body.radius)
        inner_verts = np.vstack(
            [body.center + body.radius * e for e in np.eye(d)]
            + [body.center - body.radius * e for e in np.eye(d)]
        )
    elif body.kind == "box":
        box = RotatedBox(np.eye(d), body.lower.copy(), body.upper.copy())
        mid = (body.lower + body.upper) / 2.0
        half = (body.upper - body.lower) / 2.0
        inner_verts = np.vstack(
            [mid + half * e for e in np.eye(d)] + [mid - half * e for e in np.eye(d)]
        )
    else:
        box, inner_verts = _box_recursion(body.vertex_array())
    if d == 1:
        inner = ConvexBody.polytope(vertices=inner_verts)
    elif inner_verts.shape[0] == d + 1:
        inner = ConvexBody.simplex(inner_verts)
    else:
        inner = ConvexBody.polytope(vertices=inner_verts)
    return box, inner


def normalize(body: ConvexBody):
    """Affine map T with T(body) inside the unit cube and volume >= 1/d!."""
    box, _ = bounding_box(body)
    size = box.hi - box.lo
    A = np.diag(1.0 / size) @ box.axes.T
    t = -box.lo / size
    T = AffineMap(A, t)
    return T, body.transformed(T)


# ---------------------------------------------------------------------------
# erosion


def erode(body: ConvexBody, delta: float) -> ConvexBody:
    """Inner parallel body: points at boundary distance at least delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    if body.kind == "ball":
        if delta >= body.radius - TOL:
            raise EmptyErosion("delta at least the radius")
        return ConvexBody.ball(body.center, body.radius - delta)
    if body.kind == "box":
        if np.any(body.upper - body.lower <= 2 * delta + TOL):
            raise EmptyErosion("delta at least a half-extent")
        return ConvexBody.box(body.lower + delta, body.upper - delta)
    _, inr = body.chebyshev()
    if delta >= inr - TOL:
        raise EmptyErosion("delta at least the inradius")
    ns, os_ = body.halfspace_arrays()
    return ConvexBody.polytope(normals=ns, offsets=os_ - delta)


# ---------------------------------------------------------------------------
# decompositions


@dataclass
class Decomposition:
    parent: ConvexBody
    cells: list

    @property
    def count(self) -> int:
        return len(self.cells)

    def volume_mismatch(self) -> float:
        """Relative gap between the cell-volume sum and the parent volume."""
        total = sum(c.volume() for c in self.cells)
        ref = self.parent.volume()
        return abs(total - ref) / ref

    def montecarlo_unique_cover(self, n: int, seed: int, tol: float = 1e-9) -> float:
        """Fraction of uniform parent samples covered by exactly one cell."""
        rng = np.random.default_rng(seed)
        pts = self.parent.sample(n, rng)
        counts = np.zeros(n, dtype=int)
        for c in self.cells:
            counts += c.contains(pts, tol=-tol).astype(int)
        return float(np.mean(counts == 1))


def triangulate(body: ConvexBody) -> Decomposition:
    """Partition a polytope-like body into simplices by recursive coning."""
    if body.kind == "ball":
        raise ValueError("cannot triangulate a ball")
    if body.kind == "simplex":
        return Decomposition(body, [body])
    poly = body.as_polytope()
    verts = poly.verts
    cells = []
    for idx in fan_triangulate_indices(verts):
        sv = verts[list(idx)]
        if abs(np.linalg.det(sv[1:] - sv[0])) < TOL:
            continue  # sliver from a merged facet; carries no volume
        cells.append(ConvexBody.simplex(sv))
    return Decomposition(body, cells)


def shell_decompose(body: ConvexBody, delta: float):
    """Split a polytope into a shrunken core and one frustum shell per facet.

    The core is the body scaled about its Chebyshev center by 1 - delta/r
    where r is the inradius; each shell is the part of the facet cone outside
    the core.  Requires delta < inradius.
    """
    poly = body.as_polytope()
    center, inradius = poly.chebyshev()
    if delta >= inradius - TOL:
        raise InradiusTooSmall("delta must be below the Chebyshev clearance")
    t = delta / inradius
    ns, os_ = poly.halfspace_arrays()
    core_offsets = (1.0 - t) * os_ + t * (ns @ center)
    core = ConvexBody.polytope(normals=ns, offsets=core_offsets)
    shells = []
    verts = poly.verts
    for a, b in zip(ns, os_):
        on_facet = np.abs(verts @ a - b) <= 1e-8
        face = verts[on_facet]
        scaled = center + (1.0 - t) * (face - center)
        shells.append(ConvexBody.polytope(vertices=np.vstack([face, scaled])))
    return core, shells, Decomposition(poly, [core] + shells), {
        "center": center,
        "inradius": inradius,
        "shrink": 1.0 - t,
        "shell_volume_identity": poly.volume() * (1.0 - (1.0 - t) ** poly.dim),
    }
