"""Piecewise-linear convex functions and L^p norms/distances on convex bodies.

Exact integration is provided where the acceptance checks need tight numbers:
1-d piecewise-affine functions for any p >= 1, and p in {1, 2} in higher
dimension via dominance-region subdivision.  Everything else goes through
seeded Monte Carlo (unbiased, with a standard error) or a midpoint grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .accel import pair_ratio_max, pwl_eval
from .errors import DegenerateBody, NotInClass
from .geometry import ConvexBody, erode, fan_triangulate_indices, triangulate

INF = float("inf")


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "exact"  # exact | grid | monte-carlo
    samples: int = 100_000
    resolution: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("exact", "grid", "monte-carlo"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.method == "grid" and self.resolution < 2:
            raise ValueError("grid resolution must be at least 2 per axis")

    @classmethod
    def exact(cls) -> "QuadratureSpec":
        return cls(method="exact")

    @classmethod
    def mc(cls, samples: int, seed: int) -> "QuadratureSpec":
        return cls(method="monte-carlo", samples=samples, seed=seed)


@dataclass(frozen=True)
class NormResult:
    value: float
    error: float
    method: str
    fallback: bool = False  # set when an exact request fell back to the grid


class PwlConvexFn:
    """max over finitely many affine pieces, restricted to a domain body."""

    def __init__(self, body: ConvexBody, grads, intercepts):
        self.body = body
        self.grads = np.atleast_2d(np.asarray(grads, dtype=float))
        self.intercepts = np.asarray(intercepts, dtype=float)
        if self.grads.shape[0] != self.intercepts.shape[0]:
            raise ValueError("piece count mismatch")
        if self.grads.shape[1] != body.dim:
            raise ValueError("gradient dimension mismatch")

    @property
    def npieces(self) -> int:
        return self.grads.shape[0]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pwl_eval(pts, self.grads, self.intercepts)

    def shifted(self, c: float) -> "PwlConvexFn":
        return PwlConvexFn(self.body, self.grads, self.intercepts + c)

    def to_dict(self) -> dict:
        return {
            "domain": self.body.to_dict(),
            "pieces": [
                {"gradient": g.tolist(), "intercept": float(c)}
                for g, c in zip(self.grads, self.intercepts)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PwlConvexFn":
        body = ConvexBody.from_dict(doc["domain"])
        grads = [p["gradient"] for p in doc["pieces"]]
        icpts = [p["intercept"] for p in doc["pieces"]]
        return cls(body, grads, icpts)


# ---------------------------------------------------------------------------
# exact integration helpers


def _abs_affine_integral_1d(g: float, c: float, a: float, b: float, p: float) -> float:
    """integral over [a,b] of |g x + c|^p, closed form for any real p >= 1."""
    if abs(g) < 1e-15:
        return abs(c) ** p * (b - a)

    def F(x):
        u = g * x + c
        return abs(u) ** (p + 1.0) * math.copysign(1.0, u) / (g * (p + 1.0))

    root = -c / g
    if a < root < b:
        return abs(F(root) - F(a)) + abs(F(b) - F(root))
    return abs(F(b) - F(a))


def _pwl_breakpoints_1d(segs, lo, hi):
    """Sorted cut points where any two affine pieces cross inside [lo, hi]."""
    cuts = {lo, hi}
    m = len(segs)
    for i in range(m):
        gi, ci = segs[i]
        for j in range(i + 1, m):
            gj, cj = segs[j]
            if abs(gi - gj) > 1e-14:
                x = (cj - ci) / (gi - gj)
                if lo < x < hi:
                    cuts.add(float(x))
    return sorted(cuts)


def _exact_1d_pwl_norm(segs, lo, hi, p: float) -> float:
    """L^p norm of the upper envelope of affine pieces on [lo, hi]."""
    cuts = _pwl_breakpoints_1d(segs, lo, hi)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        g, c = max(segs, key=lambda s: s[0] * mid + s[1])
        total += _abs_affine_integral_1d(g, c, a, b, p)
    return total ** (1.0 / p)


def _exact_1d_pwl_diff_norm(segs_f, segs_g, lo, hi, p: float) -> float:
    """L^p distance between two 1-d upper envelopes."""
    cuts = set(_pwl_breakpoints_1d(segs_f, lo, hi)) | set(_pwl_breakpoints_1d(segs_g, lo, hi))
    # also cut where the difference changes sign is handled inside the
    # piecewise closed form, so envelope transitions are enough
    cuts = sorted(cuts)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        gf, cf = max(segs_f, key=lambda s: s[0] * mid + s[1])
        gg, cg = max(segs_g, key=lambda s: s[0] * mid + s[1])
        total += _abs_affine_integral_1d(gf - gg, cf - cg, a, b, p)
    return total ** (1.0 / p)


def _simplex_affine_moment(verts: np.ndarray, vals: np.ndarray, p: int, vol: float) -> float:
    """integral over the simplex of L^p for an affine L with vertex values."""
    d = verts.shape[1]
    if p == 1:
        return vol * float(np.mean(vals))
    if p == 2:
        s = float(np.sum(vals))
        return vol / ((d + 1) * (d + 2)) * (float(np.sum(vals**2)) + s * s)
    raise ValueError("exact simplex moments only for p in {1, 2}")


def _dominance_regions(fn: PwlConvexFn, within: ConvexBody):
    """Cells of `within` where each affine piece attains the maximum."""
    ns, os_ = within.halfspace_arrays()
    m = fn.npieces
    regions = []
    for i in range(m):
        rows = [ns]
        offs = [os_]
        for j in range(m):
            if j == i:
                continue
            a = fn.grads[j] - fn.grads[i]
            na = np.linalg.norm(a)
            if na < 1e-14:
                if fn.intercepts[j] > fn.intercepts[i] + 1e-14:
                    break  # piece i strictly dominated everywhere
                continue
            rows.append((a / na)[None, :])
            offs.append(np.array([(fn.intercepts[i] - fn.intercepts[j]) / na]))
        else:
            try:
                poly = ConvexBody.polytope(
                    normals=np.vstack(rows), offsets=np.concatenate(offs)
                )
            except DegenerateBody:
                continue
            regions.append((i, poly))
    return regions


def _exact_nd_pwl_norm(fn: PwlConvexFn, body: ConvexBody, p: int) -> float:
    total = 0.0
    for i, region in _dominance_regions(fn, body):
        g, c = fn.grads[i], fn.intercepts[i]
        total += _integrate_abs_affine_region(region, g, c, p)
    return total ** (1.0 / p)


def _integrate_abs_affine_region(region: ConvexBody, g: np.ndarray, c: float, p: int) -> float:
    """integral of |g.x + c|^p over a polytope, p in {1, 2}."""
    if p == 2:
        parts = [region]  # square needs no sign split
    else:
        parts = []
        ng = np.linalg.norm(g)
        if ng < 1e-14:
            parts = [region]
        else:
            ns, os_ = region.halfspace_arrays()
            for sgn in (1.0, -1.0):
                try:
                    parts.append(
                        ConvexBody.polytope(
                            normals=np.vstack([ns, (sgn * g / ng)[None, :]]),
                            offsets=np.concatenate([os_, [sgn * (-c) / ng]]),
                        )
                    )
                except DegenerateBody:
                    continue
    total = 0.0
    for part in parts:
        verts = part.verts
        for idx in fan_triangulate_indices(verts):
            sv = verts[list(idx)]
            vol = abs(np.linalg.det(sv[1:] - sv[0])) / math.factorial(sv.shape[1])
            if vol < 1e-15:
                continue
            vals = sv @ g + c
            total += abs(_simplex_affine_moment(sv, np.abs(vals), p, vol))
    return total


def _pwl_sup_norm(fn: PwlConvexFn, body: ConvexBody) -> float:
    """Exact sup of |f|: max at body vertices, min by linear program."""
    verts = body.vertex_array() if body.kind != "ball" else None
    if verts is None:
        raise ValueError("exact sup norm needs a polytope-like body")
    fmax = float(np.max(fn(verts)))
    d = body.dim
    ns, os_ = body.halfspace_arrays()
    m = fn.npieces
    # variables (x, z): minimize z subject to z >= g_i.x + c_i, x in body
    c_obj = np.zeros(d + 1)
    c_obj[d] = 1.0
    A_ub = np.zeros((m + ns.shape[0], d + 1))
    A_ub[:m, :d] = fn.grads
    A_ub[:m, d] = -1.0
    A_ub[m:, :d] = ns
    b_ub = np.concatenate([-fn.intercepts, os_])
    res = linprog(c_obj, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * (d + 1), method="highs")
    fmin = float(res.fun) if res.success else fmax
    return max(abs(fmax), abs(fmin))


# ---------------------------------------------------------------------------
# public norm / distance entry points


def _mc_norm(evalfn, body: ConvexBody, p: float, quad: QuadratureSpec) -> NormResult:
    rng = np.random.default_rng(quad.seed)
    pts = body.sample(quad.samples, rng)
    vals = np.abs(np.asarray(evalfn(pts), dtype=float))
    if p == INF:
        v_all = float(vals.max())
        v_half = float(vals[: quad.samples // 2].max())
        return NormResult(v_all, v_all - v_half, "monte-carlo")
    pows = vals**p
    mean = float(np.mean(pows))
    se = float(np.std(pows, ddof=1) / math.sqrt(len(pows)))
    vol = body.volume()
    value = (vol * mean) ** (1.0 / p)
    if mean > 0:
        err = (1.0 / p) * (vol * mean) ** (1.0 / p - 1.0) * vol * se
    else:
        err = 0.0
    return NormResult(value, err, "monte-carlo")


def _grid_norm(evalfn, body: ConvexBody, p: float, quad: QuadratureSpec, fallback=False) -> NormResult:
    lo, hi = body.aligned_bounds()
    axes = [np.linspace(l, h, quad.resolution, endpoint=False) + (h - l) / (2 * quad.resolution)
            for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    inside = body.contains(pts)
    pts = pts[inside]
    vals = np.abs(np.asarray(evalfn(pts), dtype=float))
    if p == INF:
        return NormResult(float(vals.max()), float("nan"), "grid", fallback)
    cellvol = float(np.prod((hi - lo) / quad.resolution))
    value = (np.sum(vals**p) * cellvol) ** (1.0 / p)
    return NormResult(float(value), float("nan"), "grid", fallback)


def lp_norm(f, body: ConvexBody, p: float, quad: QuadratureSpec = QuadratureSpec.exact()) -> NormResult:
    """L^p(body) norm of f.  f is a PwlConvexFn or any vectorized evaluator."""
    if p != INF and p < 1:
        raise ValueError("need p >= 1")
    if quad.method == "monte-carlo":
        return _mc_norm(f, body, p, quad)
    if quad.method == "grid":
        return _grid_norm(f, body, p, quad)
    # exact path
    if isinstance(f, PwlConvexFn):
        if p == INF and body.kind != "ball":
            return NormResult(_pwl_sup_norm(f, body), 0.0, "exact")
        if body.dim == 1:
            segs = list(zip(f.grads[:, 0], f.intercepts))
            lo, hi = body.aligned_bounds()
            return NormResult(_exact_1d_pwl_norm(segs, float(lo[0]), float(hi[0]), p), 0.0, "exact")
        if p in (1, 2) and body.kind != "ball":
            return NormResult(_exact_nd_pwl_norm(f, body, int(p)), 0.0, "exact")
    return _grid_norm(f, body, p, quad, fallback=True)


def lp_distance(f, g, body: ConvexBody, p: float, quad: QuadratureSpec = QuadratureSpec.exact()) -> NormResult:
    """L^p(body) distance between f and g."""
    if quad.method == "exact" and isinstance(f, PwlConvexFn) and isinstance(g, PwlConvexFn):
        if body.dim == 1:
            lo, hi = body.aligned_bounds()
            segs_f = list(zip(f.grads[:, 0], f.intercepts))
            segs_g = list(zip(g.grads[:, 0], g.intercepts))
            return NormResult(
                _exact_1d_pwl_diff_norm(segs_f, segs_g, float(lo[0]), float(hi[0]), p), 0.0, "exact"
            )
        if p in (1, 2) and body.kind != "ball":
            total = 0.0
            for i, reg_f in _dominance_regions(f, body):
                sub = PwlConvexFn(reg_f, g.grads, g.intercepts)
                for j, reg in _dominance_regions(sub, reg_f):
                    diff_g = f.grads[i] - g.grads[j]
                    diff_c = f.intercepts[i] - g.intercepts[j]
                    total += _integrate_abs_affine_region(reg, diff_g, diff_c, int(p))
            return NormResult(total ** (1.0 / p), 0.0, "exact")
        if p == INF and body.kind != "ball":
            best = 0.0
            for i, reg_f in _dominance_regions(f, body):
                sub = PwlConvexFn(reg_f, g.grads, g.intercepts)
                for j, reg in _dominance_regions(sub, reg_f):
                    vals = reg.verts @ (f.grads[i] - g.grads[j]) + (f.intercepts[i] - g.intercepts[j])
                    best = max(best, float(np.max(np.abs(vals))))
            return NormResult(best, 0.0, "exact")

    def diff(pts):
        return np.asarray(f(pts), dtype=float) - np.asarray(g(pts), dtype=float)

    if quad.method == "grid":
        return _grid_norm(diff, body, p, quad)
    if quad.method == "exact":
        return _grid_norm(diff, body, p, quad, fallback=True)
    return _mc_norm(diff, body, p, quad)


# ---------------------------------------------------------------------------
# envelope and Lipschitz checks on the eroded body


def _lambda_const(d: int, r: float) -> float:
    """Scale constant of the sup bound on the eroded body."""
    second = math.factorial(d) * d * 2 ** (d + 2)
    if r == INF:
        return float(max(1.0, second))
    first = (d * math.gamma(d / 2.0) / math.pi ** (d / 2.0)) ** (1.0 / r)
    return float(max(first, second))


@dataclass(frozen=True)
class EnvelopeReport:
    norm_r: float
    min_value: float
    lower_bound: float
    sup_on_erosion: float
    sup_bound: float
    lower_ok: bool
    sup_ok: bool


def envelope_bounds_check(
    f,
    body: ConvexBody,
    delta: float,
    r: float,
    samples: int = 100_000,
    seed: int = 0,
    quad: QuadratureSpec | None = None,
) -> EnvelopeReport:
    """Check the minimum and eroded-sup envelopes for a unit-norm function.

    Requires the body normalized (inside the unit cube, volume >= 1/d!) and
    raises NotInClass when the L^r norm exceeds 1 beyond tolerance.
    """
    d = body.dim
    if not (0 < delta <= 1):
        raise ValueError("need 0 < delta <= 1")
    quad = quad or QuadratureSpec.mc(samples, seed)
    nr = lp_norm(f, body, r, QuadratureSpec.exact() if isinstance(f, PwlConvexFn) else quad)
    if nr.value > 1.0 + 3 * (nr.error if math.isfinite(nr.error) else 0.0) + 1e-9:
        raise NotInClass(f"L^{r} norm {nr.value:.6g} exceeds 1")
    rng = np.random.default_rng(seed)
    pts = body.sample(samples, rng)
    vals = np.asarray(f(pts), dtype=float)
    min_value = float(vals.min())
    lower_bound = -(math.factorial(d) ** (1.0 / r) if r != INF else 1.0) * 2 ** (d + 2) * d
    eroded = erode(body, delta)
    pts_e = eroded.sample(samples, rng)
    sup_e = float(np.max(np.abs(np.asarray(f(pts_e), dtype=float))))
    lam = _lambda_const(d, r)
    sup_bound = lam * delta ** (-(d / r) if r != INF else 0.0)
    return EnvelopeReport(
        norm_r=nr.value,
        min_value=min_value,
        lower_bound=lower_bound,
        sup_on_erosion=sup_e,
        sup_bound=sup_bound,
        lower_ok=min_value >= lower_bound - 1e-9,
        sup_ok=sup_e <= sup_bound + 1e-9,
    )


@dataclass(frozen=True)
class LipschitzReport:
    measured: float
    exact_pwl: float | None
    bound: float
    ok: bool


def lipschitz_on_erosion(
    f, body: ConvexBody, delta: float, r: float, samples: int = 2000, seed: int = 0
) -> LipschitzReport:
    """Pair-sampled Lipschitz constant of f on the eroded body vs. its bound."""
    d = body.dim
    eroded = erode(body, delta)
    rng = np.random.default_rng(seed)
    pts = eroded.sample(samples, rng)
    vals = np.asarray(f(pts), dtype=float)
    measured = float(pair_ratio_max(pts, vals))
    exact = None
    if isinstance(f, PwlConvexFn):
        # maximal gradient norm among pieces active somewhere on the erosion
        act = np.argmax(pts @ f.grads.T + f.intercepts[None, :], axis=1)
        exact = float(np.max(np.linalg.norm(f.grads[np.unique(act)], axis=1)))
    lam = _lambda_const(d, r)
    if r == INF:
        bound = 4.0 * lam / delta
    else:
        bound = 2.0 ** (2.0 + d / r) * lam * delta ** (-1.0 - d / r)
    best = exact if exact is not None else measured
    return LipschitzReport(measured=measured, exact_pwl=exact, bound=bound, ok=best <= bound + 1e-9)
