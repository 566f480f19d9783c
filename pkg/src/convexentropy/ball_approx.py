"""Inscribed simplicial approximations of the unit ball.

The level-k polytope comes from subdividing each facet of the circumscribed
cube [-1,1]^d into 2^{k(d-1)} subcubes, triangulating each subcube the
standard ordering way ((d-1)! simplices), projecting all vertices radially
onto the sphere, and coning the projected boundary simplices from the origin.

Consecutive levels nest, and the region between them splits per fine cone
into a frustum cut by the single coarse facet plane behind it; the frustum is
triangulated by the standard prism staircase.  That yields the simplex
sequence whose counting function S(t) is fitted against t^{-(d-1)/2}.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .accel import star_membership
from .errors import IncrementError, InvalidExponents, LevelTooCoarse
from .geometry import ball_volume

INF = float("inf")

_CHUNK = 1 << 15


def level_valid(d: int, k: int) -> bool:
    return 2.0 ** (2 - k) * math.sqrt(d) < 1.0


def facet_count_bound(d: int, k: int) -> int:
    return 2 ** (k * (d - 1) + 1) * d * math.factorial(d)


def inradius_bound(d: int, k: int) -> float:
    return math.sqrt(1.0 - 2.0 ** (2 - 2 * k) * d)


def gap_bound(d: int, k: int) -> float:
    return 1.0 - (1.0 - 2.0 ** (2 - 2 * k) * d) ** (d / 2.0)


def _facet_batches(d: int, k: int):
    """Yield (corners, perm) with corners (n, d-1) integer subcube corners."""
    n_side = 1 << k
    total = n_side ** (d - 1)
    perms = list(itertools.permutations(range(d - 1)))
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        corners = np.stack(np.unravel_index(idx, (n_side,) * (d - 1)), axis=1)
        for perm in perms:
            yield corners, perm


def _boundary_vertices(d: int, k: int, axis: int, side: float, corners, perm):
    """Cube-surface simplex vertices, shape (n, d, d): [simplex, vertex, coord]."""
    n = corners.shape[0]
    h = 2.0 ** (1 - k)
    local = np.empty((n, d, d - 1))
    base = -1.0 + corners * h
    local[:] = base[:, None, :]
    for t in range(1, d):
        for u in range(t):
            local[:, t, perm[u]] += h
    verts = np.empty((n, d, d))
    other = [a for a in range(d) if a != axis]
    verts[:, :, other] = local
    verts[:, :, axis] = side
    return verts


def _project_unit(verts):
    return verts / np.linalg.norm(verts, axis=-1, keepdims=True)


def _cone_volumes(unit_verts):
    d = unit_verts.shape[-1]
    return np.abs(np.linalg.det(unit_verts)) / math.factorial(d)


def _facet_plane_distances(unit_verts):
    """Distance from the origin to each facet's affine hull."""
    ones = np.ones(unit_verts.shape[:-1] + (1,))
    normals = np.linalg.solve(unit_verts, ones)[..., 0]  # a with a . v_j = 1
    return 1.0 / np.linalg.norm(normals, axis=-1)


@dataclass
class SimplicialSphere:
    d: int
    k: int
    facet_count: int
    volume: float
    min_plane_distance: float

    @property
    def facet_bound(self) -> int:
        return facet_count_bound(self.d, self.k)

    @property
    def inradius_bound(self) -> float:
        return inradius_bound(self.d, self.k)

    @property
    def gap_bound(self) -> float:
        return gap_bound(self.d, self.k)

    @property
    def volume_gap(self) -> float:
        """Exact fraction of the ball volume not covered."""
        return 1.0 - self.volume / ball_volume(self.d)

    def contains(self, points, tol: float = 1e-12):
        return star_membership(points, self.k, tol)

    def iter_facets(self):
        """Yield unit-vertex facet arrays in construction order, (n, d, d)."""
        for axis in range(self.d):
            for side in (-1.0, 1.0):
                for corners, perm in _facet_batches(self.d, self.k):
                    yield _project_unit(
                        _boundary_vertices(self.d, self.k, axis, side, corners, perm)
                    )


def simplicial_sphere(d: int, k: int) -> SimplicialSphere:
    """Build the level-k inscribed polytope and its exact summary numbers."""
    if not level_valid(d, k):
        raise LevelTooCoarse(f"need 2^(2-k) sqrt(d) < 1; got d={d}, k={k}")
    count = 0
    vol = 0.0
    min_dist = np.inf
    for axis in range(d):
        for side in (-1.0, 1.0):
            for corners, perm in _facet_batches(d, k):
                uv = _project_unit(_boundary_vertices(d, k, axis, side, corners, perm))
                count += uv.shape[0]
                vol += float(np.sum(_cone_volumes(uv)))
                min_dist = min(min_dist, float(np.min(_facet_plane_distances(uv))))
    return SimplicialSphere(d=d, k=k, facet_count=count, volume=vol, min_plane_distance=min_dist)


# ---------------------------------------------------------------------------
# increments between nested levels


def _coarse_plane_normals(d, k_coarse, k_fine, axis, side, corners, bary_local):
    """Plane normals (a with a.x = 1) of the coarse facets behind fine simplices."""
    shift = k_fine - k_coarse
    coarse_corners = corners >> shift
    h_f = 2.0 ** (1 - k_fine)
    h_c = 2.0 ** (1 - k_coarse)
    # the barycenter's fractional position inside the coarse subcube picks
    # the coarse ordering simplex behind this fine one
    frac = (bary_local + (corners - (coarse_corners << shift)) * h_f) / h_c
    order = np.argsort(-frac, axis=1, kind="stable")
    n = corners.shape[0]
    rows = np.arange(n)
    local = np.empty((n, d, d - 1))
    local[:] = (-1.0 + coarse_corners * h_c)[:, None, :]
    for t in range(1, d):
        local[:, t, :] = local[:, t - 1, :]
        local[rows, t, order[:, t - 1]] += h_c
    verts = np.empty((n, d, d))
    other = [a for a in range(d) if a != axis]
    verts[:, :, other] = local
    verts[:, :, axis] = side
    uv = _project_unit(verts)
    return np.linalg.solve(uv, np.ones((n, d, 1)))[..., 0]


def _staircase_simplices(fine_unit, t):
    """Vertex arrays of the prism staircase between t_j*v_j and v_j.

    fine_unit: (n, d, d) unit vertices; t: (n, d) ray parameters of the coarse
    plane.  Returns (n, d, d+1, d) vertex arrays: per fine cone, d staircase
    simplices with d+1 vertices each (some may be degenerate).
    """
    n, d, _ = fine_unit.shape
    inner = fine_unit * t[:, :, None]
    out = np.empty((n, d, d + 1, d))
    for j in range(d):
        # vertices w_1..w_{j+1}, v_{j+1}..v_d  (1-indexed j+1 = this step)
        for c in range(j + 1):
            out[:, j, c, :] = inner[:, c, :]
        for c in range(j + 1, d + 1):
            out[:, j, c, :] = fine_unit[:, c - 1, :]
    return out


def _simplex_vols(batch):
    """Volumes for (…, d+1, d) vertex arrays."""
    diff = batch[..., 1:, :] - batch[..., :1, :]
    d = batch.shape[-1]
    return np.abs(np.linalg.det(diff)) / math.factorial(d)


def increment_cells(d: int, k_coarse: int, k_fine: int, collect: bool = False):
    """Count (and optionally collect) the simplices tiling the level gap.

    Returns (count, total_volume, cells) where cells is a list of (d+1, d)
    arrays when collect=True.  Raises IncrementError when the staircase
    volumes disagree with the frustum bookkeeping.
    """
    if k_fine <= k_coarse:
        return 0, 0.0, []
    count = 0
    total = 0.0
    cells = []
    bary_factor = np.zeros(d - 1)
    # barycenter of the local ordering simplex: average of its vertices
    for axis in range(d):
        for side in (-1.0, 1.0):
            for corners, perm in _facet_batches(d, k_fine):
                verts = _boundary_vertices(d, k_fine, axis, side, corners, perm)
                uv = _project_unit(verts)
                other = [a for a in range(d) if a != axis]
                bary_local = verts[:, :, other].mean(axis=1) - (-1.0 + corners * 2.0 ** (1 - k_fine))
                a = _coarse_plane_normals(d, k_coarse, k_fine, axis, side, corners, bary_local)
                denom = np.einsum("nd,nvd->nv", a, uv)
                t = 1.0 / denom
                if np.any(t > 1.0 + 1e-9) or np.any(t <= 0):
                    raise IncrementError("fine vertex inside the coarse surface")
                t = np.minimum(t, 1.0)
                cone_vol = _cone_volumes(uv)
                expected = (1.0 - np.prod(t, axis=1)) * cone_vol
                stair = _staircase_simplices(uv, t)
                vols = _simplex_vols(stair)
                got = vols.sum(axis=1)
                denom_ref = np.maximum(expected, 1e-300)
                bad = np.abs(got - expected) > 1e-6 * np.maximum(denom_ref, 1e-12)
                if np.any(bad & (expected > 1e-15)):
                    raise IncrementError("staircase volume mismatch in level gap")
                keep = vols > 1e-12 * cone_vol[:, None]
                count += int(np.sum(keep))
                total += float(np.sum(vols[keep]))
                if collect:
                    idx = np.argwhere(keep)
                    for i, j in idx:
                        cells.append(stair[i, j].copy())
    return count, total, cells


# ---------------------------------------------------------------------------
# the approximation sequence and its counting function


@dataclass(frozen=True)
class StepFunction:
    """Right-open step function on (0, 1): values[i] on [lows[i], highs[i])."""

    lows: np.ndarray
    highs: np.ndarray
    values: np.ndarray

    def __call__(self, t: float) -> float:
        for lo, hi, v in zip(self.lows, self.highs, self.values):
            if lo <= t < hi:
                return float(v)
        if t >= self.highs[-1]:
            return float(self.values[-1])
        return float(self.values[0])  # below the deepest level: clamp

    def segments_from(self, delta: float):
        """(a, b, value) pieces covering [delta, 1) with clamped extension."""
        segs = []
        if delta < self.lows[0]:
            segs.append((delta, float(self.lows[0]), float(self.values[0])))
        for lo, hi, v in zip(self.lows, self.highs, self.values):
            a, b = max(float(lo), delta), float(hi)
            if b > a:
                segs.append((a, b, float(v)))
        return segs


@dataclass(frozen=True)
class PowerLaw:
    """S(t) = coef * t^(-exponent)."""

    exponent: float
    coef: float = 1.0


@dataclass
class LevelRecord:
    r: int
    k: int
    cells_total: int
    gap_bound: float
    exact_gap: float


@dataclass
class ApproxSequence:
    d: int
    levels: list
    spheres: dict = field(repr=False)

    def step(self) -> StepFunction:
        """S(t): number of simplices needed to leave uncovered fraction < t."""
        lows, highs, vals = [], [], []
        for rec in self.levels:
            lows.append(2.0 ** (-(rec.r)))
            highs.append(2.0 ** (-(rec.r - 1)))
            vals.append(rec.cells_total)
        return StepFunction(np.array(lows), np.array(highs), np.array(vals, dtype=float))

    def count_points(self):
        """(t, S) pairs at the dyadic level scales."""
        return [(2.0 ** (-rec.r), rec.cells_total) for rec in self.levels]

    def fitted_exponent(self) -> float:
        pts = self.count_points()
        x = np.log([1.0 / t for t, _ in pts])
        y = np.log([s for _, s in pts])
        slope, _ = np.polyfit(x, y, 1)
        return float(slope)

    def uncovered_mc(self, r: int, n: int, seed: int):
        """Monte Carlo estimate (value, stderr) of the uncovered volume fraction."""
        rec = next(rec for rec in self.levels if rec.r == r)
        rng = np.random.default_rng(seed)
        u = rng.normal(size=(n, self.d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rad = rng.uniform(size=n) ** (1.0 / self.d)
        pts = u * rad[:, None]
        outside = ~star_membership(pts, rec.k)
        frac = float(np.mean(outside))
        se = math.sqrt(max(frac * (1 - frac), 1e-12) / n)
        return frac, se

    def iter_cells(self, max_r: int | None = None):
        """Yield the simplices (vertex arrays) in sequence order up to level max_r."""
        max_r = max_r if max_r is not None else self.levels[-1].r
        k_prev = None
        for rec in self.levels:
            if rec.r > max_r:
                break
            if k_prev is None:
                sph = self.spheres[rec.k]
                origin = np.zeros((1, self.d))
                for uv in sph.iter_facets():
                    for simplex in uv:
                        yield np.vstack([origin, simplex])
            elif rec.k > k_prev:
                _, _, cells = increment_cells(self.d, k_prev, rec.k, collect=True)
                for cell in cells:
                    yield cell
            k_prev = rec.k


def smallest_level(d: int, target_gap: float) -> int:
    k = 1
    while not (level_valid(d, k) and gap_bound(d, k) <= target_gap):
        k += 1
        if k > 64:
            raise LevelTooCoarse("no feasible level below k=64")
    return k


def approx_sequence(d: int, levels: int) -> ApproxSequence:
    """Greedy nested sequence halving the uncovered volume each level."""
    if d not in (2, 3, 4):
        raise ValueError("supported dimensions are 2, 3, 4")
    if levels > 20:
        raise ValueError("level budget is 20")
    ks = [smallest_level(d, 2.0 ** (-r)) for r in range(1, levels + 1)]
    spheres = {}
    for k in sorted(set(ks)):
        spheres[k] = simplicial_sphere(d, k)
    recs = []
    total = spheres[ks[0]].facet_count
    recs.append(
        LevelRecord(r=1, k=ks[0], cells_total=total, gap_bound=gap_bound(d, ks[0]),
                    exact_gap=spheres[ks[0]].volume_gap)
    )
    for r in range(2, levels + 1):
        k_prev, k = ks[r - 2], ks[r - 1]
        if k > k_prev:
            cnt, vol, _ = increment_cells(d, k_prev, k)
            got = spheres[k].volume - spheres[k_prev].volume
            if abs(vol - got) > 1e-6 * max(got, 1e-12):
                raise IncrementError(
                    f"increment volume {vol:.12g} vs shell difference {got:.12g}"
                )
            total += cnt
        recs.append(
            LevelRecord(r=r, k=k, cells_total=total, gap_bound=gap_bound(d, k),
                        exact_gap=spheres[k].volume_gap)
        )
    return ApproxSequence(d=d, levels=recs, spheres=spheres)


# ---------------------------------------------------------------------------
# the two-integral upper-bound evaluator


def _exponents(p: float, r: float, d: int):
    if not (1 <= p) or not (p < r):
        raise InvalidExponents(f"need 1 <= p < r; got p={p}, r={r}")
    if r == INF:
        gamma = p
        delta_coef = 2.0 ** (-3)
        beta = 2.0 * p / (2.0 * p + d)
    else:
        gamma = r * p / (r - p)
        delta_coef = 2.0 ** (-2.0 - r / (r - p))
        beta = 2.0 * p * r / (2.0 * p * r + (r - p) * d)
    return gamma, delta_coef, beta


def bound_scales(eps: float, p: float, r: float, d: int):
    """(delta(eps), beta) of the two-integral bound."""
    gamma, delta_coef, beta = _exponents(p, r, d)
    return delta_coef * eps**gamma, beta


def _integral_step(S: StepFunction, delta: float, beta: float) -> float:
    """integral over [delta, 1) of (S(t)/t)^beta dt (beta=1 gives S/t)."""
    total = 0.0
    for a, b, v in S.segments_from(delta):
        if abs(beta - 1.0) < 1e-12:
            total += v * math.log(b / a)
        else:
            total += v**beta * (b ** (1.0 - beta) - a ** (1.0 - beta)) / (1.0 - beta)
    return total


def _integral_power(S: PowerLaw, delta: float, beta: float) -> float:
    """integral over [delta, 1] of (coef t^-a / t)^beta dt, closed form."""
    e = (S.exponent + 1.0) * beta
    c = S.coef**beta
    if abs(e - 1.0) < 1e-12:
        return c * math.log(1.0 / delta)
    return c * (1.0 - delta ** (1.0 - e)) / (1.0 - e)


def theorem2_bound(S, eps: float, p: float, r: float, d: int, volume: float = 1.0) -> float:
    """Two-term entropy bound from a simplicial counting function.

    Value of  I1 + I2^{1/beta} * eps^{-d/2}  with I1 the logarithmic integral
    of S and I2 its beta-moment, both from delta(eps) to 1; the undetermined
    multiplicative constant is set to 1.  `volume` is accepted for interface
    symmetry with the discrete evaluator; the normalized form does not use it.
    """
    if not (0 < eps < 1):
        raise ValueError("need 0 < eps < 1")
    delta, beta = bound_scales(eps, p, r, d)
    if isinstance(S, PowerLaw):
        i1 = _integral_power(S, delta, 1.0)
        i2 = _integral_power(S, delta, beta)
    elif isinstance(S, StepFunction):
        i1 = _integral_step(S, delta, 1.0)
        i2 = _integral_step(S, delta, beta)
    else:
        raise TypeError("S must be a StepFunction or PowerLaw")
    return i1 + i2 ** (1.0 / beta) * eps ** (-d / 2.0)
