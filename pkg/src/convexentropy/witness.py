"""Separated witness families certifying entropy lower bounds.

Two constructions: cube families (a convex quadratic minus a random subset of
scaled smooth bumps on disjoint grid cells) and spherical-cap families (sums
of linear ramps on disjoint caps of the unit ball).  Pairwise distances come
exactly from disjoint supports, and the family size comes from a greedy
binary code at a prescribed minimum Hamming distance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .accel import cap_member_eval, cube_member_eval, greedy_code_bitmap, min_hamming_ok
from .errors import ConstructionInvalid, ScaleTooCoarse
from .geometry import ConvexBody, ball_volume

BUMP_SUP = 1.0 / 20.0
BUMP_L1 = 1.0 / (15.0 * math.pi)  # unit-cell mass of the base bump, any dimension


def _plateau_width(d: int) -> float:
    """Taper width making the plateau bump's unit-cell mass exactly BUMP_L1.

    The bump is sup * psi with psi = 1 inside sup-norm radius 1-t from the
    cell center and a parabolic descent (1-s)^2 across the width-t boundary
    band.  The mass condition has a closed-form piecewise-polynomial integral;
    we root-find it to machine precision.
    """
    target = BUMP_L1 / BUMP_SUP

    def mass(t):
        m0 = 1.0 - t
        band, _ = integrate.quad(
            lambda s: d * (m0 + t * s) ** (d - 1) * (1 - s) ** 2 * t, 0, 1,
            epsabs=1e-15, limit=200,
        )
        return m0**d + band

    if mass(1.0) > target:
        raise ConstructionInvalid("taper cannot carry the required mass")
    from scipy.optimize import brentq

    return float(brentq(lambda t: mass(t) - target, 1e-9, 1.0, xtol=5e-16))


_PLATEAU_WIDTHS: dict = {}


class BumpBase:
    """Cell bump with sup exactly 1/20 and unit-cell mass exactly 1/(15 pi).

    d=1 uses (1/20) sin^3(pi u).  In higher dimension a sum of coordinate
    sines cannot vanish on the whole cell boundary, which would make members
    built from per-cell copies discontinuous across active/inactive faces;
    instead the bump is a flat plateau at 1/20 with a parabolic taper in the
    sup-distance from the center.  Its Hessian is diagonal almost everywhere
    with upward curvature at most 0.4/t^2 < 2, which keeps members convex.
    Only d <= 2 admits the required mass at this sup and curvature budget.
    """

    def __init__(self, d: int):
        if d > 2:
            raise ConstructionInvalid(
                "no bump with sup 1/20, mass 1/(15 pi) and curvature <= 2 exists for d >= 3"
            )
        self.d = d
        if d == 1:
            self.kind = 0
            self.plateau_radius = 0.0
        else:
            self.kind = 1
            if d not in _PLATEAU_WIDTHS:
                _PLATEAU_WIDTHS[d] = _plateau_width(d)
            self.taper = _PLATEAU_WIDTHS[d]
            self.plateau_radius = 1.0 - self.taper

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.all((pts >= 0.0) & (pts <= 1.0), axis=1)
        if self.kind == 0:
            vals = np.sum(np.sin(math.pi * pts) ** 3, axis=1) / (20.0 * self.d)
        else:
            m = np.max(np.abs(2.0 * pts - 1.0), axis=1)
            s = np.clip((m - self.plateau_radius) / self.taper, 0.0, 1.0)
            vals = (1.0 - s) ** 2 / 20.0
        return np.where(inside, vals, 0.0)

    @property
    def sup(self) -> float:
        return BUMP_SUP

    @property
    def l1(self) -> float:
        return BUMP_L1

    @property
    def hessian_entry_bound(self) -> float:
        if self.kind == 0:
            # second derivative of sin^3(pi t)/(20 d) peaks at the half-period
            return 3.0 * math.pi**2 / (20.0 * self.d)
        return 0.4 / self.taper**2


# ---------------------------------------------------------------------------
# grid cells fully inside a normalized body


@dataclass
class CellGrid:
    eps: float
    grid_n: int
    cells: np.ndarray  # (m, d) integer corners
    guaranteed: bool  # whether the count floor applies at this scale
    count_floor: float

    @property
    def count(self) -> int:
        return self.cells.shape[0]

    def flat_ids(self) -> np.ndarray:
        """Dense map from full-grid flat index to cell id (-1 outside)."""
        d = self.cells.shape[1]
        out = np.full(self.grid_n**d, -1, dtype=np.int64)
        flat = np.zeros(self.count, dtype=np.int64)
        for a in range(d):
            flat = flat * self.grid_n + self.cells[:, a]
        out[flat] = np.arange(self.count)
        return out


def grid_cells(body: ConvexBody, eps: float) -> CellGrid:
    """Axis grid cells of pitch eps fully contained in the body.

    The guaranteed count floor eps^-d / (2 d!) applies when the body is
    normalized (inside the unit cube, volume >= 1/d!) and eps is below
    (10 d!)^-2; at coarser scales the cells are still returned but flagged.
    """
    d = body.dim
    if eps >= 1.0:
        raise ScaleTooCoarse("cell pitch must be below 1")
    grid_n = int(math.floor(1.0 / eps + 1e-12))
    idx = np.stack(
        np.meshgrid(*[np.arange(grid_n)] * d, indexing="ij"), axis=-1
    ).reshape(-1, d)
    corners = np.array(list(itertools.product([0.0, 1.0], repeat=d)))
    pts = (idx[:, None, :] + corners[None, :, :]) * eps
    ok = body.contains(pts.reshape(-1, d), tol=1e-12).reshape(-1, corners.shape[0]).all(axis=1)
    cells = idx[ok]
    guaranteed = eps < (10.0 * math.factorial(d)) ** (-2)
    floor = eps ** (-d) / (2.0 * math.factorial(d))
    return CellGrid(eps=eps, grid_n=grid_n, cells=cells, guaranteed=guaranteed, count_floor=floor)


# ---------------------------------------------------------------------------
# greedy binary codes with a floor on the family size


def hamming_ball_log2(n: int, radius: int) -> float:
    """log2 of the number of words within the given Hamming radius (exact)."""
    return math.log2(sum(math.comb(n, k) for k in range(radius + 1)))


@dataclass
class BinaryCode:
    n: int
    dmin: int
    words: np.ndarray = field(repr=False)  # (K, limbs) uint64, little-endian bits
    log2_count: float  # guaranteed family size (exact when exhaustive)
    exact: bool
    method: str

    @property
    def materialized(self) -> int:
        return self.words.shape[0]

    @property
    def log_count(self) -> float:
        """Natural log of the (guaranteed) family size."""
        return self.log2_count * math.log(2.0)

    def word_bits(self, i: int) -> np.ndarray:
        bits = np.unpackbits(self.words[i].view(np.uint8), bitorder="little")
        return bits[: self.n].astype(np.uint8)

    def hamming(self, i: int, j: int) -> int:
        x = np.bitwise_xor(self.words[i], self.words[j])
        return int(np.unpackbits(x.view(np.uint8)).sum())


def _pack_bits(bits: np.ndarray, limbs: int) -> np.ndarray:
    padded = np.zeros(limbs * 64, dtype=np.uint8)
    padded[: bits.shape[0]] = bits
    return np.packbits(padded, bitorder="little").view(np.uint64)


_EXHAUSTIVE_N = 22
_EXHAUSTIVE_MASKS = 1 << 21


def gv_code(n: int, dmin: int, seed: int = 0, max_words: int = 512) -> BinaryCode:
    """Binary code with pairwise Hamming distance >= dmin.

    Small instances run the deterministic greedy over all words (ascending
    numeric order) to maximality, so the reported count is exact and meets
    the floor 2^n / Vol(n, dmin-1).  Large instances keep a seeded random
    greedy sample of the family (up to max_words); the reported size is the
    floor, which the full greedy is guaranteed to reach.
    """
    if not (1 <= dmin <= n):
        raise ValueError("need 1 <= dmin <= n")
    limbs = (n + 63) // 64
    floor_log2 = n - hamming_ball_log2(n, dmin - 1)
    n_masks = sum(math.comb(n, k) for k in range(dmin))
    if n <= _EXHAUSTIVE_N and n_masks <= _EXHAUSTIVE_MASKS:
        masks = [0]
        for w in range(1, dmin):
            for combo in itertools.combinations(range(n), w):
                m = 0
                for b in combo:
                    m |= 1 << b
                masks.append(m)
        kept = greedy_code_bitmap(n, np.array(masks, dtype=np.int64))
        words = np.zeros((kept.shape[0], limbs), dtype=np.uint64)
        words[:, 0] = kept.astype(np.uint64)
        return BinaryCode(
            n=n, dmin=dmin, words=words, log2_count=math.log2(kept.shape[0]),
            exact=True, method="greedy-exhaustive",
        )
    rng = np.random.default_rng(seed)
    words = np.zeros((max_words, limbs), dtype=np.uint64)
    count = 0
    attempts = 0
    budget = 200 * max_words
    while count < max_words and attempts < budget:
        attempts += 1
        bits = rng.integers(0, 2, size=n, dtype=np.uint8)
        w = _pack_bits(bits, limbs)
        if min_hamming_ok(w, words, count, dmin):
            words[count] = w
            count += 1
    if count == 0:  # always possible: keep one word
        words[0] = _pack_bits(np.zeros(n, dtype=np.uint8), limbs)
        count = 1
    return BinaryCode(
        n=n, dmin=dmin, words=words[:count], log2_count=floor_log2,
        exact=False, method="greedy-randomized",
    )


# ---------------------------------------------------------------------------
# cube-bump families


@dataclass
class CubeWitnessFamily:
    body: ConvexBody
    eps: float
    grid: CellGrid
    code: BinaryCode
    bump: BumpBase
    _flat_ids: np.ndarray = field(repr=False)

    kind = "cube"

    @property
    def d(self) -> int:
        return self.body.dim

    @property
    def log_count(self) -> float:
        return self.code.log_count

    def member(self, i: int):
        xi = self.code.word_bits(i)

        def evaluate(points):
            return cube_member_eval(
                points, self.eps, self.grid.grid_n, self._flat_ids, xi,
                self.bump.kind, self.bump.plateau_radius,
            )

        return evaluate

    def exact_l1_distance(self, i: int, j: int) -> float:
        """Disjoint supports make the pairwise distance a Hamming multiple."""
        return self.code.hamming(i, j) / self.d * self.eps ** (self.d + 2) * BUMP_L1

    def certified_min_l1(self) -> float:
        return self.code.dmin / self.d * self.eps ** (self.d + 2) * BUMP_L1

    def convexity_check(self, i: int, ntriples: int, seed: int, tol: float = 1e-10) -> bool:
        rng = np.random.default_rng(seed)
        f = self.member(i)
        x = rng.uniform(0, 1, size=(ntriples, self.d))
        y = rng.uniform(0, 1, size=(ntriples, self.d))
        lam = rng.uniform(0, 1, size=ntriples)
        mid = lam[:, None] * x + (1 - lam[:, None]) * y
        lhs = f(mid)
        rhs = lam * f(x) + (1 - lam) * f(y)
        return bool(np.all(lhs <= rhs + tol))

    def sup_check(self, i: int, nsamples: int, seed: int) -> float:
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 1, size=(nsamples, self.d))
        return float(np.max(np.abs(self.member(i)(pts))))

    def to_dict(self) -> dict:
        return {
            "kind": "cube",
            "dim": self.d,
            "eps": self.eps,
            "cells": self.grid.cells.tolist(),
            "code": [self.code.word_bits(i).tolist() for i in range(self.code.materialized)],
            "dmin": self.code.dmin,
            "log2_count": self.code.log2_count,
        }


def cube_witness_family(body: ConvexBody, eps: float, code: BinaryCode) -> CubeWitnessFamily:
    grid = grid_cells(body, eps)
    if code.n != grid.count:
        raise ConstructionInvalid(
            f"code length {code.n} must equal the cell count {grid.count}"
        )
    return CubeWitnessFamily(
        body=body, eps=eps, grid=grid, code=code, bump=BumpBase(body.dim),
        _flat_ids=grid.flat_ids(),
    )


# ---------------------------------------------------------------------------
# spherical caps


def cap_volume(d: int, t: float) -> float:
    """Volume of {y in unit ball : y_1 > 1 - t} (cap of height t), exact."""
    if t <= 0:
        return 0.0
    if t >= 2:
        return ball_volume(d)
    x = 2 * t - t * t
    return 0.5 * ball_volume(d) * special.betainc((d + 1) / 2.0, 0.5, x)


def cap_ramp_moment(d: int, h: float, p: float) -> float:
    """integral over the cap of ((<y,x> - (1-h))/h)^p, by 1-d quadrature."""
    vwall = ball_volume(d - 1) if d > 1 else 2.0

    def integrand(u):
        return ((u - (1 - h)) / h) ** p * (1 - u * u) ** ((d - 1) / 2.0)

    val, _ = integrate.quad(integrand, 1 - h, 1, epsabs=1e-14, epsrel=1e-12)
    return vwall * val


def cap_centers(d: int, h: float, seed: int = 0, candidate_factor: int = 60):
    """Unit vectors whose height-h caps are pairwise disjoint.

    Exact equiangular placement on the circle; farthest-point greedy packing
    on a Fibonacci-lattice candidate set for d=3 (seeded uniform candidates
    for d=4).  Returns (centers, info dict with the measured packing ratio).
    """
    if not (0 < h < 0.5):
        raise ValueError("need 0 < h < 1/2")
    theta = math.acos(1.0 - h)
    expected = h ** (-(d - 1) / 2.0)
    if d == 2:
        s = int(math.floor(math.pi / theta))
        ang = 2.0 * math.pi * np.arange(s) / s
        centers = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        ncand = max(4000, int(candidate_factor * expected))
        if d == 3:
            golden = (1 + math.sqrt(5)) / 2
            i = np.arange(ncand)
            z = 1 - 2 * (i + 0.5) / ncand
            phi = 2 * math.pi * i / golden
            rho = np.sqrt(np.clip(1 - z * z, 0, None))
            cand = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
        else:
            rng = np.random.default_rng(seed)
            cand = rng.normal(size=(ncand, d))
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        cos_sep = math.cos(2.0 * theta)
        chosen = [0]
        best_dot = cand @ cand[0]
        while True:
            nxt = int(np.argmin(best_dot))
            if best_dot[nxt] > cos_sep:
                break
            chosen.append(nxt)
            best_dot = np.maximum(best_dot, cand @ cand[nxt])
        centers = cand[chosen]
    info = {
        "count": centers.shape[0],
        "angular_radius": theta,
        "packing_ratio": centers.shape[0] / expected,
    }
    return centers, info


@dataclass
class CapWitnessFamily:
    d: int
    h: float
    centers: np.ndarray
    code: BinaryCode

    kind = "cap"

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def log_count(self) -> float:
        return self.code.log_count

    def member(self, i: int):
        xi = self.code.word_bits(i)

        def evaluate(points):
            return cap_member_eval(points, self.centers, self.h, xi)

        return evaluate

    def exact_lp_distance(self, i: int, j: int, p: float) -> float:
        """Hamming count times the exact single-cap ramp moment."""
        H = self.code.hamming(i, j)
        return (H * cap_ramp_moment(self.d, self.h, p)) ** (1.0 / p)

    def certified_min_lp(self, p: float) -> float:
        """Half of the top-half cap volume mass at the code's distance floor."""
        return 0.5 * (self.code.dmin * cap_volume(self.d, self.h / 2.0)) ** (1.0 / p)

    def disjointness_gap(self) -> float:
        """max pairwise dot minus the disjointness threshold (must be <= 0)."""
        dots = self.centers @ self.centers.T
        np.fill_diagonal(dots, -1.0)
        return float(dots.max() - (2.0 * (1.0 - self.h) ** 2 - 1.0))

    def convexity_check(self, i: int, ntriples: int, seed: int, tol: float = 1e-10) -> bool:
        rng = np.random.default_rng(seed)
        f = self.member(i)
        u = rng.normal(size=(ntriples, 2, self.d))
        u /= np.linalg.norm(u, axis=2, keepdims=True)
        r = rng.uniform(size=(ntriples, 2)) ** (1.0 / self.d)
        pts = u * r[:, :, None]
        lam = rng.uniform(0, 1, size=ntriples)
        mid = lam[:, None] * pts[:, 0] + (1 - lam[:, None]) * pts[:, 1]
        lhs = f(mid)
        rhs = lam * f(pts[:, 0]) + (1 - lam) * f(pts[:, 1])
        return bool(np.all(lhs <= rhs + tol))

    def to_dict(self) -> dict:
        return {
            "kind": "cap",
            "dim": self.d,
            "h": self.h,
            "centers": self.centers.tolist(),
            "code": [self.code.word_bits(i).tolist() for i in range(self.code.materialized)],
            "dmin": self.code.dmin,
            "log2_count": self.code.log2_count,
        }


def cap_witness_family(d: int, h: float, code: BinaryCode, seed: int = 0) -> CapWitnessFamily:
    centers, _ = cap_centers(d, h, seed=seed)
    if code.n != centers.shape[0]:
        raise ConstructionInvalid(
            f"code length {code.n} must equal the cap count {centers.shape[0]}"
        )
    fam = CapWitnessFamily(d=d, h=h, centers=centers, code=code)
    if fam.disjointness_gap() > 1e-12:
        raise ConstructionInvalid("caps are not pairwise disjoint")
    return fam


# ---------------------------------------------------------------------------
# the packing table driving the rate fits


def packing_log_count(kind: str, d: int, p: float, scales, seed: int = 0):
    """Rows of (scale, certified separation, natural-log family size).

    Cube families certify separation in L^1 through the disjoint-support
    closed form; cap families through the top-half cap volume.  The family
    size is the greedy-code guarantee at distance floor(cells/10).
    """
    rows = []
    for scale in scales:
        if kind == "cube":
            body = ConvexBody.unit_cube(d)
            grid = grid_cells(body, scale)
            n = grid.count
            dmin = max(1, n // 10)
            code = gv_code(n, dmin, seed=seed, max_words=32)
            sep = dmin / d * scale ** (d + 2) * BUMP_L1
            rows.append(
                {"kind": kind, "d": d, "p": p, "scale": scale, "cells": n,
                 "dmin": dmin, "separation": sep, "log_count": code.log_count,
                 "count_exact": code.exact}
            )
        elif kind == "cap":
            centers, info = cap_centers(d, scale, seed=seed)
            s = centers.shape[0]
            dmin = max(1, s // 10)
            code = gv_code(s, dmin, seed=seed, max_words=32)
            sep = 0.5 * (dmin * cap_volume(d, scale / 2.0)) ** (1.0 / p)
            rows.append(
                {"kind": kind, "d": d, "p": p, "scale": scale, "cells": s,
                 "dmin": dmin, "separation": sep, "log_count": code.log_count,
                 "count_exact": code.exact, "packing_ratio": info["packing_ratio"]}
            )
        else:
            raise ValueError(f"unknown family kind {kind!r}")
    return rows
