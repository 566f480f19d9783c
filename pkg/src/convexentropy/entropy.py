"""Constructive covering/bracketing counts for bounded Lipschitz convex classes.

Two counting constructions, both exact dynamic programs over dyadic trees:

* ``net_1d_convex`` counts a sup-norm cover of {f on [0,1]: convex, |f| <= M,
  Lip <= alpha} through the conjugate g(s) = sup_x (s x - f(x)) on the slope
  interval [-alpha, alpha].  g is convex with derivative in [0, 1], so chords
  between dyadic knots with endpoint values pinned to a value grid track it
  with no cumulative drift; the DP counts monotone chord-slope assignments
  whose windows split between children.  Window units coarsen with depth at
  the same rate ranges split, which is what keeps the count free of
  logarithmic factors on top of the square-root scale count.

* ``bracket_lipschitz`` builds L^p brackets from quantized tangent data on a
  dyadic cell tree over the body: every node stores a gradient offset and a
  value offset relative to its parent inside windows sized by the parent's
  declared per-axis gradient range, and the declared ranges split additively
  between the two child slabs of each axis row.  Bracket widths are certified
  from the window budgets alone, without enumerating the family.

The union combiner, the facet-count recursion, and the discrete two-term
upper-bound evaluator complete the module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ball_approx import StepFunction, theorem2_bound
from .errors import AllocationError, BudgetExceeded, InvalidExponents
from .geometry import ConvexBody

INF = float("inf")


@dataclass(frozen=True)
class NetCount:
    eps: float
    log_count: float  # natural log
    method: str  # dp-exact | bracket-construct | greedy-packing
    params: dict = field(default_factory=dict)
    seed: int | None = None


def _logaddexp_reduce(logs: np.ndarray) -> float:
    m = float(np.max(logs))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(logs - m))))


# ---------------------------------------------------------------------------
# 1-d exact cover through the conjugate chord tree


class ChordTreeDP:
    """Exact count of dyadic chord encodings of conjugate functions.

    A node's window size u is measured in its own chord-slope quantum, which
    equals range-times-length in units of the value grid; a split hands its
    two children a combined budget of about u/2 (+slack for integer
    declarations) because lengths halve while ranges partition.  Splits are
    only admitted above SPLIT_MIN, the scale at which a single chord is
    already accurate, which pins the worst-case leaf count at the square-root
    scale instead of letting slack sustain full binary trees.
    """

    SLACK = 2
    SPLIT_MIN = 6  # strictly above the slack fixpoint (u+1)//2 + SLACK == u
    REFINE_UNITS = 5.0  # members refine while range*length exceeds this many eps_t

    def __init__(self, M: float, alpha: float, eps: float):
        self.M = M
        self.alpha = alpha
        self.eps = eps
        self.eps_t = eps / 4.0
        self.u_root = int(math.ceil(2.0 * alpha / self.eps_t))
        if self.u_root > 2 * 10**6:
            raise BudgetExceeded("slope grid exceeds the DP state budget")
        self._widths = self._window_widths()
        self.max_depth = len(self._widths) - 1
        self._tables = self._build_tables()

    def _window_widths(self):
        widths = [self.u_root]
        while widths[-1] >= self.SPLIT_MIN:
            widths.append((widths[-1] + 1) // 2 + self.SLACK)
        return widths

    def _child_budget(self, q: int, u: int) -> int:
        return min((u + 1) // 2 + self.SLACK, self._widths[q + 1])

    def _build_tables(self):
        tables = [None] * (self.max_depth + 1)
        w_last = self._widths[self.max_depth]
        tables[self.max_depth] = np.log(np.arange(w_last + 1) + 1.0)
        for q in range(self.max_depth - 1, -1, -1):
            child = tables[q + 1]
            w = self._widths[q]
            out = np.empty(w + 1)
            for u in range(w + 1):
                leaf = math.log(u + 1.0)
                if u < self.SPLIT_MIN:
                    out[u] = leaf
                    continue
                uc = self._child_budget(q, u)
                logs = child[: uc + 1] + child[uc::-1]
                out[u] = np.logaddexp(leaf, _logaddexp_reduce(logs))
            tables[q] = out
        return tables

    @property
    def anchor_count(self) -> int:
        return int(2.0 * (self.M + self.alpha) / self.eps_t) + 3

    @property
    def log_count(self) -> float:
        return math.log(self.anchor_count) + float(self._tables[0][self.u_root])

    # -- independent enumeration oracle (tiny instances) ----------------------

    def enumerate_encodings(self):
        """Generate every (tree, chord-slope) encoding explicitly."""
        if self.u_root > 24 or self.max_depth > 5:
            raise BudgetExceeded("enumeration is for desk-size instances")

        def subtree(q, u):
            # leaf choices: chord slope level 0..u
            for lvl in range(u + 1):
                yield ("leaf", lvl)
            if q < self.max_depth and u >= self.SPLIT_MIN:
                uc = self._child_budget(q, u)
                for m in range(uc + 1):
                    for left in subtree(q + 1, m):
                        for right in subtree(q + 1, uc - m):
                            yield ("split", m, left, right)

        for anchor in range(self.anchor_count):
            for t in subtree(0, self.u_root):
                yield (anchor, t)

    # -- coverage --------------------------------------------------------------

    def member_knots(self, conj):
        """Adaptive dyadic knots for a member's conjugate function."""
        a = self.alpha
        knots = {-a, a}
        stack = [(-a, a, 0)]
        while stack:
            lo, hi, q = stack.pop()
            if q >= self.max_depth:
                continue
            mid = 0.5 * (lo + hi)
            glo, gmid, ghi = conj(np.array([lo, mid, hi]))
            sl = (gmid - glo) / (mid - lo)
            sr = (ghi - gmid) / (hi - mid)
            if (sr - sl) * (hi - lo) > self.REFINE_UNITS * self.eps_t:
                knots.add(mid)
                stack.append((lo, mid, q + 1))
                stack.append((mid, hi, q + 1))
        return np.array(sorted(knots))

    def cover(self, f_vertices_x, f_vertices_y, xs):
        """Round a member into the family and reconstruct it at xs.

        The member is a piecewise-linear convex function given by its graph
        vertices; its conjugate is exact there.  Returns (fhat, knots).
        """
        vx = np.asarray(f_vertices_x, dtype=float)
        vy = np.asarray(f_vertices_y, dtype=float)

        def conj(s):
            return np.max(np.asarray(s)[:, None] * vx[None, :] - vy[None, :], axis=1)

        knots = self.member_knots(conj)
        pinned = np.round(conj(knots) / self.eps_t) * self.eps_t
        fhat = np.max(np.asarray(xs)[:, None] * knots[None, :] - pinned[None, :], axis=1)
        return fhat, knots


def net_1d_convex(eps: float, M: float, alpha: float) -> NetCount:
    """Exact size of the canonical sup-norm cover of the 1-d class."""
    if eps >= 2 * M:
        return NetCount(eps=eps, log_count=0.0, method="dp-exact",
                        params={"M": M, "alpha": alpha, "d": 1})
    dp = ChordTreeDP(M, alpha, eps)
    return NetCount(eps=eps, log_count=dp.log_count, method="dp-exact",
                    params={"M": M, "alpha": alpha, "d": 1})


# ---------------------------------------------------------------------------
# d-dimensional bracket construction on the dyadic tangent tree


class TangentGridDP:
    """Counts quantized tangent tables on a uniform cell grid.

    Cells carry a quantized tangent (value + gradient).  Gradients are encoded
    as integer offsets from the previous cell: the axis component is
    nondecreasing along its own axis (up to slack), so offsets along each row
    and column are nonnegative-with-slack and their sums are capped by the
    total gradient range.  Values are encoded relative to the tangent
    extrapolation from the previous cell in the row, whose window is read off
    the neighboring gradient offsets.  The family size is then an exact
    product of small per-row and per-column scan DPs, and the bracket width
    is certified from the same windows the encoding declares.
    """

    SLACK = 2
    GRAD_COARSE = 4.0  # gradient quantum = GRAD_COARSE * eps_t / cell_side
    GAP_SLACK = 6.0  # per-cell quantization allowance on the gap, in eps_t

    def __init__(self, body: ConvexBody, M: float, alpha: float, eps: float, p: float = 1.0):
        if body.dim not in (1, 2):
            raise BudgetExceeded("tangent-grid brackets support d in {1, 2}")
        self.body = body
        self.d = body.dim
        self.M = M
        self.alpha = alpha
        self.eps = eps
        self.p = p
        lo, hi = body.aligned_bounds()
        self.w0 = float(np.max(hi - lo))
        self.origin = np.asarray(lo, dtype=float)
        vol_pow = body.volume() ** (1.0 / p)
        if alpha <= 0:
            self.eps_t = eps / (4.0 * max(vol_pow, 1e-12))
            self.n_side = 1
            return
        # value quantum and grid chosen together: the coarsest quantum whose
        # slack terms leave room for a feasible grid keeps the count smallest
        for c in (16.0, 24.0, 32.0, 48.0, 64.0, 96.0, 128.0, 192.0, 256.0):
            self.eps_t = eps / c
            n = self._search_grid()
            if n is not None:
                self.n_side = n
                break
        else:
            raise BudgetExceeded("no feasible quantum/grid combination")

    # -- grid geometry -----------------------------------------------------------

    @property
    def cell_side(self) -> float:
        return self.w0 / self.n_side

    def _grad_pitch(self, n_side: int) -> float:
        return self.GRAD_COARSE * self.eps_t * n_side / self.w0

    def _budget(self, n_side: int) -> int:
        # per-row positive-offset budget: full gradient range plus rounding
        return int(math.ceil(2.0 * self.alpha / self._grad_pitch(n_side))) + n_side

    def certified_width_bound(self, n_side: int | None = None) -> float:
        """Worst L^p bracket width over all budget-respecting encodings."""
        if self.alpha <= 0:
            return self.eps
        n = self.n_side if n_side is None else n_side
        w = self.w0 / n
        delta = self._grad_pitch(n)
        B = self._budget(n)
        K = n
        nrows = n ** (self.d - 1)
        ncells = n**self.d
        cellvol = w**self.d
        # per-cell gap: (rx + ry) * w/2 + slack, with r from neighbor offsets
        # row sums of r-units are at most 2B + 4K; per-cell cap is B + 4
        unit_gap = delta * w / 2.0  # gap contributed by one range unit
        total_units = self.d * nrows * (2 * B + 4 * K)
        if self.p == 1:
            return cellvol * (unit_gap * total_units + self.GAP_SLACK * self.eps_t * ncells)
        ucap = 2.0 * (B + 4.0)
        width_p = cellvol * (
            unit_gap**self.p * ucap ** (self.p - 1.0) * total_units
            + (self.GAP_SLACK * self.eps_t) ** self.p * ncells
        )
        return width_p ** (1.0 / self.p)

    def _search_grid(self):
        for n in range(1, 257):
            if self.certified_width_bound(n) <= self.eps:
                return n
        return None

    # -- counting ----------------------------------------------------------------

    def _scan_count(self, K: int, B: int, with_values: bool) -> float:
        """ln of the number of offset sequences along one row or column.

        Offsets are integers in [-SLACK, B]; the running sum of positive
        parts is at most B; when with_values is set each step multiplies in
        the value window GRAD_COARSE*(off+ + prev+) + GAP_SLACK.
        """
        if K <= 0:
            return 0.0
        # state: (previous positive offset, budget used) -> weighted count
        state = np.zeros((B + 1, B + 1))
        state[0, 0] = 1.0
        log_scale = 0.0
        for _ in range(K - 1):
            new = np.zeros_like(state)
            for off in range(-self.SLACK, B + 1):
                pos = max(off, 0)
                if with_values:
                    prev = np.arange(B + 1)
                    win = self.GRAD_COARSE * (pos + prev) + self.GAP_SLACK
                else:
                    win = np.ones(B + 1)
                shifted = state * win[:, None]
                if pos == 0:
                    new[0] += shifted.sum(axis=0)
                else:
                    new[pos, pos:] += shifted[:, :-pos].sum(axis=0)
            m = new.max()
            if m <= 0:
                return -np.inf
            state = new / m
            log_scale += math.log(m)
        return log_scale + math.log(float(state.sum()))

    def log_count(self) -> float:
        if self.alpha <= 0:
            n = math.ceil(2.0 * self.M / max(self.eps, 1e-300) * self.body.volume() ** (1.0 / self.p))
            return math.log(max(n, 1))
        n = self.n_side
        B = self._budget(n)
        anchors = math.log(2.0 * self.M / self.eps_t + 3.0)
        grad0 = self.d * math.log(2.0 * self.alpha / self._grad_pitch(n) + 3.0)
        total = anchors + grad0
        if self.d == 1:
            total += self._scan_count(n, B, with_values=True)
            return total
        # rows carry x-offsets and value windows; columns carry y-offsets;
        # the first column additionally carries the row-start value windows
        total += n * self._scan_count(n, B, with_values=True)  # rows: gx + v
        total += (n - 1) * self._scan_count(n, B, with_values=False)  # cols: gy
        total += self._scan_count(n, B, with_values=True)  # column 0: gy + row starts
        return total

    # -- member encoding and bracket extraction ----------------------------------

    def encode(self, value_fn, grad_fn):
        """Per-cell quantized tangents and declared range units for a member."""
        n = self.n_side
        w = self.cell_side
        delta = self._grad_pitch(n) if self.alpha > 0 else 1.0
        cells = {}
        for idx in np.ndindex(*(n,) * self.d):
            corner = self.origin + w * np.array(idx, dtype=float)
            center = corner + w / 2.0
            probe = np.linspace(0.05, 0.95, 3)
            mesh = np.meshgrid(*[corner[a] + w * probe for a in range(self.d)], indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            if not (np.any(self.body.contains(pts, tol=1e-9)) or self.body.contains(center[None, :])[0]):
                continue
            v = float(value_fn(center[None, :])[0])
            grads = np.asarray(grad_fn(pts), dtype=float).reshape(-1, self.d)
            rng = grads.max(axis=0) - grads.min(axis=0)
            units = np.ceil(rng / delta).astype(int) + self.SLACK
            g_hat = np.round(grads.mean(axis=0) / delta) * delta
            v_hat = round(v / self.eps_t) * self.eps_t
            cells[idx] = (corner, w, v_hat, g_hat, units)
        return cells

    def bracket(self, encoding):
        """(lower_fn, upper_fn) valid on the body for members of this cell data."""
        eps_t = self.eps_t
        n = self.n_side
        w = self.cell_side
        delta = self._grad_pitch(n) if self.alpha > 0 else 0.0
        keys = list(encoding.keys())
        corners = np.array([encoding[k][0] for k in keys])
        vhats = np.array([encoding[k][2] for k in keys])
        ghats = np.array([encoding[k][3] for k in keys])
        units = np.array([encoding[k][4] for k in keys])
        index_of = {k: i for i, k in enumerate(keys)}

        def _locate(pts):
            rel = (np.atleast_2d(pts) - self.origin) / w
            idx = np.clip(np.floor(rel).astype(int), 0, n - 1)
            out = np.full(idx.shape[0], -1)
            for i, row in enumerate(idx):
                out[i] = index_of.get(tuple(row), -1)
            return out

        def lower(points):
            pts = np.atleast_2d(points)
            which = _locate(pts)
            ok = which >= 0
            wh = np.clip(which, 0, None)
            centers = corners[wh] + w / 2.0
            slack = eps_t / 2.0 + delta * w * self.d / 2.0 + eps_t
            vals = vhats[wh] + np.sum(ghats[wh] * (pts - centers), axis=1) - slack
            return np.where(ok, vals, -np.inf)

        def upper(points):
            pts = np.atleast_2d(points)
            which = _locate(pts)
            ok = which >= 0
            wh = np.clip(which, 0, None)
            centers = corners[wh] + w / 2.0
            osc = np.sum(units[wh], axis=1) * delta * w / 2.0
            slack = eps_t / 2.0 + delta * w * self.d / 2.0 + eps_t
            vals = vhats[wh] + np.sum(ghats[wh] * (pts - centers), axis=1) + osc + slack
            return np.where(ok, vals, np.inf)

        return lower, upper


def bracket_lipschitz(body: ConvexBody, M: float, alpha: float, eps: float, p: float = 1.0):
    """Bracket set for the bounded Lipschitz convex class on the body."""
    dp = TangentGridDP(body, M, alpha, eps, p)
    return BracketSet(body=body, p=p, eps=eps, dp=dp)


@dataclass
class BracketSet:
    body: ConvexBody
    p: float
    eps: float
    dp: TangentGridDP

    @property
    def certified_width(self) -> float:
        return self.dp.certified_width_bound()

    @property
    def log_count(self) -> float:
        return self.dp.log_count()

    def bracket_for(self, value_fn, grad_fn):
        enc = self.dp.encode(value_fn, grad_fn)
        return self.dp.bracket(enc)

    def net_count(self, seed: int | None = None) -> NetCount:
        return NetCount(
            eps=self.eps, log_count=self.log_count, method="bracket-construct",
            params={"M": self.dp.M, "alpha": self.dp.alpha, "d": self.body.dim, "p": self.p},
            seed=seed,
        )


# ---------------------------------------------------------------------------
# union combiner


def combine_union(piece_counts, piece_volumes, eps: float, p: float, r: float) -> dict:
    """Combine per-piece net counts over an interior-disjoint partition.

    piece_counts: callables eta -> log-count.  Scales follow the
    volume-proportional allocation; the summed-scale constraint is verified
    numerically and violations raise AllocationError.
    """
    vols = np.asarray(piece_volumes, dtype=float)
    k = len(vols)
    if len(piece_counts) != k:
        raise ValueError("need one count callable per piece")
    total = float(vols.sum())
    if r == INF:
        etas = (vols / total) ** (1.0 / p) * eps
        lhs = float(np.sum(etas**p)) ** (1.0 / p)
        budget = eps
    else:
        if not 1 <= p < r:
            raise InvalidExponents("need 1 <= p < r")
        etas = 2.0 ** (-(r - p) / p) * (vols / total) ** (1.0 / p - 1.0 / r) * eps
        expo = r * p / (r - p)
        lhs = float(np.sum(etas**expo)) ** ((r - p) / (r * p))
        budget = 2.0 ** (-1.0 / r) * eps
    if lhs > budget * (1 + 1e-12):
        raise AllocationError(
            f"scale allocation violates the union constraint: {lhs:.6g} > {budget:.6g}"
        )
    log_total = k * math.log(4.0)
    for fn, eta in zip(piece_counts, etas):
        log_total += float(fn(float(eta)))
    return {"log_count": log_total, "etas": etas, "constraint_lhs": lhs, "constraint_rhs": budget}


# ---------------------------------------------------------------------------
# facet-count recursion


def facet_recursion_gamma(d: int, p: float, r: float) -> float:
    return (r + 2 * d) * p / (r - p)


def facet_recursion(k: int, eps: float, d: int, p: float, r: float) -> float:
    """Numeric bound from iterating the facet-peeling inequality.

    Each round multiplies the scale by (2k')^{2/d} and pays k'^gamma (the
    undetermined constant is 1); iteration stops at the first scale >= 1,
    where one element covers the class.
    """
    if k < 3:
        raise ValueError("need k >= 3 facets")
    if not (1 <= p < r < INF):
        raise InvalidExponents("recursion needs 1 <= p < r < inf")
    if eps >= 1.0:
        return 0.0
    gamma = facet_recursion_gamma(d, p, r)
    total = 0.0
    L = 1.0
    j = 0
    while L * eps < 1.0:
        total += (k + j) ** gamma / 2.0**j
        L *= (2.0 * (k + j)) ** (2.0 / d)
        j += 1
        if j > 10_000:
            raise BudgetExceeded("facet recursion failed to terminate")
    tail = 2.0 ** (-j) * 4.0 * (L * eps) ** (d / 2.0)
    value = eps ** (-d / 2.0) * (total + tail) - 4.0
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# discrete general upper bound


def general_upper_bound(
    S: StepFunction, eps: float, p: float, r: float, d: int, volume: float = 1.0
) -> dict:
    """Discrete two-term bound from dyadic levels of the counting function.

    Stops at the smallest s with 2^-s <= (2^{-1/p} eps)^{rp/(r-p)}; level
    weights interpolate between the level volume and the count.  Reports the
    value, both terms, and the constant relating it to the integral bound.
    """
    if not isinstance(S, StepFunction):
        raise TypeError("S must be a StepFunction")
    if not (0 < eps < 1):
        raise ValueError("need 0 < eps < 1")
    if r == INF:
        gamma = p
        beta = 2.0 * p / (2.0 * p + d)
        vol_pow = volume ** (1.0 / p)
    else:
        if not 1 <= p < r:
            raise InvalidExponents("need 1 <= p < r")
        gamma = r * p / (r - p)
        beta = 2.0 * p * r / (2.0 * p * r + (r - p) * d)
        vol_pow = volume ** (1.0 / p - 1.0 / r)
    target = (2.0 ** (-1.0 / p) * eps) ** gamma
    s = max(1, int(math.ceil(-math.log2(target))))
    levels = np.arange(1, s + 1, dtype=float)
    Svals = np.array([S(2.0 ** (-i)) for i in levels])
    alphas = (2.0**(-levels) * volume) ** (1.0 - beta) * Svals**beta
    first = math.log(4.0) * float(Svals.sum())
    second = (
        2.0 ** (d / 2.0 + d / (2.0 * p))
        * float(alphas.sum()) ** (1.0 / beta)
        * (eps * vol_pow) ** (-d / 2.0)
    )
    integral = theorem2_bound(S, eps, p, r, d, volume)
    big_c = max(2.0 * math.log(4.0), 2.0 ** (d / 2.0 + d / (2.0 * p) + 1.0 / beta))
    return {
        "value": first + second,
        "stop_level": s,
        "first_term": first,
        "second_term": second,
        "integral_bound": integral,
        "integral_constant": big_c,
        "beta": beta,
    }
