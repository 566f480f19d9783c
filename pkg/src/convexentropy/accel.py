"""Hot numeric kernels.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback.
The active path is chosen at import time: set ``CONVEXENTROPY_NUMBA=0`` in the
environment to force the numpy path (useful for debugging and for the
benchmark in ``benchmarks/bench_kernels.py``, which times both).
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("CONVEXENTROPY_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _flag not in ("0", "false", "off", "no")

try:
    if not NUMBA_REQUESTED:
        raise ImportError("numba disabled by CONVEXENTROPY_NUMBA")
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - exercised via env flag
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        # signature-compatible no-op decorator
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# half-space membership


@njit(cache=True)
def _halfspace_contains_loop(points, normals, offsets, tol):
    n = points.shape[0]
    m = normals.shape[0]
    d = points.shape[1]
    out = np.ones(n, dtype=np.bool_)
    for i in range(n):
        for j in range(m):
            s = 0.0
            for a in range(d):
                s += normals[j, a] * points[i, a]
            if s > offsets[j] + tol:
                out[i] = False
                break
    return out


def _halfspace_contains_numpy(points, normals, offsets, tol):
    return np.all(points @ normals.T <= offsets[None, :] + tol, axis=1)


def halfspace_contains(points, normals, offsets, tol=1e-9):
    """Boolean mask of points satisfying A x <= b + tol for every row."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    normals = np.ascontiguousarray(normals, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    if NUMBA_ENABLED:
        return _halfspace_contains_loop(points, normals, offsets, tol)
    return _halfspace_contains_numpy(points, normals, offsets, tol)


# ---------------------------------------------------------------------------
# max-of-affine evaluation


@njit(cache=True)
def _pwl_eval_loop(points, grads, intercepts):
    n = points.shape[0]
    m = grads.shape[0]
    d = points.shape[1]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        best = -1.0e300
        for j in range(m):
            s = intercepts[j]
            for a in range(d):
                s += grads[j, a] * points[i, a]
            if s > best:
                best = s
        out[i] = best
    return out


def _pwl_eval_numpy(points, grads, intercepts):
    return np.max(points @ grads.T + intercepts[None, :], axis=1)


def pwl_eval(points, grads, intercepts):
    """Evaluate max_j (g_j . x + c_j) at each point."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    grads = np.ascontiguousarray(grads, dtype=np.float64)
    intercepts = np.ascontiguousarray(intercepts, dtype=np.float64)
    if NUMBA_ENABLED:
        return _pwl_eval_loop(points, grads, intercepts)
    return _pwl_eval_numpy(points, grads, intercepts)


# ---------------------------------------------------------------------------
# membership in the radially-projected boundary-triangulation polytope
#
# The inscribed polytope at level k is the union, over boundary simplices of
# the subdivided cube surface, of cones from the origin over the projected
# simplices.  A point is inside iff, writing it in the basis of the d sphere
# vertices of the simplex its direction points through, the coefficients sum
# to at most 1.  The simplex is located in O(d log d) time from the cube-facet
# coordinates of the direction (subcube by flooring, then the coordinate
# ordering picks the simplex of the subdivided subcube).


@njit(cache=True)
def _star_membership_loop(points, k, tol):
    n, d = points.shape
    out = np.zeros(n, dtype=np.bool_)
    ncells = 1 << k
    h = 2.0 / ncells
    loc = np.empty(d - 1, dtype=np.float64)
    axes = np.empty(d - 1, dtype=np.int64)
    base = np.empty(d - 1, dtype=np.float64)
    frac = np.empty(d - 1, dtype=np.float64)
    order = np.empty(d - 1, dtype=np.int64)
    M = np.empty((d, d), dtype=np.float64)
    rhs = np.empty(d, dtype=np.float64)
    vert = np.empty(d, dtype=np.float64)
    for i in range(n):
        big = 0.0
        ax = 0
        for a in range(d):
            v = abs(points[i, a])
            if v > big:
                big = v
                ax = a
        if big <= tol:
            out[i] = True  # origin is interior
            continue
        s = 1.0 if points[i, ax] > 0 else -1.0
        # facet-local coordinates in [0, 2^k)
        m = 0
        for a in range(d):
            if a == ax:
                continue
            axes[m] = a
            loc[m] = (points[i, a] / big + 1.0) * 0.5 * ncells
            m += 1
        for t in range(d - 1):
            c = math.floor(loc[t])
            if c < 0:
                c = 0
            if c > ncells - 1:
                c = ncells - 1
            base[t] = c
            frac[t] = loc[t] - c
        # order coordinates by descending fractional part (insertion sort)
        for t in range(d - 1):
            order[t] = t
        for t in range(1, d - 1):
            key = order[t]
            fk = frac[key]
            u = t - 1
            while u >= 0 and frac[order[u]] < fk:
                order[u + 1] = order[u]
                u -= 1
            order[u + 1] = key
        # columns of M = projected simplex vertices
        for t in range(d):
            # cube-boundary vertex t of the simplex
            for a in range(d - 1):
                vert[axes[a]] = -1.0 + base[a] * h
            vert[ax] = s
            for u in range(t):
                vert[axes[order[u]]] += h
            nv = 0.0
            for a in range(d):
                nv += vert[a] * vert[a]
            nv = math.sqrt(nv)
            for a in range(d):
                M[a, t] = vert[a] / nv
        for a in range(d):
            rhs[a] = points[i, a]
        # solve M lam = x by Gaussian elimination with partial pivoting
        ok = True
        for col in range(d):
            piv = col
            pv = abs(M[col, col])
            for r in range(col + 1, d):
                if abs(M[r, col]) > pv:
                    pv = abs(M[r, col])
                    piv = r
            if pv < 1e-14:
                ok = False
                break
            if piv != col:
                for c2 in range(d):
                    tmp = M[col, c2]
                    M[col, c2] = M[piv, c2]
                    M[piv, c2] = tmp
                tmp = rhs[col]
                rhs[col] = rhs[piv]
                rhs[piv] = tmp
            for r in range(col + 1, d):
                f = M[r, col] / M[col, col]
                for c2 in range(col, d):
                    M[r, c2] -= f * M[col, c2]
                rhs[r] -= f * rhs[col]
        if not ok:
            out[i] = False
            continue
        tot = 0.0
        for col in range(d - 1, -1, -1):
            v = rhs[col]
            for c2 in range(col + 1, d):
                v -= M[col, c2] * rhs[c2]
            rhs[col] = v / M[col, col]
            tot += rhs[col]
        out[i] = tot <= 1.0 + tol
    return out


def _star_membership_numpy(points, k, tol):
    n, d = points.shape
    ncells = 1 << k
    h = 2.0 / ncells
    absx = np.abs(points)
    ax = np.argmax(absx, axis=1)
    big = absx[np.arange(n), ax]
    at_origin = big <= tol
    big = np.where(at_origin, 1.0, big)
    sign = np.where(points[np.arange(n), ax] >= 0, 1.0, -1.0)
    # local axes: all axes except ax, in increasing order
    all_axes = np.tile(np.arange(d), (n, 1))
    mask = all_axes != ax[:, None]
    axes = all_axes[mask].reshape(n, d - 1)
    loc = (points[np.arange(n)[:, None], axes] / big[:, None] + 1.0) * 0.5 * ncells
    base = np.clip(np.floor(loc), 0, ncells - 1)
    frac = loc - base
    order = np.argsort(-frac, axis=1, kind="stable")
    # build the d simplex vertices per point, shape (n, d, d): [point, vertex, coord]
    verts = np.empty((n, d, d))
    corner = -1.0 + base * h
    rows = np.arange(n)[:, None]
    for t in range(d):
        v = np.zeros((n, d))
        v[rows, axes] = corner
        v[np.arange(n), ax] = sign
        if t > 0:
            inc_axes = np.take_along_axis(axes, order[:, :t], axis=1)
            for u in range(t):
                v[np.arange(n), inc_axes[:, u]] += h
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        verts[:, t, :] = v
    M = np.transpose(verts, (0, 2, 1))  # columns = vertices
    try:
        lam = np.linalg.solve(M, points)
    except np.linalg.LinAlgError:  # pragma: no cover - singular batch
        lam = np.full((n, d), np.inf)
    inside = lam.sum(axis=1) <= 1.0 + tol
    return inside | at_origin


def star_membership(points, k, tol=1e-12):
    """Mask of points inside the level-k inscribed polytope of the unit ball."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if NUMBA_ENABLED:
        return _star_membership_loop(points, k, tol)
    return _star_membership_numpy(points, k, tol)


# ---------------------------------------------------------------------------
# cube-bump witness member evaluation
#
# value = (sum x_i^2 - sum_{active cells} eps^2 * base((x - corner)/eps)) / d
# base kind 0: (1/(20 d)) sum_i sin^3(pi u_i)            (1-d form)
# base kind 1: (1/20) * plateau with parabolic taper in the sup-distance
#              from the cell center, flat inside radius m0


@njit(cache=True)
def _cube_member_eval_loop(points, eps, grid_n, cell_ids, xi, kind, m0):
    n, d = points.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        q = 0.0
        for a in range(d):
            q += points[i, a] * points[i, a]
        flat = 0
        okcell = True
        for a in range(d):
            c = int(math.floor(points[i, a] / eps))
            if c < 0 or c >= grid_n:
                okcell = False
                break
            flat = flat * grid_n + c
        bump = 0.0
        if okcell:
            cid = cell_ids[flat]
            if cid >= 0 and xi[cid] != 0:
                if kind == 0:
                    ssum = 0.0
                    for a in range(d):
                        u = points[i, a] / eps - math.floor(points[i, a] / eps)
                        sv = math.sin(math.pi * u)
                        ssum += sv * sv * sv
                    bump = eps * eps * ssum / (20.0 * d)
                else:
                    m = 0.0
                    for a in range(d):
                        u = points[i, a] / eps - math.floor(points[i, a] / eps)
                        v = abs(2.0 * u - 1.0)
                        if v > m:
                            m = v
                    if m <= m0:
                        psi = 1.0
                    else:
                        s = (m - m0) / (1.0 - m0)
                        psi = (1.0 - s) * (1.0 - s)
                    bump = eps * eps * psi / 20.0
        out[i] = (q - bump) / d
    return out


def _cube_member_eval_numpy(points, eps, grid_n, cell_ids, xi, kind, m0):
    n, d = points.shape
    q = np.sum(points * points, axis=1)
    c = np.floor(points / eps).astype(np.int64)
    okcell = np.all((c >= 0) & (c < grid_n), axis=1)
    flat = np.zeros(n, dtype=np.int64)
    for a in range(d):
        flat = flat * grid_n + np.clip(c[:, a], 0, grid_n - 1)
    cid = np.where(okcell, cell_ids[flat], -1)
    active = (cid >= 0) & (xi[np.clip(cid, 0, None)] != 0)
    u = points / eps - np.floor(points / eps)
    if kind == 0:
        shape = np.sum(np.sin(np.pi * u) ** 3, axis=1) / (20.0 * d)
    else:
        m = np.max(np.abs(2.0 * u - 1.0), axis=1)
        s = np.clip((m - m0) / (1.0 - m0), 0.0, 1.0)
        shape = (1.0 - s) ** 2 / 20.0
    bump = np.where(active, eps * eps * shape, 0.0)
    return (q - bump) / d


def cube_member_eval(points, eps, grid_n, cell_ids, xi, kind, m0):
    """Evaluate one cube-bump family member at many points."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    cell_ids = np.ascontiguousarray(cell_ids, dtype=np.int64)
    xi = np.ascontiguousarray(xi, dtype=np.uint8)
    if NUMBA_ENABLED:
        return _cube_member_eval_loop(
            points, float(eps), int(grid_n), cell_ids, xi, int(kind), float(m0)
        )
    return _cube_member_eval_numpy(points, float(eps), int(grid_n), cell_ids, xi, int(kind), float(m0))


# ---------------------------------------------------------------------------
# cap-ramp witness member evaluation (caps are disjoint: at most one active)


@njit(cache=True)
def _cap_member_eval_loop(points, centers, h, xi):
    n, d = points.shape
    s = centers.shape[0]
    out = np.zeros(n, dtype=np.float64)
    thr = 1.0 - h
    for i in range(n):
        for j in range(s):
            dot = 0.0
            for a in range(d):
                dot += points[i, a] * centers[j, a]
            if dot > thr:
                if xi[j] != 0:
                    out[i] = (dot - thr) / h
                break
    return out


def _cap_member_eval_numpy(points, centers, h, xi):
    dots = points @ centers.T
    ramp = np.clip((dots - (1.0 - h)) / h, 0.0, None)
    ramp *= xi[None, :] != 0
    return ramp.max(axis=1, initial=0.0)


def cap_member_eval(points, centers, h, xi):
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    xi = np.ascontiguousarray(xi, dtype=np.uint8)
    if NUMBA_ENABLED:
        return _cap_member_eval_loop(points, centers, float(h), xi)
    return _cap_member_eval_numpy(points, centers, float(h), xi)


# ---------------------------------------------------------------------------
# max difference-quotient over point pairs


@njit(cache=True)
def _pair_ratio_max_loop(points, values):
    n, d = points.shape
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dd = 0.0
            for a in range(d):
                t = points[i, a] - points[j, a]
                dd += t * t
            if dd > 1e-24:
                r = abs(values[i] - values[j]) / math.sqrt(dd)
                if r > best:
                    best = r
    return best


def _pair_ratio_max_numpy(points, values):
    best = 0.0
    n = points.shape[0]
    block = 512
    for i0 in range(0, n, block):
        p = points[i0 : i0 + block]
        v = values[i0 : i0 + block]
        diff = points[:, None, :] - p[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        num = np.abs(values[:, None] - v[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dist > 1e-12, num / dist, 0.0)
        m = ratio.max()
        if m > best:
            best = m
    return best


def pair_ratio_max(points, values):
    """max over pairs of |v_i - v_j| / ||x_i - x_j||."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if NUMBA_ENABLED:
        return _pair_ratio_max_loop(points, values)
    return _pair_ratio_max_numpy(points, values)


# ---------------------------------------------------------------------------
# Hamming distance helpers for greedy code construction (words as uint64 rows)


@njit(cache=True)
def _min_hamming_ok_loop(word, code, count, dmin):
    w = word.shape[0]
    for i in range(count):
        dist = 0
        for t in range(w):
            x = word[t] ^ code[i, t]
            # popcount
            x = x - ((x >> 1) & 0x5555555555555555)
            x = (x & 0x3333333333333333) + ((x >> 2) & 0x3333333333333333)
            x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0F
            dist += (x * 0x0101010101010101) >> 56
            if dist >= dmin:
                break
        if dist < dmin:
            return False
    return True


def _min_hamming_ok_numpy(word, code, count, dmin):
    if count == 0:
        return True
    x = np.bitwise_xor(code[:count], word[None, :])
    dist = np.unpackbits(x.view(np.uint8), axis=1).sum(axis=1)
    return bool(np.all(dist >= dmin))


def min_hamming_ok(word, code, count, dmin):
    """True iff word is at Hamming distance >= dmin from the first `count` rows."""
    if NUMBA_ENABLED:
        return bool(_min_hamming_ok_loop(word, code, count, dmin))
    return _min_hamming_ok_numpy(word, code, count, dmin)


@njit(cache=True)
def _greedy_bitmap_loop(size, masks):
    covered = np.zeros(size, dtype=np.uint8)
    kept = np.empty(size, dtype=np.int64)
    nk = 0
    for w in range(size):
        if covered[w] == 0:
            kept[nk] = w
            nk += 1
            for m in masks:
                covered[w ^ m] = 1
    return kept[:nk]


def _greedy_bitmap_numpy(size, masks):
    covered = np.zeros(size, dtype=bool)
    kept = []
    for w in range(size):
        if not covered[w]:
            kept.append(w)
            covered[np.bitwise_xor(w, masks)] = True
    return np.array(kept, dtype=np.int64)


def greedy_code_bitmap(nbits, masks):
    """Greedy maximal code over all nbits-words, marking radius balls as covered.

    masks: int64 array of all xor-masks of weight < dmin.  Returns kept words.
    """
    size = 1 << nbits
    masks = np.ascontiguousarray(masks, dtype=np.int64)
    if NUMBA_ENABLED:
        return _greedy_bitmap_loop(size, masks)
    return _greedy_bitmap_numpy(size, masks)


def kernel_pairs():
    """(name, numba_fn, numpy_fn, arg_builder) tuples for the benchmark."""

    def _hs_args(rng):
        pts = rng.uniform(-1, 1, size=(200_000, 3))
        nrm = rng.normal(size=(12, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        off = np.full(12, 0.8)
        return (pts, nrm, off, 1e-9)

    def _pwl_args(rng):
        pts = rng.uniform(0, 1, size=(100_000, 2))
        g = rng.normal(size=(24, 2))
        c = rng.normal(size=24)
        return (pts, g, c)

    def _star_args(rng):
        pts = rng.uniform(-1, 1, size=(200_000, 3))
        pts /= np.maximum(np.linalg.norm(pts, axis=1, keepdims=True), 1.0)
        return (pts, 5, 1e-12)

    def _pair_args(rng):
        pts = rng.uniform(0, 1, size=(1500, 2))
        vals = rng.normal(size=1500)
        return (pts, vals)

    return [
        ("halfspace_contains", _halfspace_contains_loop, _halfspace_contains_numpy, _hs_args),
        ("pwl_eval", _pwl_eval_loop, _pwl_eval_numpy, _pwl_args),
        ("star_membership", _star_membership_loop, _star_membership_numpy, _star_args),
        ("pair_ratio_max", _pair_ratio_max_loop, _pair_ratio_max_numpy, _pair_args),
    ]
