"""Ray casting against triangle soups: a watertight primitive test plus a BVH.

The primitive test is the shear/scaled-barycentric formulation.  Rays that
pass exactly through an edge shared by two triangles are resolved by a
top-left style tie rule so that exactly one of the two triangles reports the
hit: edge functions computed for the shared edge in adjacent triangles are
exact IEEE negations of each other, and the tie rule accepts exactly one
orientation.  Rays coplanar with a triangle (degenerate projection) never
hit.  All kernels are compiled with numba and operate on flat arrays.
"""

from __future__ import annotations

import numpy as np
from numba import njit

INVALID = np.int64(-1)
_LEAF_SIZE = 4
_STACK_DEPTH = 96
MAX_LINE_HITS = 256


# ---------------------------------------------------------------------------
# Watertight ray/triangle test
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _shear_setup(d):
    """Pick the dominant ray axis and shear constants for one ray."""
    ax, ay, az = abs(d[0]), abs(d[1]), abs(d[2])
    if az >= ax and az >= ay:
        kz = 2
    elif ay >= ax:
        kz = 1
    else:
        kz = 0
    kx = kz + 1
    if kx == 3:
        kx = 0
    ky = kx + 1
    if ky == 3:
        ky = 0
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sz = 1.0 / d[kz]
    sx = d[kx] * sz
    sy = d[ky] * sz
    return kx, ky, kz, sx, sy, sz


@njit(cache=True, inline="always")
def _edge_accept(dx, dy):
    """Tie rule for a ray exactly on an edge; complementary for (dx,dy) vs (-dx,-dy)."""
    if dy > 0.0:
        return True
    if dy < 0.0:
        return False
    return dx < 0.0


@njit(cache=True, inline="always")
def _intersect_tri(o, kx, ky, kz, sx, sy, sz, pa, pb, pc, t_min, t_max):
    """Ray/triangle intersection; returns hit parameter t or -1.0 on miss."""
    axx = pa[kx] - o[kx]
    axy = pa[ky] - o[ky]
    axz = pa[kz] - o[kz]
    bxx = pb[kx] - o[kx]
    bxy = pb[ky] - o[ky]
    bxz = pb[kz] - o[kz]
    cxx = pc[kx] - o[kx]
    cxy = pc[ky] - o[ky]
    cxz = pc[kz] - o[kz]

    ax = axx - sx * axz
    ay = axy - sy * axz
    bx = bxx - sx * bxz
    by = bxy - sy * bxz
    cx = cxx - sx * cxz
    cy = cxy - sy * cxz

    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax

    det = u + v + w
    if det == 0.0:
        return -1.0
    s = 1.0 if det > 0.0 else -1.0

    us = u * s
    vs = v * s
    ws = w * s
    if us < 0.0 or vs < 0.0 or ws < 0.0:
        return -1.0

    # Boundary hits: each zero edge function must pass the tie rule, applied
    # to the edge direction in the winding normalized by the sign of det.
    if us == 0.0:
        if not _edge_accept(s * (cx - bx), s * (cy - by)):
            return -1.0
    if vs == 0.0:
        if not _edge_accept(s * (ax - cx), s * (ay - cy)):
            return -1.0
    if ws == 0.0:
        if not _edge_accept(s * (bx - ax), s * (by - ay)):
            return -1.0

    az = sz * axz
    bz = sz * bxz
    cz = sz * cxz
    t = (u * az + v * bz + w * cz) / det
    if t < t_min or t > t_max:
        return -1.0
    return t


# ---------------------------------------------------------------------------
# Brute-force casting (oracle path, no acceleration structure)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _brute_nearest(verts, tris, o, d, t_min, t_max):
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    best_t = np.inf
    best_id = INVALID
    for i in range(tris.shape[0]):
        t = _intersect_tri(
            o, kx, ky, kz, sx, sy, sz,
            verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
            t_min, t_max,
        )
        if t >= 0.0 and (t < best_t or (t == best_t and i < best_id)):
            best_t = t
            best_id = i
    return best_id, best_t


@njit(cache=True)
def _brute_count(verts, tris, o, d, t_min, t_max):
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    n = 0
    lo = np.inf
    hi = -np.inf
    for i in range(tris.shape[0]):
        t = _intersect_tri(
            o, kx, ky, kz, sx, sy, sz,
            verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
            t_min, t_max,
        )
        if t >= 0.0:
            n += 1
            if t < lo:
                lo = t
            if t > hi:
                hi = t
    return n, lo, hi


@njit(cache=True)
def _brute_collect(verts, tris, o, d, t_min, t_max, out):
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    n = 0
    for i in range(tris.shape[0]):
        t = _intersect_tri(
            o, kx, ky, kz, sx, sy, sz,
            verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
            t_min, t_max,
        )
        if t >= 0.0:
            if n < out.shape[0]:
                out[n] = t
            n += 1
    return n


# ---------------------------------------------------------------------------
# BVH construction: Morton-ordered midpoint splits over triangle centroids
# ---------------------------------------------------------------------------


def _part1by2(x):
    x = x.astype(np.uint64) & np.uint64(0x3FF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x030000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x0300F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x030C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x09249249)
    return x


def _morton_codes(centroids):
    lo = centroids.min(axis=0)
    span = centroids.max(axis=0) - lo
    span[span < 1e-12] = 1.0
    q = np.clip(((centroids - lo) / span * 1023.0), 0.0, 1023.0).astype(np.uint64)
    return _part1by2(q[:, 0]) | (_part1by2(q[:, 1]) << np.uint64(1)) | (
        _part1by2(q[:, 2]) << np.uint64(2)
    )


@njit(cache=True)
def _build_nodes(n_elems, leaf_size, node_left, node_right, node_start, node_count_arr):
    stack = np.empty((_STACK_DEPTH, 3), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_elems
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        if end - start <= leaf_size:
            node_start[node] = start
            node_count_arr[node] = end - start
            continue
        mid = (start + end) // 2
        left = n_nodes
        right = n_nodes + 1
        n_nodes += 2
        node_left[node] = left
        node_right[node] = right
        stack[top, 0] = left
        stack[top, 1] = start
        stack[top, 2] = mid
        top += 1
        stack[top, 0] = right
        stack[top, 1] = mid
        stack[top, 2] = end
        top += 1
    return n_nodes


@njit(cache=True)
def _fill_bboxes(n_nodes, order, tri_lo, tri_hi, node_left, node_right,
                 node_start, node_count_arr, node_lo, node_hi):
    for node in range(n_nodes - 1, -1, -1):
        if node_start[node] >= 0:
            s = node_start[node]
            c = node_count_arr[node]
            for k in range(3):
                node_lo[node, k] = np.inf
                node_hi[node, k] = -np.inf
            for j in range(s, s + c):
                e = order[j]
                for k in range(3):
                    if tri_lo[e, k] < node_lo[node, k]:
                        node_lo[node, k] = tri_lo[e, k]
                    if tri_hi[e, k] > node_hi[node, k]:
                        node_hi[node, k] = tri_hi[e, k]
        else:
            l = node_left[node]
            r = node_right[node]
            for k in range(3):
                node_lo[node, k] = min(node_lo[l, k], node_lo[r, k])
                node_hi[node, k] = max(node_hi[l, k], node_hi[r, k])


@njit(cache=True, inline="always")
def _slab_hit(o, inv, lo, hi, t_min, t_max):
    tmin = t_min
    tmax = t_max
    for k in range(3):
        t0 = (lo[k] - o[k]) * inv[k]
        t1 = (hi[k] - o[k]) * inv[k]
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 == t0 and t0 > tmin:  # NaN guard for 0*inf
            tmin = t0
        if t1 == t1 and t1 < tmax:
            tmax = t1
    return tmin <= tmax


@njit(cache=True)
def _bvh_nearest(verts, tris, order, node_left, node_right, node_start,
                 node_count_arr, node_lo, node_hi, o, d, t_min, t_max):
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    inv = np.empty(3)
    for k in range(3):
        inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
    best_t = np.inf
    best_id = INVALID
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        limit = t_max if best_t > t_max else best_t
        if not _slab_hit(o, inv, node_lo[node], node_hi[node], t_min, limit):
            continue
        if node_start[node] >= 0:
            s = node_start[node]
            for j in range(s, s + node_count_arr[node]):
                i = order[j]
                t = _intersect_tri(
                    o, kx, ky, kz, sx, sy, sz,
                    verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
                    t_min, t_max,
                )
                if t >= 0.0 and (t < best_t or (t == best_t and i < best_id)):
                    best_t = t
                    best_id = i
        else:
            stack[top] = node_left[node]
            top += 1
            stack[top] = node_right[node]
            top += 1
    return best_id, best_t


@njit(cache=True)
def _bvh_any(verts, tris, order, node_left, node_right, node_start,
             node_count_arr, node_lo, node_hi, o, d, t_min, t_max):
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    inv = np.empty(3)
    for k in range(3):
        inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(o, inv, node_lo[node], node_hi[node], t_min, t_max):
            continue
        if node_start[node] >= 0:
            s = node_start[node]
            for j in range(s, s + node_count_arr[node]):
                i = order[j]
                t = _intersect_tri(
                    o, kx, ky, kz, sx, sy, sz,
                    verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
                    t_min, t_max,
                )
                if t >= 0.0:
                    return True
        else:
            stack[top] = node_left[node]
            top += 1
            stack[top] = node_right[node]
            top += 1
    return False


@njit(cache=True)
def _bvh_count(verts, tris, order, node_left, node_right, node_start,
               node_count_arr, node_lo, node_hi, o, d, t_min, t_max):
    """Count hits and track the min/max hit parameter along the ray."""
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    inv = np.empty(3)
    for k in range(3):
        inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
    n = 0
    lo_t = np.inf
    hi_t = -np.inf
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(o, inv, node_lo[node], node_hi[node], t_min, t_max):
            continue
        if node_start[node] >= 0:
            s = node_start[node]
            for j in range(s, s + node_count_arr[node]):
                i = order[j]
                t = _intersect_tri(
                    o, kx, ky, kz, sx, sy, sz,
                    verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
                    t_min, t_max,
                )
                if t >= 0.0:
                    n += 1
                    if t < lo_t:
                        lo_t = t
                    if t > hi_t:
                        hi_t = t
        else:
            stack[top] = node_left[node]
            top += 1
            stack[top] = node_right[node]
            top += 1
    return n, lo_t, hi_t


@njit(cache=True)
def _bvh_collect(verts, tris, order, node_left, node_right, node_start,
                 node_count_arr, node_lo, node_hi, o, d, t_min, t_max, out):
    kx, ky, kz, sx, sy, sz = _shear_setup(d)
    inv = np.empty(3)
    for k in range(3):
        inv[k] = 1.0 / d[k] if d[k] != 0.0 else np.inf
    n = 0
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(o, inv, node_lo[node], node_hi[node], t_min, t_max):
            continue
        if node_start[node] >= 0:
            s = node_start[node]
            for j in range(s, s + node_count_arr[node]):
                i = order[j]
                t = _intersect_tri(
                    o, kx, ky, kz, sx, sy, sz,
                    verts[tris[i, 0]], verts[tris[i, 1]], verts[tris[i, 2]],
                    t_min, t_max,
                )
                if t >= 0.0:
                    if n < out.shape[0]:
                        out[n] = t
                    n += 1
        else:
            stack[top] = node_left[node]
            top += 1
            stack[top] = node_right[node]
            top += 1
    return n


# ---------------------------------------------------------------------------
# Batched kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _batch_nearest(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                   origins, dirs, t_min, t_max, out_ids, out_ts):
    for r in range(origins.shape[0]):
        i, t = _bvh_nearest(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                            origins[r], dirs[r], t_min, t_max)
        out_ids[r] = i
        out_ts[r] = t


@njit(cache=True)
def _batch_any(verts, tris, order, nl, nr, ns, nc, blo, bhi,
               origins, dirs, t_min, t_max, out):
    for r in range(origins.shape[0]):
        out[r] = _bvh_any(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                          origins[r], dirs[r], t_min, t_max)


@njit(cache=True)
def _batch_count(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                 origins, dirs, t_min, t_max, out_n, out_lo, out_hi):
    for r in range(origins.shape[0]):
        n, lo, hi = _bvh_count(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                               origins[r], dirs[r], t_min, t_max)
        out_n[r] = n
        out_lo[r] = lo
        out_hi[r] = hi


@njit(cache=True)
def _batch_visible(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                   points, direction, eps, t_max, out):
    """Two-sided visibility: at least one of +/-direction rays is unobstructed."""
    d_pos = direction
    d_neg = -direction
    for r in range(points.shape[0]):
        o_pos = points[r] + eps * d_pos
        if not _bvh_any(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                        o_pos, d_pos, 0.0, t_max):
            out[r] = True
            continue
        o_neg = points[r] + eps * d_neg
        out[r] = not _bvh_any(verts, tris, order, nl, nr, ns, nc, blo, bhi,
                              o_neg, d_neg, 0.0, t_max)


@njit(cache=True)
def _brute_batch_visible(verts, tris, points, direction, eps, t_max, out):
    d_pos = direction
    d_neg = -direction
    for r in range(points.shape[0]):
        o_pos = points[r] + eps * d_pos
        i, _ = _brute_nearest(verts, tris, o_pos, d_pos, 0.0, t_max)
        if i < 0:
            out[r] = True
            continue
        o_neg = points[r] + eps * d_neg
        i, _ = _brute_nearest(verts, tris, o_neg, d_neg, 0.0, t_max)
        out[r] = i < 0


# ---------------------------------------------------------------------------
# Public wrappers
# ---------------------------------------------------------------------------


def _as_ray(origin, direction):
    o = np.ascontiguousarray(origin, dtype=np.float64)
    d = np.ascontiguousarray(direction, dtype=np.float64)
    return o, d


class BruteForceRayCaster:
    """All-triangles intersector; reference oracle for the BVH-backed caster."""

    def __init__(self, vertices, triangles):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)

    def nearest(self, origin, direction, t_max=np.inf):
        o, d = _as_ray(origin, direction)
        i, t = _brute_nearest(self.vertices, self.triangles, o, d, 0.0, t_max)
        return int(i), float(t)

    def any_hit(self, origin, direction, t_max=np.inf):
        i, _ = self.nearest(origin, direction, t_max)
        return i >= 0

    def count_hits(self, origin, direction, t_max=np.inf):
        o, d = _as_ray(origin, direction)
        n, lo, hi = _brute_count(self.vertices, self.triangles, o, d, 0.0, t_max)
        return int(n), float(lo), float(hi)

    def collect_hits(self, origin, direction, t_max=np.inf):
        o, d = _as_ray(origin, direction)
        out = np.empty(MAX_LINE_HITS)
        n = _brute_collect(self.vertices, self.triangles, o, d, 0.0, t_max, out)
        return np.sort(out[: min(n, MAX_LINE_HITS)])

    def visible_points(self, points, direction, eps=1e-4, t_max=np.inf):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        d = np.ascontiguousarray(direction, dtype=np.float64)
        out = np.empty(len(pts), dtype=np.bool_)
        _brute_batch_visible(self.vertices, self.triangles, pts, d, eps, t_max, out)
        return out


class RayCaster:
    """BVH-accelerated ray intersector over an immutable triangle soup."""

    def __init__(self, vertices, triangles, leaf_size=_LEAF_SIZE):
        verts = np.ascontiguousarray(vertices, dtype=np.float64)
        tris = np.ascontiguousarray(triangles, dtype=np.int64)
        if len(tris) == 0:
            raise ValueError("cannot build a BVH over zero triangles")
        self.vertices = verts
        self.triangles = tris

        corners = verts[tris]  # (T, 3, 3)
        tri_lo = np.ascontiguousarray(corners.min(axis=1))
        tri_hi = np.ascontiguousarray(corners.max(axis=1))
        centroids = corners.mean(axis=1)
        self._order = np.ascontiguousarray(
            np.argsort(_morton_codes(centroids), kind="stable").astype(np.int64)
        )

        max_nodes = 2 * len(tris) + 1
        self._left = np.full(max_nodes, -1, dtype=np.int64)
        self._right = np.full(max_nodes, -1, dtype=np.int64)
        self._start = np.full(max_nodes, -1, dtype=np.int64)
        self._count = np.zeros(max_nodes, dtype=np.int64)
        n_nodes = _build_nodes(len(tris), leaf_size, self._left, self._right,
                               self._start, self._count)
        self._lo = np.empty((n_nodes, 3))
        self._hi = np.empty((n_nodes, 3))
        for name in ("_left", "_right", "_start", "_count"):
            setattr(self, name, getattr(self, name)[:n_nodes].copy())
        _fill_bboxes(n_nodes, self._order, tri_lo, tri_hi, self._left, self._right,
                     self._start, self._count, self._lo, self._hi)

    def _args(self):
        return (self.vertices, self.triangles, self._order, self._left,
                self._right, self._start, self._count, self._lo, self._hi)

    def nearest(self, origin, direction, t_max=np.inf):
        """Nearest hit as (triangle_id, t); (-1, inf) when nothing is hit."""
        o, d = _as_ray(origin, direction)
        i, t = _bvh_nearest(*self._args(), o, d, 0.0, t_max)
        return int(i), float(t)

    def any_hit(self, origin, direction, t_max=np.inf):
        o, d = _as_ray(origin, direction)
        return bool(_bvh_any(*self._args(), o, d, 0.0, t_max))

    def count_hits(self, origin, direction, t_max=np.inf):
        """(hit count, smallest t, largest t) along one ray."""
        o, d = _as_ray(origin, direction)
        n, lo, hi = _bvh_count(*self._args(), o, d, 0.0, t_max)
        return int(n), float(lo), float(hi)

    def collect_hits(self, origin, direction, t_max=np.inf):
        """Sorted hit parameters along one ray (capped at MAX_LINE_HITS)."""
        o, d = _as_ray(origin, direction)
        out = np.empty(MAX_LINE_HITS)
        n = _bvh_collect(*self._args(), o, d, 0.0, t_max, out)
        return np.sort(out[: min(n, MAX_LINE_HITS)])

    def nearest_batch(self, origins, dirs, t_max=np.inf):
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        ids = np.empty(len(origins), dtype=np.int64)
        ts = np.empty(len(origins))
        _batch_nearest(*self._args(), origins, dirs, 0.0, t_max, ids, ts)
        return ids, ts

    def any_hit_batch(self, origins, dirs, t_max=np.inf):
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        out = np.empty(len(origins), dtype=np.bool_)
        _batch_any(*self._args(), origins, dirs, 0.0, t_max, out)
        return out

    def count_hits_batch(self, origins, dirs, t_max=np.inf):
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        n = np.empty(len(origins), dtype=np.int64)
        lo = np.empty(len(origins))
        hi = np.empty(len(origins))
        _batch_count(*self._args(), origins, dirs, 0.0, t_max, n, lo, hi)
        return n, lo, hi

    def visible_points(self, points, direction, eps=1e-4, t_max=np.inf):
        """Per point: does at least one of the +/-direction rays escape?"""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        d = np.ascontiguousarray(direction, dtype=np.float64)
        out = np.empty(len(pts), dtype=np.bool_)
        _batch_visible(*self._args(), pts, d, eps, t_max, out)
        return out
