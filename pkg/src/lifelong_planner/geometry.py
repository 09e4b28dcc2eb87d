"""Polyline paths, Frenet projection, rigid transforms and box overlap."""
import math

import numba
import numpy as np


def rigid_transform(xy, dx: float, dy: float, rotation: float) -> np.ndarray:
    """Rotate points by ``rotation`` about the origin, then translate by (dx, dy)."""
    xy = np.asarray(xy, dtype=np.float64)
    c, s = math.cos(rotation), math.sin(rotation)
    out = np.empty_like(xy)
    out[..., 0] = c * xy[..., 0] - s * xy[..., 1] + dx
    out[..., 1] = s * xy[..., 0] + c * xy[..., 1] + dy
    return out


def to_local_frame(xy, origin_x: float, origin_y: float, origin_heading: float) -> np.ndarray:
    """Express world points in the frame located at (origin_x, origin_y) facing origin_heading."""
    xy = np.asarray(xy, dtype=np.float64)
    c, s = math.cos(origin_heading), math.sin(origin_heading)
    px = xy[..., 0] - origin_x
    py = xy[..., 1] - origin_y
    out = np.empty_like(xy)
    out[..., 0] = c * px + s * py
    out[..., 1] = -s * px + c * py
    return out


def rotate_vectors(v, rotation: float) -> np.ndarray:
    return rigid_transform(v, 0.0, 0.0, rotation)


def resample_polyline(xy: np.ndarray, n: int) -> np.ndarray:
    """Resample a polyline to ``n`` points equally spaced in arc length."""
    xy = np.asarray(xy, dtype=np.float64)
    seg = np.hypot(*np.diff(xy, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], n)
    return np.stack([np.interp(target, s, xy[:, 0]), np.interp(target, s, xy[:, 1])], axis=-1)


def polyline_headings(xy: np.ndarray) -> np.ndarray:
    d = np.diff(xy, axis=0)
    h = np.arctan2(d[:, 1], d[:, 0])
    return np.concatenate([h, h[-1:]]) if len(h) else np.zeros(len(xy))


class Path:
    """Arc-length parameterised polyline with linear extrapolation past both ends."""

    def __init__(self, xy):
        xy = np.asarray(xy, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2 or len(xy) < 2:
            raise ValueError("path needs at least two 2-D points")
        seg = np.hypot(*np.diff(xy, axis=0).T)
        keep = np.concatenate([[True], seg > 1e-9])
        self.xy = np.ascontiguousarray(xy[keep])
        if len(self.xy) < 2:
            raise ValueError("path has zero length")
        seg = np.hypot(*np.diff(self.xy, axis=0).T)
        self.s = np.concatenate([[0.0], np.cumsum(seg)])
        d = np.diff(self.xy, axis=0)
        self.seg_heading = np.arctan2(d[:, 1], d[:, 0])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def interpolate(self, s):
        """Return (x, y, heading) arrays at stations ``s``."""
        s = np.asarray(s, dtype=np.float64)
        idx = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.seg_heading) - 1)
        h = self.seg_heading[idx]
        ds = s - self.s[idx]
        x = self.xy[idx, 0] + ds * np.cos(h)
        y = self.xy[idx, 1] + ds * np.sin(h)
        return x, y, h

    def frenet_to_xy(self, s, d):
        x, y, h = self.interpolate(s)
        return x - np.asarray(d) * np.sin(h), y + np.asarray(d) * np.cos(h), h

    def project(self, points, s_lo: float = -np.inf, s_hi: float = np.inf):
        """Project points onto the path; returns (station, signed lateral offset, path heading).

        Only segments overlapping [s_lo, s_hi] are searched.
        """
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 2))
        lo = max(0, int(np.searchsorted(self.s, s_lo, side="right")) - 1)
        hi = min(len(self.s) - 1, int(np.searchsorted(self.s, s_hi, side="left")) + 1)
        hi = max(hi, lo + 1)
        s, d, h = _project(self.xy, self.s, self.seg_heading, pts, lo, hi)
        shape = np.asarray(points).shape[:-1]
        return s.reshape(shape), d.reshape(shape), h.reshape(shape)


@numba.njit(cache=True)
def _project(xy, s_arr, seg_heading, pts, lo, hi):
    n = pts.shape[0]
    out_s = np.empty(n)
    out_d = np.empty(n)
    out_h = np.empty(n)
    last = hi - 1
    for i in range(n):
        px = pts[i, 0]
        py = pts[i, 1]
        best = np.inf
        bs = 0.0
        bd = 0.0
        bh = 0.0
        for j in range(lo, hi):
            ax = xy[j, 0]
            ay = xy[j, 1]
            c = math.cos(seg_heading[j])
            sn = math.sin(seg_heading[j])
            seglen = s_arr[j + 1] - s_arr[j]
            rx = px - ax
            ry = py - ay
            t = rx * c + ry * sn
            lat = -rx * sn + ry * c
            # open-ended first/last segment so points beyond the ends extrapolate
            if t < 0.0 and j > 0:
                t = 0.0
            if t > seglen and j < last:
                t = seglen
            qx = ax + t * c
            qy = ay + t * sn
            dist = (px - qx) ** 2 + (py - qy) ** 2
            if dist < best - 1e-12:
                best = dist
                bs = s_arr[j] + t
                bd = lat
                bh = seg_heading[j]
        out_s[i] = bs
        out_d[i] = bd
        out_h[i] = bh
    return out_s, out_d, out_h


def box_corners(cx, cy, heading, length, width) -> np.ndarray:
    """Corners (..., 4, 2) of oriented rectangles centred at (cx, cy)."""
    cx, cy, heading, length, width = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (cx, cy, heading, length, width)))
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[1, 1], [1, -1], [-1, -1], [-1, 1]], dtype=np.float64)
    lx = local[:, 0] * hl[..., None]
    ly = local[:, 1] * hw[..., None]
    x = cx[..., None] + lx * c[..., None] - ly * s[..., None]
    y = cy[..., None] + lx * s[..., None] + ly * c[..., None]
    return np.stack([x, y], axis=-1)


def boxes_overlap(box_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Separating-axis test of one box (4, 2) against many (n, 4, 2); touching counts as no overlap."""
    boxes_b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4, 2)
    n = len(boxes_b)
    if n == 0:
        return np.zeros(0, dtype=bool)
    a = np.broadcast_to(box_a, (n, 4, 2))
    overlap = np.ones(n, dtype=bool)
    for poly in (a, boxes_b):
        for k in range(2):
            edge = poly[:, k + 1] - poly[:, k]
            axis = np.stack([-edge[:, 1], edge[:, 0]], axis=-1)
            pa = np.einsum("nij,nj->ni", a, axis)
            pb = np.einsum("nij,nj->ni", boxes_b, axis)
            overlap &= (pa.max(1) > pb.min(1) + 1e-12) & (pb.max(1) > pa.min(1) + 1e-12)
    return overlap
