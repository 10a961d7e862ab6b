"""Shared test oracles, independent of the implementation paths they check."""
from __future__ import annotations

import math

import numpy as np


def oracle_raycast(segments, origin, angle, max_range):
    """Brute-force ray-segment intersection via per-segment 2x2 linear solves."""
    ox, oy = origin
    d = np.array([math.cos(angle), math.sin(angle)])
    best = max_range
    for x1, y1, x2, y2 in np.asarray(segments).reshape(-1, 4):
        e = np.array([x2 - x1, y2 - y1])
        mat = np.column_stack([d, -e])
        rhs = np.array([x1 - ox, y1 - oy])
        if abs(np.linalg.det(mat)) < 1e-12:
            continue
        t, s = np.linalg.solve(mat, rhs)
        if t > 0 and 0 <= s <= 1 and t < best:
            best = t
    return best


def oracle_unicycle_rk4(x, y, theta, v, w, dt, n=20000):
    """Numerically integrate the unicycle ODE with classic RK4."""
    h = dt / n
    for _ in range(n):
        k1 = (v * math.cos(theta), v * math.sin(theta), w)
        k2 = (v * math.cos(theta + 0.5 * h * k1[2]),
              v * math.sin(theta + 0.5 * h * k1[2]), w)
        k3 = (v * math.cos(theta + 0.5 * h * k2[2]),
              v * math.sin(theta + 0.5 * h * k2[2]), w)
        k4 = (v * math.cos(theta + h * k3[2]),
              v * math.sin(theta + h * k3[2]), w)
        x += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        theta += h * w
    return x, y, theta


def oracle_point_segment_distance(px, py, x1, y1, x2, y2, n=2000):
    """Dense sampling along the segment; upper bound converging to the truth."""
    ts = np.linspace(0.0, 1.0, n)
    xs = x1 + ts * (x2 - x1)
    ys = y1 + ts * (y2 - y1)
    return float(np.min(np.hypot(xs - px, ys - py)))


def finite_difference_grads(params, objective, h=1e-5):
    """Central-difference gradient of a scalar objective w.r.t. each array
    in params, perturbing entries in place."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.ravel()
        flat_g = g.ravel()
        for i in range(flat_p.size):
            old = flat_p[i]
            flat_p[i] = old + h
            up = objective()
            flat_p[i] = old - h
            down = objective()
            flat_p[i] = old
            flat_g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def relative_error(a, b, floor=1e-8):
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def random_segments(rng, n, lo=-5.0, hi=5.0, min_len=0.1):
    """n random nonzero-length segments inside [lo, hi]^2."""
    out = []
    while len(out) < n:
        seg = rng.uniform(lo, hi, size=4)
        if math.hypot(seg[2] - seg[0], seg[3] - seg[1]) >= min_len:
            out.append(seg)
    return np.array(out)
