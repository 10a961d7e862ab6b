"""Simulated 4-anchor UWB real-time locating system.

Range generation with Gaussian noise and NLOS bias, per-anchor scalar
Kalman smoothing, and a Gauss-Newton position solve at 10 Hz warm-started
from the previous fix. The solve is 2D: the tag height is fixed and known,
only (x, y) are estimated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

SIGMA_M2_DEFAULT = 6.67e-4   # m^2, range measurement noise variance
SIGMA_P2_DEFAULT = 1e-4      # m^2, process noise variance
UPDATE_PERIOD = 0.1          # s, 10 Hz positioning rate
ANCHOR_HEIGHTS_DEFAULT = (1.5, 1.6, 1.7, 1.8)
TAG_HEIGHT_DEFAULT = 0.2


class DegenerateGeometryError(RuntimeError):
    """Normal equations singular even with escalated damping."""


@dataclass
class AnchorSet:
    """Exactly four fixed anchors (x, y, z) plus the tag's known height."""
    anchors: np.ndarray
    tag_height: float = TAG_HEIGHT_DEFAULT

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float)
        if self.anchors.shape != (4, 3):
            raise ValueError(f"need 4 anchors with (x, y, z), got {self.anchors.shape}")
        xy = self.anchors[:, :2]
        for i in range(4):
            for j in range(i + 1, 4):
                if np.allclose(self.anchors[i], self.anchors[j]):
                    raise ValueError(f"anchors {i} and {j} coincide")
        # collinearity in the x-y plane kills the 2D solve
        d = xy - xy[0]
        if np.linalg.matrix_rank(d, tol=1e-9) < 2:
            raise ValueError("anchors are collinear in the x-y plane")


def corner_anchor_set(bounds: tuple[float, float, float, float],
                      heights: Sequence[float] = ANCHOR_HEIGHTS_DEFAULT,
                      tag_height: float = TAG_HEIGHT_DEFAULT) -> AnchorSet:
    """Anchors at the corners of the bounds rectangle at staggered heights."""
    xmin, ymin, xmax, ymax = bounds
    corners = [(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]
    anchors = np.array([(x, y, h) for (x, y), h in zip(corners, heights)])
    return AnchorSet(anchors, tag_height)


@dataclass
class RangingNoiseModel:
    sigma: float = 0.05          # m, Gaussian std of range error
    nlos_bias: float = 0.3       # m, additive bias on occluded links
    nlos_dropout_prob: float = 0.0

    def __post_init__(self):
        if self.sigma < 0 or self.nlos_bias < 0:
            raise ValueError("sigma and nlos_bias must be >= 0")
        if not (0.0 <= self.nlos_dropout_prob <= 1.0):
            raise ValueError("nlos_dropout_prob must be in [0, 1]")


def _segments_cross(p: np.ndarray, q: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Which segments properly intersect the open segment p-q (vectorized)."""
    if segments.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    d = q - p
    a = segments[:, 0:2]
    e = segments[:, 2:4] - a
    rel = a - p
    denom = d[0] * e[:, 1] - d[1] * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom
        s = (d[1] * rel[:, 0] - d[0] * rel[:, 1]) / denom
    return (np.abs(denom) > 1e-12) & (t > 0) & (t < 1) & (s >= 0) & (s <= 1)


def simulate_ranges(
    anchors: AnchorSet,
    true_pos: tuple[float, float],
    obstacles: np.ndarray,
    noise: RangingNoiseModel,
    rng: np.random.Generator,
) -> np.ndarray:
    """What the four ranging radios would measure for a tag at true_pos.

    3D Euclidean distance plus Gaussian noise, plus nlos_bias on links whose
    x-y line of sight crosses an obstacle segment; clamped >= 0. Dropped
    measurements (prob nlos_dropout_prob each) come back as NaN.
    """
    if not np.all(np.isfinite(true_pos)):
        raise ValueError("true_pos must be finite")
    tag = np.array([true_pos[0], true_pos[1], anchors.tag_height])
    dist = np.linalg.norm(anchors.anchors - tag, axis=1)
    # rng draws are fixed-count so a given seed yields the same stream
    gauss = rng.normal(0.0, noise.sigma, size=4) if noise.sigma > 0 else np.zeros(4)
    drops = rng.random(4) < noise.nlos_dropout_prob if noise.nlos_dropout_prob > 0 \
        else np.zeros(4, dtype=bool)
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 4)
    p = np.asarray(true_pos, dtype=float)
    ranges = dist + gauss
    if noise.nlos_bias > 0 and obstacles.shape[0]:
        for i in range(4):
            if _segments_cross(p, anchors.anchors[i, :2], obstacles).any():
                ranges[i] += noise.nlos_bias
    ranges = np.maximum(ranges, 0.0)
    ranges[drops] = np.nan
    return ranges


@dataclass
class KalmanState:
    """Scalar constant-value filter state for one anchor's range."""
    x_hat: float = 0.0
    P: float = SIGMA_M2_DEFAULT
    sigma_m2: float = SIGMA_M2_DEFAULT
    sigma_p2: float = SIGMA_P2_DEFAULT
    initialized: bool = False

    def __post_init__(self):
        if self.P <= 0:
            raise ValueError("P must be positive")


def kalman_update(state: KalmanState, z: Optional[float]) -> KalmanState:
    """One predict/update cycle; z None or NaN runs predict only.

    The first real measurement initializes x_hat = z with P = sigma_m2.
    """
    missing = z is None or math.isnan(float(z))
    if not missing and z < 0:
        raise ValueError("range measurement must be >= 0")
    if not state.initialized:
        if missing:
            return KalmanState(state.x_hat, state.P + state.sigma_p2,
                               state.sigma_m2, state.sigma_p2, False)
        return KalmanState(float(z), state.sigma_m2, state.sigma_m2,
                           state.sigma_p2, True)
    p_prior = state.P + state.sigma_p2
    if missing:
        return KalmanState(state.x_hat, p_prior, state.sigma_m2, state.sigma_p2, True)
    k = p_prior / (p_prior + state.sigma_m2)
    x = state.x_hat + k * (float(z) - state.x_hat)
    return KalmanState(x, (1.0 - k) * p_prior, state.sigma_m2, state.sigma_p2, True)


def kalman_steady_state(sigma_p2: float = SIGMA_P2_DEFAULT,
                        sigma_m2: float = SIGMA_M2_DEFAULT) -> tuple[float, float]:
    """Closed-form steady state (gain, posterior variance) of the scalar
    Riccati recursion: a^2 - q a - q r = 0 with a the prior variance."""
    q, r = sigma_p2, sigma_m2
    a = 0.5 * (q + math.sqrt(q * q + 4.0 * q * r))
    k = a / (a + r)
    return k, (1.0 - k) * a


@dataclass
class GnFix:
    position: tuple[float, float]
    residual: float
    iterations: int
    converged: bool
    damped: bool = False


def gauss_newton_solve(
    anchors: AnchorSet,
    ranges: np.ndarray,
    x0: tuple[float, float],
    max_iter: int = 20,
    tol: float = 1e-6,
) -> GnFix:
    """Least-squares tag position from ranges, starting at x0.

    Minimizes sum_i (||(x, y, tag_height) - anchor_i|| - range_i)^2 over
    (x, y). NaN ranges are excluded; at least 3 usable ranges are required.
    Levenberg damping is added only when the normal equations go
    near-singular. Non-convergence returns the best iterate, flagged.
    """
    ranges = np.asarray(ranges, dtype=float)
    usable = np.isfinite(ranges)
    if usable.sum() < 3:
        raise ValueError(f"need >= 3 usable ranges, got {int(usable.sum())}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    apos = anchors.anchors[usable]
    robs = ranges[usable]
    dz = anchors.tag_height - apos[:, 2]
    xy = np.array(x0, dtype=float)
    damped = False
    it = 0
    for it in range(1, max_iter + 1):
        delta = xy - apos[:, :2]
        dist = np.sqrt(np.einsum("ij,ij->i", delta, delta) + dz * dz)
        dist = np.maximum(dist, 1e-12)
        res = dist - robs
        jac = delta / dist[:, None]
        jtj = jac.T @ jac
        jtr = jac.T @ res
        step = None
        lam = 0.0
        for _ in range(8):
            try:
                a = jtj + lam * np.eye(2)
                if np.linalg.cond(a) > 1e12:
                    raise np.linalg.LinAlgError
                step = np.linalg.solve(a, jtr)
                break
            except np.linalg.LinAlgError:
                damped = True
                lam = 1e-6 if lam == 0.0 else lam * 100.0
        if step is None:
            raise DegenerateGeometryError(
                "normal equations singular despite damping escalation")
        xy = xy - step
        if np.linalg.norm(step) < tol:
            delta = xy - apos[:, :2]
            dist = np.sqrt(np.einsum("ij,ij->i", delta, delta) + dz * dz)
            final = float(np.linalg.norm(dist - robs))
            return GnFix((float(xy[0]), float(xy[1])), final, it, True, damped)
    delta = xy - apos[:, :2]
    dist = np.sqrt(np.einsum("ij,ij->i", delta, delta) + dz * dz)
    final = float(np.linalg.norm(dist - robs))
    return GnFix((float(xy[0]), float(xy[1])), final, it, False, damped)


@dataclass
class LocalizerFix:
    t: float
    x: float
    y: float
    converged: bool = True
    n_used: int = 4


class RangeLocalizer:
    """Sequential 10 Hz pipeline: smooth each anchor's range, then solve.

    Each tick filters the four raw ranges through per-anchor Kalman states
    and Gauss-Newton-solves warm-started at the previous fix. A position is
    emitted even when the solve does not converge (best iterate, flagged).
    """

    def __init__(self, anchors: AnchorSet, x0: tuple[float, float],
                 sigma_m2: float = SIGMA_M2_DEFAULT,
                 sigma_p2: float = SIGMA_P2_DEFAULT,
                 period: float = UPDATE_PERIOD):
        self.anchors = anchors
        self.filters = [KalmanState(sigma_m2=sigma_m2, sigma_p2=sigma_p2)
                        for _ in range(4)]
        self.last_fix = (float(x0[0]), float(x0[1]))
        self.period = period
        self.ticks = 0

    def tick(self, ranges: np.ndarray) -> LocalizerFix:
        ranges = np.asarray(ranges, dtype=float)
        self.filters = [kalman_update(f, z) for f, z in zip(self.filters, ranges)]
        smoothed = np.array([f.x_hat if f.initialized else np.nan
                             for f in self.filters])
        t = self.ticks * self.period
        self.ticks += 1
        usable = int(np.isfinite(smoothed).sum())
        if usable < 3:
            # not enough initialized filters yet (heavy dropout at startup):
            # hold the last fix rather than aborting the stream
            return LocalizerFix(t, self.last_fix[0], self.last_fix[1], False, usable)
        fix = gauss_newton_solve(self.anchors, smoothed, self.last_fix)
        self.last_fix = fix.position
        return LocalizerFix(t, fix.position[0], fix.position[1], fix.converged,
                            usable)


def localize(
    range_stream: Iterable[np.ndarray],
    anchors: AnchorSet,
    x0: tuple[float, float],
    sigma_m2: float = SIGMA_M2_DEFAULT,
    sigma_p2: float = SIGMA_P2_DEFAULT,
) -> Iterator[LocalizerFix]:
    """Run the full pipeline over a stream of raw range 4-tuples."""
    loc = RangeLocalizer(anchors, x0, sigma_m2, sigma_p2)
    for ranges in range_stream:
        yield loc.tick(ranges)


# ---------------------------------------------------------------------------
# ranging log: line-delimited "t r1 r2 r3 r4 flags" for record/replay
# ---------------------------------------------------------------------------

@dataclass
class RangingRecord:
    t: float
    ranges: np.ndarray          # 4 values, NaN = missing
    flags: str = "-"            # e.g. "d2" dropout on anchor 2; "-" = clean

    def to_line(self) -> str:
        vals = " ".join("nan" if math.isnan(r) else f"{r:.6f}"
                        for r in self.ranges)
        return f"{self.t:.3f} {vals} {self.flags}"

    @classmethod
    def from_line(cls, line: str) -> "RangingRecord":
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"ranging record needs 6 fields, got {len(parts)}")
        return cls(float(parts[0]),
                   np.array([float(p) for p in parts[1:5]]), parts[5])


def flags_for(ranges: np.ndarray) -> str:
    missing = [str(i) for i in range(len(ranges)) if math.isnan(float(ranges[i]))]
    return "d" + ",".join(missing) if missing else "-"


def write_ranging_log(records: Iterable[RangingRecord], path) -> None:
    with open(path, "w") as f:
        for rec in records:
            f.write(rec.to_line() + "\n")


def read_ranging_log(path) -> list[RangingRecord]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(RangingRecord.from_line(line))
    return out


def replay_ranging_log(path, anchors: AnchorSet,
                       x0: tuple[float, float]) -> list[LocalizerFix]:
    """Re-run the localizer over a recorded range stream."""
    records = read_ranging_log(path)
    return list(localize((r.ranges for r in records), anchors, x0))
