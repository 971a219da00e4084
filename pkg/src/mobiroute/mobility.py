"""Waypoint mobility traces: steady-state random waypoint generation, the
plain-text trace format, interpolation, and neighborhood queries."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, OutOfRangeError, TraceParseError


@dataclass(frozen=True)
class Waypoint:
    t: float
    x: float
    y: float


@dataclass(frozen=True)
class MobilityConfig:
    device_count: int = 25
    area: tuple[float, float] = (500.0, 500.0)
    mean_speed: float = 3.0
    speed_delta: float = 2.0
    duration: float = 100_000.0
    seed: int = 0

    def __post_init__(self):
        if self.device_count < 1:
            raise ConfigError("device_count must be >= 1")
        if len(self.area) != 2 or min(self.area) <= 0:
            raise ConfigError(f"area must be two positive extents, got {self.area}")
        if self.speed_delta < 0:
            raise ConfigError("speed_delta must be non-negative")
        if self.mean_speed - self.speed_delta <= 0:
            raise ConfigError("mean_speed - speed_delta must be > 0 (no zero-speed devices)")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")

    @property
    def speed_range(self) -> tuple[float, float]:
        return (self.mean_speed - self.speed_delta, self.mean_speed + self.speed_delta)


class MobilityTrace:
    """Per-device waypoint sequences over a rectangular area.

    ``waypoints[v]`` is a read-only ``(k, 3)`` float array of ``(t, x, y)``
    rows with strictly increasing ``t``, starting at ``t = 0`` and reaching
    at least ``duration``.
    """

    __slots__ = ("area", "duration", "waypoints")

    def __init__(self, area, duration, waypoints, check=True):
        self.area = (float(area[0]), float(area[1]))
        self.duration = float(duration)
        wps = []
        for w in waypoints:
            arr = np.array(w, dtype=float).reshape(-1, 3)
            arr.setflags(write=False)
            wps.append(arr)
        self.waypoints = tuple(wps)
        if check:
            self.validate()

    @property
    def device_count(self) -> int:
        return len(self.waypoints)

    def validate(self):
        dx, dy = self.area
        for v, w in enumerate(self.waypoints):
            if len(w) == 0:
                raise ValueError(f"device {v} has no waypoints")
            if w[0, 0] != 0.0:
                raise ValueError(f"device {v} does not start at t=0")
            if len(w) > 1 and np.any(np.diff(w[:, 0]) <= 0):
                raise ValueError(f"device {v} waypoint times not strictly increasing")
            if w[-1, 0] < self.duration:
                raise ValueError(f"device {v} trace ends before duration {self.duration}")
            if np.any(w[:, 1] < 0) or np.any(w[:, 1] > dx) or np.any(w[:, 2] < 0) or np.any(w[:, 2] > dy):
                raise ValueError(f"device {v} leaves the area {self.area}")

    def device_waypoints(self, v: int) -> list[Waypoint]:
        return [Waypoint(*row) for row in self.waypoints[v].tolist()]

    def __eq__(self, other):
        if not isinstance(other, MobilityTrace):
            return NotImplemented
        return (
            self.area == other.area
            and self.duration == other.duration
            and len(self.waypoints) == len(other.waypoints)
            and all(np.array_equal(a, b) for a, b in zip(self.waypoints, other.waypoints))
        )

    def __repr__(self):
        return f"MobilityTrace(N={self.device_count}, area={self.area}, duration={self.duration})"


# -- generation ---------------------------------------------------------------


def _stationary_first_leg(rng, dx, dy, vmin, vmax):
    # Leg endpoints drawn with density proportional to leg length, position
    # uniform along the leg, speed with density proportional to 1/v.
    diag = math.hypot(dx, dy)
    while True:
        x1, y1, x2, y2 = rng.random(4) * (dx, dy, dx, dy)
        if rng.random() * diag <= math.hypot(x2 - x1, y2 - y1):
            break
    u = rng.random()
    pos = (x1 + u * (x2 - x1), y1 + u * (y2 - y1))
    if vmax > vmin:
        speed = vmin * (vmax / vmin) ** rng.random()
    else:
        speed = vmin
    return pos, (x2, y2), speed


def generate_rwp_trace(config: MobilityConfig) -> MobilityTrace:
    """Steady-state random waypoint trace with zero pause time.

    Each device starts from the stationary distribution of the random
    waypoint process, so the trace has no warm-up transient. Later legs pick
    a uniform destination and a speed uniform in
    ``[mean_speed - speed_delta, mean_speed + speed_delta]``.
    """
    rng = np.random.default_rng(config.seed)
    dx, dy = config.area
    vmin, vmax = config.speed_range
    waypoints = []
    for _ in range(config.device_count):
        (x, y), (tx, ty), speed = _stationary_first_leg(rng, dx, dy, vmin, vmax)
        t = 0.0
        rows = [(t, x, y)]
        while t < config.duration:
            dist = math.hypot(tx - x, ty - y)
            if dist > 0.0:
                t = t + dist / speed
                x, y = tx, ty
                rows.append((t, x, y))
            tx, ty = rng.random() * dx, rng.random() * dy
            speed = rng.uniform(vmin, vmax)
        waypoints.append(rows)
    return MobilityTrace(config.area, config.duration, waypoints)


# -- text format --------------------------------------------------------------


def serialize_trace(trace: MobilityTrace) -> str:
    """One line per device of repeating ``t x y`` triples, preceded by
    ``#`` metadata lines for the area and duration."""
    lines = [
        f"# area {trace.area[0]!r} {trace.area[1]!r}",
        f"# duration {trace.duration!r}",
    ]
    for w in trace.waypoints:
        lines.append(" ".join(repr(v) for v in w.ravel().tolist()))
    return "\n".join(lines) + "\n"


def parse_trace(text: str, area: tuple[float, float] | None = None, duration: float | None = None) -> MobilityTrace:
    """Parse the trace format written by :func:`serialize_trace`.

    Metadata lines are optional; explicit ``area``/``duration`` arguments take
    precedence. Without an area the coordinate bounds check is skipped, and
    without a duration the shortest device span is used.
    """
    meta_area = meta_duration = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            try:
                if parts[:1] == ["area"]:
                    meta_area = (float(parts[1]), float(parts[2]))
                elif parts[:1] == ["duration"]:
                    meta_duration = float(parts[1])
            except (IndexError, ValueError):
                raise TraceParseError(f"bad metadata line {raw!r}", lineno) from None
            continue
        tokens = line.split()
        if len(tokens) % 3:
            raise TraceParseError(f"{len(tokens)} values is not a whole number of 't x y' triples", lineno)
        try:
            vals = np.array([float(tok) for tok in tokens]).reshape(-1, 3)
        except ValueError as exc:
            raise TraceParseError(f"non-numeric value ({exc})", lineno) from None
        if not np.all(np.isfinite(vals)):
            raise TraceParseError("non-finite value", lineno)
        if vals[0, 0] != 0.0:
            raise TraceParseError("first waypoint must be at t=0", lineno)
        if np.any(np.diff(vals[:, 0]) <= 0):
            raise TraceParseError("waypoint times not strictly increasing", lineno)
        rows.append((lineno, vals))
    if not rows:
        raise TraceParseError("trace has no devices")

    area = area if area is not None else meta_area
    if area is not None:
        dx, dy = area
        for lineno, vals in rows:
            if np.any(vals[:, 1:] < 0) or np.any(vals[:, 1] > dx) or np.any(vals[:, 2] > dy):
                raise TraceParseError(f"coordinate outside area {dx}x{dy}", lineno)
    else:
        allv = np.vstack([v for _, v in rows])
        area = (float(allv[:, 1].max()), float(allv[:, 2].max()))

    duration = duration if duration is not None else meta_duration
    if duration is None:
        duration = min(float(v[-1, 0]) for _, v in rows)
    for lineno, vals in rows:
        if vals[-1, 0] < duration:
            raise TraceParseError(f"device trace ends at {vals[-1, 0]} before duration {duration}", lineno)
    return MobilityTrace(area, duration, [v for _, v in rows], check=False)


# -- queries ------------------------------------------------------------------


def position_at(trace: MobilityTrace, device: int, t: float) -> tuple[float, float]:
    w = trace.waypoints[device]
    times = w[:, 0]
    if t < 0 or t > times[-1]:
        raise OutOfRangeError(f"t={t} outside [0, {times[-1]}] for device {device}")
    k = bisect_right(times, t) - 1
    if k >= len(times) - 1:
        return float(w[-1, 1]), float(w[-1, 2])
    t0, x0, y0 = w[k]
    t1, x1, y1 = w[k + 1]
    frac = (t - t0) / (t1 - t0)
    return float(x0 + frac * (x1 - x0)), float(y0 + frac * (y1 - y0))


def positions_at(trace: MobilityTrace, times) -> np.ndarray:
    """Positions of every device at each time, shape ``(len(times), N, 2)``."""
    times = np.asarray(times, dtype=float)
    out = np.empty((len(times), trace.device_count, 2))
    for v, w in enumerate(trace.waypoints):
        if len(times) and (times.min() < 0 or times.max() > w[-1, 0]):
            raise OutOfRangeError(f"times outside [0, {w[-1, 0]}] for device {v}")
        out[:, v, 0] = np.interp(times, w[:, 0], w[:, 1])
        out[:, v, 1] = np.interp(times, w[:, 0], w[:, 2])
    return out


class PositionSampler:
    """Positions at integer timesteps, interpolated in cached blocks."""

    def __init__(self, trace: MobilityTrace, block: int = 1000):
        self.trace = trace
        self.block = block
        self._start = None
        self._cache = None

    def __call__(self, t: int) -> np.ndarray:
        if self._start is None or not (self._start <= t < self._start + len(self._cache)):
            start = (t // self.block) * self.block
            limit = math.floor(min(w[-1, 0] for w in self.trace.waypoints))
            if t > limit:
                raise OutOfRangeError(f"timestep {t} beyond trace end {limit}")
            stop = min(start + self.block, limit + 1)
            self._cache = positions_at(self.trace, np.arange(start, stop, dtype=float))
            self._start = start
        return self._cache[t - self._start]


def adjacency(positions: np.ndarray, tx_range: float) -> np.ndarray:
    """Closed-ball neighbor matrix (distance <= range), no self loops."""
    diff = positions[:, None, :] - positions[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    adj = d2 <= tx_range * tx_range
    np.fill_diagonal(adj, False)
    return adj


def neighbors_at(trace: MobilityTrace, device: int, t: float, tx_range: float) -> set[int]:
    x, y = position_at(trace, device, t)
    out = set()
    for u in range(trace.device_count):
        if u == device:
            continue
        ux, uy = position_at(trace, u, t)
        if (ux - x) ** 2 + (uy - y) ** 2 <= tx_range * tx_range:
            out.add(u)
    return out


@dataclass(frozen=True)
class ConnectivitySummary:
    mean_degree: float
    mean_largest_component: float


def connectivity_stats(trace: MobilityTrace, tx_range: float, sample_times) -> ConnectivitySummary:
    """Mean node degree and mean largest-component fraction over samples."""
    sample_times = list(sample_times)
    if not sample_times:
        raise ConfigError("sample_times must be non-empty")
    n = trace.device_count
    pos = positions_at(trace, sample_times)
    degrees, fractions = [], []
    for p in pos:
        adj = adjacency(p, tx_range)
        degrees.append(adj.sum(axis=1).mean())
        _, labels = connected_components(csr_matrix(adj), directed=False)
        fractions.append(np.bincount(labels).max() / n)
    return ConnectivitySummary(float(np.mean(degrees)), float(np.mean(fractions)))
