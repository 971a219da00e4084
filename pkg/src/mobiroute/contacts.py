"""Per-pair contact statistics, renewal-theory delay estimates, utility
timers with transitivity, and location-record gossip.

Scalar helpers (``PairStats``, ``one_hop_delay`` ...) describe one pair or
one device; ``ContactTable``, ``TimerTable`` and ``LocationTable`` hold the
same state for every device at once and are what the simulator updates each
timestep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ContactConsistencyError
from .scatter import scatter_reduce

NEVER = math.inf  # timer sentinel before the first meeting


@dataclass
class PairStats:
    """Online contact statistics for one device pair.

    Inter-meeting times are the out-of-range gaps between the end of one
    contact and the start of the next; meeting durations are contact
    lengths. Both only change when a transition completes an interval.
    """

    mean_intermeeting: float = 0.0
    mean_meeting_duration: float = 0.0
    meeting_count: int = 0
    gap_count: int = 0
    duration_count: int = 0
    in_contact: bool = False
    last_transition_time: float | None = None
    _gap_m2: float = field(default=0.0, repr=False)

    @property
    def var_intermeeting(self) -> float:
        # sample variance; 0 until two gaps are known
        if self.gap_count < 2:
            return 0.0
        return self._gap_m2 / (self.gap_count - 1)

    def meet(self, t: float):
        if self.in_contact:
            raise ContactConsistencyError(f"meet at t={t} while already in contact")
        if self.last_transition_time is not None:
            gap = t - self.last_transition_time
            self.gap_count += 1
            delta = gap - self.mean_intermeeting
            self.mean_intermeeting += delta / self.gap_count
            self._gap_m2 += delta * (gap - self.mean_intermeeting)
        self.meeting_count += 1
        self.in_contact = True
        self.last_transition_time = t

    def part(self, t: float):
        if not self.in_contact:
            raise ContactConsistencyError(f"part at t={t} while not in contact")
        length = t - self.last_transition_time
        self.duration_count += 1
        self.mean_meeting_duration += (length - self.mean_meeting_duration) / self.duration_count
        self.in_contact = False
        self.last_transition_time = t


def observe_contacts(stats: dict, t: float, meets: Iterable = (), parts: Iterable = ()) -> dict:
    """Apply meet/part transitions at time ``t`` to a ``{(v, u): PairStats}``
    table keyed by unordered pairs (stored as ``(min, max)``). Parts are
    applied before meets."""
    for v, u in parts:
        stats.setdefault((min(v, u), max(v, u)), PairStats()).part(t)
    for v, u in meets:
        stats.setdefault((min(v, u), max(v, u)), PairStats()).meet(t)
    return stats


def residual_time(stats: PairStats) -> float | None:
    """Expected wait until the next meeting, ``T/2 + var/(2T)``.

    Returns None when no inter-meeting time has been observed.
    """
    T = stats.mean_intermeeting
    if stats.gap_count < 1 or T <= 0:
        return None
    return T / 2.0 + stats.var_intermeeting / (2.0 * T)


def one_hop_delay(stats: PairStats) -> float | None:
    """Expected delay to hand a packet directly to the peer.

    A pair currently in contact transmits in one step. Otherwise the delay
    mixes one step (in contact with probability ``M/(T+M)``) and the
    residual wait, floored at one step. None when unavailable.
    """
    if stats.in_contact:
        return 1.0
    R = residual_time(stats)
    if R is None:
        return None
    T, M = stats.mean_intermeeting, stats.mean_meeting_duration
    return max(1.0, (M + R * T) / (T + M))


def two_hop_delay(v, d, neighbors: Iterable, delay: Callable[[int, int], float | None]) -> float | None:
    """Minimum over neighbors ``u`` of ``delay(v, u) + delay(u, d)``; None if
    no neighbor has both estimates."""
    best = None
    for u in neighbors:
        a, b = delay(v, u), delay(u, d)
        if a is None or b is None:
            continue
        if best is None or a + b < best:
            best = a + b
    return best


# -- timers -------------------------------------------------------------------


def tick_timers(timers: np.ndarray, met, dt: float = 1.0) -> np.ndarray:
    """Advance timers by ``dt`` and zero the entries for devices met now.

    ``met`` is a boolean mask shaped like ``timers`` or an iterable of ids
    (for a single device's row). Never-met entries stay infinite.
    """
    out = np.asarray(timers, dtype=float) + dt
    if isinstance(met, np.ndarray) and met.dtype == bool:
        out[met] = 0.0
    else:
        out[list(met)] = 0.0
    return out


def travel_time(distance: float, mean_speed: float) -> float:
    return distance / mean_speed


def apply_timer_transitivity(tau_v: np.ndarray, tau_u: np.ndarray, d_uv: float, mean_speed: float) -> np.ndarray:
    """Adopt ``tau_u(d) + t(d_uv)`` wherever it beats ``tau_v(d)``."""
    tau_v = np.asarray(tau_v, dtype=float)
    cand = np.asarray(tau_u, dtype=float) + travel_time(d_uv, mean_speed)
    return np.where(cand < tau_v, cand, tau_v)


# -- locations ----------------------------------------------------------------


@dataclass(frozen=True)
class LocationRecord:
    device: int
    x: float
    y: float
    stamp: float


def gossip_locations(records_v: Mapping[int, LocationRecord], records_u: Mapping[int, LocationRecord]) -> dict:
    """Merge u's records into v's, keeping the newer stamp per device
    (ties keep v's record)."""
    merged = dict(records_v)
    for w, rec in records_u.items():
        mine = merged.get(w)
        if mine is None or rec.stamp > mine.stamp:
            merged[w] = rec
    return merged


# -- whole-network state ------------------------------------------------------


class ContactTable:
    """Symmetric ``N x N`` arrays of the :class:`PairStats` fields."""

    def __init__(self, n: int):
        self.n = n
        self.in_contact = np.zeros((n, n), dtype=bool)
        self.last_change = np.full((n, n), np.nan)
        self.meet_count = np.zeros((n, n), dtype=np.int64)
        self.gap_count = np.zeros((n, n), dtype=np.int64)
        self.gap_mean = np.zeros((n, n))
        self.gap_m2 = np.zeros((n, n))
        self.dur_count = np.zeros((n, n), dtype=np.int64)
        self.dur_mean = np.zeros((n, n))

    def update(self, t: float, adj: np.ndarray):
        """Record the transitions implied by the new adjacency matrix."""
        meets = adj & ~self.in_contact
        parts = self.in_contact & ~adj
        if parts.any():
            length = t - self.last_change[parts]
            self.dur_count[parts] += 1
            self.dur_mean[parts] += (length - self.dur_mean[parts]) / self.dur_count[parts]
        if meets.any():
            seen = meets & ~np.isnan(self.last_change)
            if seen.any():
                gap = t - self.last_change[seen]
                self.gap_count[seen] += 1
                delta = gap - self.gap_mean[seen]
                self.gap_mean[seen] += delta / self.gap_count[seen]
                self.gap_m2[seen] += delta * (gap - self.gap_mean[seen])
            self.meet_count[meets] += 1
        changed = meets | parts
        self.last_change[changed] = t
        self.in_contact = adj.copy()
        return meets, parts

    def pair(self, v: int, u: int) -> PairStats:
        lc = self.last_change[v, u]
        return PairStats(
            mean_intermeeting=float(self.gap_mean[v, u]),
            mean_meeting_duration=float(self.dur_mean[v, u]),
            meeting_count=int(self.meet_count[v, u]),
            gap_count=int(self.gap_count[v, u]),
            duration_count=int(self.dur_count[v, u]),
            in_contact=bool(self.in_contact[v, u]),
            last_transition_time=None if np.isnan(lc) else float(lc),
            _gap_m2=float(self.gap_m2[v, u]),
        )

    def gap_variance(self) -> np.ndarray:
        n = self.gap_count
        return np.where(n >= 2, self.gap_m2 / np.maximum(n - 1, 1), 0.0)

    def one_hop_delay_matrix(self) -> np.ndarray:
        """Elementwise :func:`one_hop_delay`; NaN where unavailable."""
        T, M = self.gap_mean, self.dur_mean
        avail = (self.gap_count >= 1) & (T > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            R = T / 2.0 + self.gap_variance() / (2.0 * T)
            D = np.maximum(1.0, (M + R * T) / (T + M))
        D = np.where(avail, D, np.nan)
        D[self.in_contact] = 1.0
        return D


class TimerTable:
    """``timers[v, d]``: seconds since v last met d, with transitivity."""

    def __init__(self, n: int):
        self.timers = np.full((n, n), NEVER)
        np.fill_diagonal(self.timers, 0.0)

    def tick(self, adj: np.ndarray, dt: float = 1.0):
        self.timers = tick_timers(self.timers, adj, dt)
        np.fill_diagonal(self.timers, 0.0)

    def propagate(self, src: np.ndarray, dst: np.ndarray, dist: np.ndarray, mean_speed: float):
        """Transitivity over directed contact edges ``dst <- src``, applied
        simultaneously from the pre-update snapshot."""
        if len(src) == 0:
            return
        cand = self.timers[src] + travel_time(dist, mean_speed)[:, None]
        new = self.timers.copy()
        scatter_reduce(np.minimum, new, dst, cand)
        self.timers = new


class LocationTable:
    """``xy[v, w]`` is v's record of w's coordinates, stamped on w's clock."""

    def __init__(self, n: int):
        self.xy = np.zeros((n, n, 2))
        self.stamp = np.full((n, n), -np.inf)

    def refresh_self(self, t: float, positions: np.ndarray):
        idx = np.arange(len(positions))
        self.xy[idx, idx] = positions
        self.stamp[idx, idx] = t

    def gossip(self, src: np.ndarray, dst: np.ndarray):
        """One synchronous exchange round over directed edges ``dst <- src``."""
        if len(src) == 0:
            return
        best = self.stamp.copy()
        scatter_reduce(np.maximum, best, dst, self.stamp[src])
        take = (self.stamp[src] == best[dst]) & (best[dst] > self.stamp[dst])
        e, w = np.nonzero(take)
        xy = self.xy.copy()
        xy[dst[e], w] = self.xy[src[e], w]
        self.xy = xy
        self.stamp = best

    def record(self, v: int, w: int) -> LocationRecord | None:
        s = self.stamp[v, w]
        if not np.isfinite(s):
            return None
        return LocationRecord(w, float(self.xy[v, w, 0]), float(self.xy[v, w, 1]), float(s))


class NetworkState:
    """Everything devices learn from contacts: pair statistics, timers and
    location records. ``advance`` runs the per-timestep bookkeeping."""

    def __init__(self, n: int, mean_speed: float):
        self.n = n
        self.mean_speed = mean_speed
        self.contacts = ContactTable(n)
        self.timers = TimerTable(n)
        self.locations = LocationTable(n)

    def advance(self, t: float, positions: np.ndarray, adj: np.ndarray):
        self.contacts.update(t, adj)
        self.timers.tick(adj)
        dst, src = np.nonzero(adj)
        dist = np.hypot(*(positions[dst] - positions[src]).T) if len(src) else np.zeros(0)
        self.timers.propagate(src, dst, dist, self.mean_speed)
        self.locations.refresh_self(t, positions)
        self.locations.gossip(src, dst)
