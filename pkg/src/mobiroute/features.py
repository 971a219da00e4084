"""Relational state/action features for the learned routing agent.

Column order (fixed, shared by training and testing):

state  ``f_s`` (29)  : ttl | 7 base | 7 nbr-min | 7 nbr-max | 7 nbr-mean
action ``f_a`` (28+H): 7 base | 7 nbr-min | 7 nbr-max | 7 nbr-mean | H context bits

where the 7 base features are, in order, queue length, queue length for the
packet's destination, node degree, node density, one-hop delay, two-hop delay
and Euclidean distance to the destination. All but the context bits are
normalized as ``(raw + 1) / (D + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .contacts import LocationRecord
from .errors import FeatureError
from .scatter import scatter_reduce

BASE_NAMES = ("queue", "queue_dest", "degree", "density", "one_hop", "two_hop", "distance")
N_BASE = len(BASE_NAMES)
N_NBR = 3 * N_BASE
STATE_DIM = 1 + N_BASE + N_NBR
_PESSIMISTIC = ("one_hop", "two_hop", "distance")

STATE_NAMES = (
    ("ttl",)
    + BASE_NAMES
    + tuple(f"nbr_min_{n}" for n in BASE_NAMES)
    + tuple(f"nbr_max_{n}" for n in BASE_NAMES)
    + tuple(f"nbr_mean_{n}" for n in BASE_NAMES)
)


def action_dim(n_history: int) -> int:
    return N_BASE + N_NBR + n_history


def action_names(n_history: int) -> tuple[str, ...]:
    return tuple(f"a_{n}" for n in STATE_NAMES[1:]) + tuple(f"ctx_{i}" for i in range(n_history))


def input_names(n_history: int) -> tuple[str, ...]:
    """Column names of the concatenated network input ``f_s + f_a``."""
    return STATE_NAMES + action_names(n_history)


@dataclass(frozen=True)
class NormalizationTable:
    ttl: float = 300.0
    queue: float = 30.0
    queue_dest: float = 30.0
    degree: float = 10.0
    density: float = 25.0
    one_hop: float = 1000.0
    two_hop: float = 1000.0
    x: float = 500.0
    y: float = 500.0
    distance: float = 2.0

    @classmethod
    def for_network(cls, n_devices: int, area=(500.0, 500.0), ttl_train: float = 300.0):
        return cls(ttl=float(ttl_train), density=float(n_devices), x=float(area[0]), y=float(area[1]))

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not val > 0:
                raise FeatureError(f"normalization denominator {name} must be > 0")

    def base_denominators(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in BASE_NAMES])

    def empty_neighborhood(self) -> np.ndarray:
        """Per-base-feature aggregate used when a device has no neighbors."""
        return np.array([1.0 if n in _PESSIMISTIC else normalize(0.0, getattr(self, n)) for n in BASE_NAMES])


def normalize(raw, denom):
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0):
        raise FeatureError(f"negative raw feature {raw}")
    out = (raw + 1.0) / (denom + 1.0)
    return float(out) if out.ndim == 0 else out


def ttl_feature(ttl, norm: NormalizationTable):
    """Normalized TTL, saturating at the training TTL so that the larger
    test-time TTLs stay inside the range the network was fitted on."""
    return normalize(np.minimum(ttl, norm.ttl), norm.ttl)


def feature_caps(norm: NormalizationTable, ttl_init: float, queue_max: int, n_devices: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact upper bounds of each normalized state/action column (context
    bits excluded)."""
    base = np.array([
        normalize(queue_max, norm.queue),
        normalize(queue_max, norm.queue_dest),
        normalize(n_devices - 1, norm.degree),
        normalize(n_devices - 1, norm.density),
        1.0,
        1.0,
        # an unknown location takes the pessimistic raw value 2 > sqrt(2)
        max(normalize(math.sqrt(2.0), norm.distance), 1.0),
    ])
    block = np.concatenate([base, base, base, base])
    return np.concatenate([[ttl_feature(ttl_init, norm)], block]), block


# -- scalar feature classes -----------------------------------------------------


def device_features(queue_destinations: Sequence[int], d: int, n_neighbors: int, n_devices: int) -> tuple:
    """Raw (queue length, queue length toward d, degree, density).

    Density enters as the neighbor count; normalizing it by the network
    size N turns it into the fraction of devices in range, ``(deg+1)/(N+1)``.
    A literal fraction normalized again by N would collapse to about 1/N.
    """
    q = len(queue_destinations)
    qd = sum(1 for x in queue_destinations if x == d)
    return (q, qd, n_neighbors, n_neighbors)


def path_features(v: int, d: int, pos_v, record_d: LocationRecord | None, area,
                  one_hop: float | None, two_hop: float | None, norm: NormalizationTable) -> tuple:
    """Raw (one-hop delay, two-hop delay, distance) with the pessimistic
    substitutions applied: unavailable or over-ceiling delays become the
    normalization ceiling, an unknown location the maximal distance."""
    if v == d:
        return (0.0, 0.0, 0.0)
    d1 = norm.one_hop if one_hop is None else min(one_hop, norm.one_hop)
    d2 = norm.two_hop if two_hop is None else min(two_hop, norm.two_hop)
    if record_d is None:
        dist = norm.distance
    else:
        dist = math.hypot(pos_v[0] / area[0] - record_d.x / area[0], pos_v[1] / area[1] - record_d.y / area[1])
    return (d1, d2, dist)


def normalize_base(raw7, norm: NormalizationTable) -> np.ndarray:
    return normalize(np.asarray(raw7, dtype=float), norm.base_denominators())


def neighborhood_features(base: np.ndarray, norm: NormalizationTable) -> np.ndarray:
    """(min block, max block, mean block) over the rows of ``base`` (one row
    of 7 normalized features per neighbor)."""
    base = np.asarray(base, dtype=float).reshape(-1, N_BASE)
    if len(base) == 0:
        e = norm.empty_neighborhood()
        return np.concatenate([e, e, e])
    return np.concatenate([base.min(axis=0), base.max(axis=0), base.mean(axis=0)])


def context_features(history: Sequence[int], u: int, n_history: int) -> np.ndarray:
    """``b[i] = 1`` iff the packet was at ``u`` i hops ago (``history[0]`` is
    the current device)."""
    bits = np.zeros(n_history)
    for i, w in enumerate(history[:n_history]):
        if w == u:
            bits[i] = 1.0
    return bits


# -- per-timestep snapshot ------------------------------------------------------


class FeatureSnapshot:
    """Normalized base and neighborhood features of every device toward a set
    of destinations, computed from one timestep's shared state.

    ``base[v, j]`` holds device v's 7 features for destination ``dests[j]``
    and ``nbr[v, j]`` the 21 aggregates over v's neighbors. Everything a
    packet needs to score its candidates is a lookup into these arrays.
    """

    def __init__(self, norm: NormalizationTable, dests, queue_len, queue_dest, adj, one_hop,
                 positions, loc_xy, loc_stamp, area):
        self.norm = norm
        self.dests = np.asarray(dests, dtype=np.int64)
        self.col = {int(d): j for j, d in enumerate(self.dests)}
        n = len(queue_len)
        nd = len(self.dests)
        deg = adj.sum(axis=1).astype(float)
        dst, src = np.nonzero(adj)

        d1_all = np.where(np.isnan(one_hop), np.inf, one_hop)
        np.fill_diagonal(d1_all, 0.0)
        d1 = d1_all[:, self.dests]
        d2 = np.full((n, nd), np.inf)
        if len(src):
            scatter_reduce(np.minimum, d2, dst, d1_all[dst, src][:, None] + d1[src])
        own = (self.dests, np.arange(nd))
        d2[own] = 0.0

        scale = np.asarray(area, dtype=float)
        pv = positions / scale
        rec = loc_xy[:, self.dests] / scale
        dist = np.hypot(pv[:, None, 0] - rec[..., 0], pv[:, None, 1] - rec[..., 1])
        dist = np.where(np.isfinite(loc_stamp[:, self.dests]), dist, norm.distance)
        dist[own] = 0.0

        raw = np.empty((n, nd, N_BASE))
        raw[..., 0] = np.asarray(queue_len, dtype=float)[:, None]
        raw[..., 1] = queue_dest
        raw[..., 2] = deg[:, None]
        raw[..., 3] = deg[:, None]
        raw[..., 4] = np.minimum(d1, norm.one_hop)
        raw[..., 5] = np.minimum(d2, norm.two_hop)
        raw[..., 6] = dist
        self.raw = raw
        self.base = normalize(raw, norm.base_denominators())

        mn = np.full((n, nd, N_BASE), np.inf)
        mx = np.full((n, nd, N_BASE), -np.inf)
        sm = np.zeros((n, nd, N_BASE))
        if len(src):
            scatter_reduce(np.minimum, mn, dst, self.base[src])
            scatter_reduce(np.maximum, mx, dst, self.base[src])
            scatter_reduce(np.add, sm, dst, self.base[src])
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = sm / deg[:, None, None]
        empty = deg == 0
        e = norm.empty_neighborhood()
        mn[empty], mx[empty], mean[empty] = e, e, e
        self.nbr = np.concatenate([mn, mx, mean], axis=2)
        # base + neighborhood features per (device, destination)
        self.device_block = np.concatenate([self.base, self.nbr], axis=2)

    def state(self, v: int, d: int, ttl: float) -> np.ndarray:
        j = self.col[d]
        return np.concatenate([[ttl_feature(ttl, self.norm)], self.device_block[v, j]])

    def action(self, u: int, d: int, history: Sequence[int], n_history: int) -> np.ndarray:
        j = self.col[d]
        return np.concatenate([self.device_block[u, j], context_features(history, u, n_history)])


def assemble(snapshot: FeatureSnapshot, v: int, packet, u: int, n_history: int) -> tuple[np.ndarray, np.ndarray]:
    """State and action vectors for packet ``packet`` at ``v`` considering
    next hop ``u`` (``u == v`` is the stay action)."""
    s = snapshot.state(v, packet.destination, packet.ttl)
    a = snapshot.action(u, packet.destination, packet.history, n_history)
    if len(s) != STATE_DIM or len(a) != action_dim(n_history):
        raise FeatureError(f"feature dimension mismatch: {len(s)}, {len(a)}")
    return s, a
