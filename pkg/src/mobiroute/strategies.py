"""Non-learned routing strategies and the offline optimal oracle.

Every strategy answers one question per queued packet and timestep: which
member of ``Nbr(v) + [v]`` should hold the packet next. The base class loops
:meth:`Strategy.choose` over packets; strategies that can score packets in
bulk override :meth:`Strategy.decide` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .mobility import MobilityTrace, PositionSampler, adjacency
from .scatter import scatter_reduce


class Strategy:
    name = "base"

    def reset(self, world):
        pass

    def decide(self, world, holders) -> list:
        return [self.choose(p, v, world.action_set(v), world) for p, v in holders]

    def choose(self, packet, v, actions, world) -> int:
        raise NotImplementedError

    def on_outcome(self, world, packet, kind: str):
        pass


# -- direct transmission ------------------------------------------------------


def direct_transmission(packet, v, actions) -> int:
    return packet.destination if packet.destination in actions[1:] else v


class DirectTransmission(Strategy):
    name = "direct"

    def choose(self, packet, v, actions, world):
        return direct_transmission(packet, v, actions)


# -- utility (timer) routing --------------------------------------------------


def utility_route(packet, v, actions, timers, u_th: float) -> int:
    """Forward to the neighbor with the smallest timer toward the destination
    when v's own timer exceeds it by more than ``u_th``; deliver directly when
    the destination is a neighbor."""
    d = packet.destination
    nbrs = [u for u in actions if u != v]
    if d in nbrs:
        return d
    if not nbrs:
        return v
    best = min(nbrs, key=lambda u: (timers[u, d], u))
    if timers[v, d] > timers[best, d] + u_th:
        return best
    return v


class UtilityRouting(Strategy):
    name = "utility"

    def __init__(self, u_th: float = 10.0):
        if u_th < 0:
            raise ConfigError("u_th must be non-negative")
        self.u_th = u_th

    def choose(self, packet, v, actions, world):
        return utility_route(packet, v, actions, world.timers, self.u_th)


# -- seek and focus -----------------------------------------------------------


@dataclass(frozen=True)
class SeekFocusParams:
    prob: float = 0.5
    u_th: float = 100.0
    u_f: float = 20.0
    t_focus: float = 10.0
    t_seek: float = 50.0
    decoupling: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0:
            raise ConfigError("prob must lie in [0, 1]")
        if min(self.u_th, self.u_f, self.t_focus, self.t_seek, self.decoupling) < 0:
            raise ConfigError("seek-and-focus thresholds must be non-negative")


@dataclass(frozen=True)
class SeekFocusState:
    phase: str  # "seek" | "focus" | "reseek"
    entry: int
    holder: int


def _random_forward(v, eligible, prob, rng):
    if eligible and rng.random() < prob:
        return eligible[int(rng.integers(len(eligible)))]
    return v


def seek_and_focus(packet, state: SeekFocusState | None, v, actions, timers, params: SeekFocusParams, rng, t: int):
    """One seek-and-focus decision; returns ``(action, new_state)``.

    Seek: the best neighbor timer is above ``u_f``, forward to a random
    neighbor with probability ``prob``. Focus: utility rule with ``u_th``.
    Focus lasting ``t_focus`` steps without a forward switches to re-seek
    (random forwarding) until the holder's own timer drops below ``u_f`` or
    ``t_seek`` steps pass, whichever comes first. The previous sender is not
    a candidate until ``decoupling`` steps after the packet arrived.
    """
    d = packet.destination
    nbrs = [u for u in actions if u != v]
    if d in nbrs:
        return d, state
    blocked = packet.sender if t < packet.arrived_at + params.decoupling else None
    eligible = [u for u in nbrs if u != blocked]

    if state is None:
        state = SeekFocusState("seek", t, v)
    elif state.holder != v:
        # moved since the last decision; a forward counts as focus progress
        entry = packet.arrived_at if state.phase == "focus" else state.entry
        state = SeekFocusState(state.phase, entry, v)

    if state.phase == "reseek":
        if timers[v, d] < params.u_f or t - state.entry >= params.t_seek:
            state = SeekFocusState("seek", t, v)
        else:
            return _random_forward(v, eligible, params.prob, rng), state

    if not eligible:
        return v, state
    best = min(eligible, key=lambda u: (timers[u, d], u))
    if timers[best, d] > params.u_f:
        if state.phase != "seek":
            state = SeekFocusState("seek", t, v)
        return _random_forward(v, eligible, params.prob, rng), state

    if state.phase != "focus":
        state = SeekFocusState("focus", t, v)
    elif t - state.entry >= params.t_focus:
        state = SeekFocusState("reseek", t, v)
        return _random_forward(v, eligible, params.prob, rng), state
    if timers[v, d] > timers[best, d] + params.u_th:
        return best, state
    return v, state


class SeekAndFocus(Strategy):
    name = "seek_focus"

    def __init__(self, params: SeekFocusParams | None = None):
        self.params = params or SeekFocusParams()

    def choose(self, packet, v, actions, world):
        action, state = seek_and_focus(
            packet, packet.state.get("snf"), v, actions, world.timers, self.params, world.rng, world.t
        )
        packet.state["snf"] = state
        return action


# -- optimal oracle -----------------------------------------------------------


def contact_edges(trace: MobilityTrace, tx_range: float, steps: int) -> list:
    """Directed contact edges ``(src, dst)`` for integer timesteps
    ``0 .. steps-1``, both directions of every contact."""
    sampler = PositionSampler(trace)
    out = []
    for t in range(steps):
        dst, src = np.nonzero(adjacency(sampler(t), tx_range))
        out.append((src, dst))
    return out


@dataclass(frozen=True)
class OraclePath:
    delay: int
    hops: int
    path: tuple  # ((timestep, from, to), ...)


def earliest_delivery(edges: list, n: int, src: int, dst: int, t0: int) -> OraclePath | None:
    """Earliest arrival at ``dst`` over the time-expanded contact graph, one
    hop per timestep, and among those the fewest hops. None if ``dst`` is not
    reached within ``len(edges)`` steps."""
    h = np.full(n, np.inf)
    h[src] = 0.0
    hist = []
    for t in range(t0, len(edges)):
        e_src, e_dst = edges[t]
        new = h.copy()
        if len(e_src):
            scatter_reduce(np.minimum, new, e_dst, h[e_src] + 1.0)
        hist.append(h)
        if np.isfinite(new[dst]):
            return _backtrack(edges, hist, t0, src, dst, t, int(new[dst]))
        h = new
    return None


def _backtrack(edges, hist, t0, src, dst, t_last, hops):
    path = []
    node, k, t = dst, hops, t_last
    while k > 0:
        e_src, e_dst = edges[t]
        h = hist[t - t0]
        prev = min(int(a) for a, b in zip(e_src, e_dst) if b == node and h[a] == k - 1)
        path.append((t, prev, node))
        node, k = prev, k - 1
        if k == 0:
            break
        # step back to the first timestep at which prev held k hops
        s = t
        while s - 1 >= t0 and hist[s - 1 - t0][node] == k:
            s -= 1
        t = s - 1
    if node != src:
        raise RuntimeError("oracle backtrack did not reach the source")
    path.reverse()
    return OraclePath(delay=t_last + 1 - t0, hops=hops, path=tuple(path))


def optimal_oracle(trace: MobilityTrace, traffic, tx_range: float, horizon: int | None = None,
                   edges: list | None = None) -> list:
    """Per-packet :class:`OraclePath` (None when undeliverable within the
    horizon) for every packet in the traffic schedule. Queues and TTLs are
    ignored."""
    if edges is None:
        horizon = horizon if horizon is not None else math.floor(trace.duration)
        edges = contact_edges(trace, tx_range, horizon)
    n = trace.device_count
    return [
        earliest_delivery(edges, n, int(s), int(d), int(t))
        for t, s, d in zip(traffic.times, traffic.sources, traffic.destinations)
    ]


def epidemic_flood(adjacency_seq, src: int, dst: int, t0: int) -> tuple[int, int] | None:
    """Literal multi-copy flooding: every copy is offered to every neighbor
    each step and a device keeps a copy unless it already holds one with no
    more hops. Returns ``(delay, min hops among earliest arrivals)``.

    Deliberately naive; used to cross-check :func:`earliest_delivery`.
    """
    n = len(adjacency_seq[0])
    held = {src: {0}}
    for t in range(t0, len(adjacency_seq)):
        adj = adjacency_seq[t]
        arriving = {}
        for a, hop_set in held.items():
            for b in range(n):
                if b != a and adj[a][b]:
                    for hops in hop_set:
                        arriving.setdefault(b, set()).add(hops + 1)
        if dst in arriving:
            return (t + 1 - t0, min(arriving[dst]))
        for b, hop_set in arriving.items():
            mine = held.setdefault(b, set())
            for hops in hop_set:
                if not mine or hops < min(mine):
                    mine.add(hops)
    return None


class OptimalRouting(Strategy):
    """Follows the oracle's precomputed minimum-delay, minimum-hop paths."""

    name = "optimal"

    def reset(self, world):
        cfg = world.config
        edges = contact_edges(world.trace, cfg.tx_range, cfg.total_steps)
        self.plans = {}
        self.oracle = optimal_oracle(world.trace, world.traffic, cfg.tx_range, edges=edges)
        for pid, res in enumerate(self.oracle):
            if res is not None:
                self.plans[pid] = {(t, a): b for t, a, b in res.path}

    def choose(self, packet, v, actions, world):
        return self.plans.get(packet.id, {}).get((world.t, v), v)


STRATEGIES = {
    "direct": DirectTransmission,
    "utility": UtilityRouting,
    "seek_focus": SeekAndFocus,
    "optimal": OptimalRouting,
}
