"""Discrete-time single-copy routing simulator.

One timestep is one second. ``World.step`` runs the phases in a fixed order:

1. sample positions and neighbor sets;
2. record contact transitions, tick and propagate timers, gossip locations;
   then inject the packets sourced at this step;
3. ask the strategy for a next hop for every queued packet, all from the
   same snapshot;
4. apply the moves (delivery, or enqueue at the next hop);
5. drop packets whose TTL ran out or that overflow a queue;
6. update metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contacts import NetworkState
from .errors import ConfigError, ProtocolViolation
from .features import FeatureSnapshot, NormalizationTable
from .mobility import MobilityConfig, MobilityTrace, PositionSampler, adjacency, generate_rwp_trace


@dataclass
class Packet:
    id: int
    source: int
    destination: int
    ttl: int
    created_at: int
    history: tuple = ()
    hops: int = 0
    location: int = -1
    sender: int | None = None
    arrived_at: int = 0
    state: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Flow:
    source: int
    destination: int
    start: int
    duration: int


@dataclass(frozen=True)
class SimConfig:
    n_devices: int = 25
    tx_range: float = 50.0
    area: tuple[float, float] = (500.0, 500.0)
    mean_speed: float = 3.0
    speed_delta: float = 2.0
    queue_max: int = 200
    flow_rate: float | None = None  # None: .001 * N / 25
    flow_duration: float = 5000.0
    packet_rate: float = 0.01
    ttl: int = 3000
    ttl_train: int = 300
    total_steps: int = 100_000
    cooldown: int = 10_000
    round_steps: int = 1000
    n_history: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_devices < 2:
            raise ConfigError("need at least two devices")
        if self.tx_range < 0:
            raise ConfigError("tx_range must be non-negative")
        if not 0 <= self.cooldown < self.total_steps:
            raise ConfigError("cooldown must be in [0, total_steps)")
        if self.flow_duration <= 0 or self.packet_rate <= 0 or self.effective_flow_rate <= 0:
            raise ConfigError("traffic rates must be positive")
        if self.queue_max < 1 or self.ttl < 1 or self.ttl_train < 1 or self.round_steps < 1:
            raise ConfigError("queue_max, ttl, ttl_train and round_steps must be >= 1")
        if self.n_history < 0:
            raise ConfigError("n_history must be >= 0")

    @property
    def effective_flow_rate(self) -> float:
        return 0.001 * self.n_devices / 25 if self.flow_rate is None else self.flow_rate

    @property
    def initial_flows(self) -> int:
        return round(self.effective_flow_rate * self.flow_duration)

    def seeds(self) -> dict:
        """Independent integer seeds for mobility, traffic and strategy."""
        children = np.random.SeedSequence(self.seed).spawn(3)
        return {
            name: int(c.generate_state(1)[0])
            for name, c in zip(("mobility", "traffic", "strategy"), children)
        }

    def mobility_config(self) -> MobilityConfig:
        return MobilityConfig(
            device_count=self.n_devices,
            area=tuple(self.area),
            mean_speed=self.mean_speed,
            speed_delta=self.speed_delta,
            duration=float(self.total_steps),
            seed=self.seeds()["mobility"],
        )

    def normalization(self) -> NormalizationTable:
        return NormalizationTable.for_network(self.n_devices, self.area, self.ttl_train)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class Traffic:
    flows: list
    times: np.ndarray
    sources: np.ndarray
    destinations: np.ndarray

    def __len__(self):
        return len(self.times)


def generate_traffic(config: SimConfig, seed: int | None = None) -> Traffic:
    """Flow and packet schedule.

    Flows arrive as a Poisson count per step with rate ``effective_flow_rate``
    (plus ``initial_flows`` at t=0), last an exponential number of steps with
    mean ``flow_duration`` and emit a Poisson count of packets per step with
    rate ``packet_rate``. Nothing is generated in the final ``cooldown``
    steps.
    """
    rng = np.random.default_rng(config.seeds()["traffic"] if seed is None else seed)
    n = config.n_devices
    horizon = config.total_steps - config.cooldown
    arrivals = rng.poisson(config.effective_flow_rate, horizon)
    starts = np.concatenate([np.zeros(config.initial_flows, dtype=np.int64), np.repeat(np.arange(horizon), arrivals)])
    flows, times, srcs, dsts = [], [], [], []
    for start in starts.tolist():
        src = int(rng.integers(n))
        dst = int((src + rng.integers(1, n)) % n)
        duration = max(1, math.ceil(rng.exponential(config.flow_duration)))
        flows.append(Flow(src, dst, start, duration))
        stop = min(start + duration, horizon)
        if stop <= start:
            continue
        counts = rng.poisson(config.packet_rate, stop - start)
        ts = np.repeat(np.arange(start, stop), counts)
        times.append(ts)
        srcs.append(np.full(len(ts), src))
        dsts.append(np.full(len(ts), dst))
    if times:
        times, srcs, dsts = np.concatenate(times), np.concatenate(srcs), np.concatenate(dsts)
        order = np.argsort(times, kind="stable")
        times, srcs, dsts = times[order], srcs[order], dsts[order]
    else:
        times = srcs = dsts = np.zeros(0, dtype=np.int64)
    return Traffic(flows, times.astype(np.int64), srcs.astype(np.int64), dsts.astype(np.int64))


@dataclass
class Metrics:
    """Per-run outcome. ``delivered`` rows are ``(packet id, delay, hops)``;
    ``rounds`` rows are ``(timestep, cum. mean delay, cum. mean forwards,
    avg queue, max queue, delivered, dropped)``."""

    created: int = 0
    delivered: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    queue_sum: float = 0.0
    queue_steps: int = 0
    max_queue: int = 0
    rounds: list = field(default_factory=list)
    transmissions: int = 0

    @property
    def delivered_count(self) -> int:
        return len(self.delivered)

    @property
    def dropped_count(self) -> int:
        return len(self.dropped)

    @property
    def mean_delay(self) -> float:
        return float(np.mean([r[1] for r in self.delivered])) if self.delivered else math.nan

    @property
    def mean_forwards(self) -> float:
        return float(np.mean([r[2] for r in self.delivered])) if self.delivered else math.nan

    @property
    def avg_queue(self) -> float:
        return self.queue_sum / self.queue_steps if self.queue_steps else 0.0

    @property
    def delivery_ratio(self) -> float:
        return self.delivered_count / self.created if self.created else math.nan

    def delays_by_packet(self) -> dict:
        return {pid: delay for pid, delay, _ in self.delivered}

    def summary(self) -> dict:
        return {
            "mean_delay": self.mean_delay,
            "mean_forwards": self.mean_forwards,
            "avg_queue": self.avg_queue,
            "max_queue": self.max_queue,
            "created": self.created,
            "delivered": self.delivered_count,
            "dropped": self.dropped_count,
            "delivery_ratio": self.delivery_ratio,
        }


SUMMARY_FIELDS = ("mean_delay", "mean_forwards", "avg_queue", "max_queue", "created", "delivered", "dropped", "delivery_ratio")


def aggregate(metrics_list) -> dict:
    """Mean and 95% normal-approximation CI half-width per summary metric.

    ``max_queue`` aggregates as the maximum over runs. With a single run the
    half-widths are None.
    """
    if not metrics_list:
        raise ValueError("no runs to aggregate")
    rows = [m.summary() if isinstance(m, Metrics) else dict(m) for m in metrics_list]
    out = {"runs": len(rows)}
    for key in SUMMARY_FIELDS:
        vals = np.array([r[key] for r in rows], dtype=float)
        if key == "max_queue":
            out[key] = float(vals.max())
            out[key + "_ci"] = None
            continue
        out[key] = float(vals.mean())
        if len(vals) < 2:
            out[key + "_ci"] = None
        else:
            out[key + "_ci"] = float(1.96 * vals.std(ddof=1) / math.sqrt(len(vals)))
    return out


class World:
    """Mutable simulation state for one run."""

    def __init__(self, config: SimConfig, strategy, trace: MobilityTrace | None = None,
                 traffic: Traffic | None = None):
        self.config = config
        self.n = config.n_devices
        self.trace = trace if trace is not None else generate_rwp_trace(config.mobility_config())
        if self.trace.device_count != self.n:
            raise ConfigError(f"trace has {self.trace.device_count} devices, config expects {self.n}")
        self.traffic = traffic if traffic is not None else generate_traffic(config)
        self.sampler = PositionSampler(self.trace)
        self.net = NetworkState(self.n, config.mean_speed)
        self.norm = config.normalization()
        self.rng = np.random.default_rng(config.seeds()["strategy"])
        self.queues = [[] for _ in range(self.n)]
        self.metrics = Metrics()
        self.t = 0
        self.positions = None
        self.adj = np.zeros((self.n, self.n), dtype=bool)
        self._neighbors = [[] for _ in range(self.n)]
        self._next_packet = 0
        self._snapshot = None
        self.strategy = strategy
        strategy.reset(self)

    # -- views used by strategies ------------------------------------------

    def neighbors(self, v: int) -> list:
        return self._neighbors[v]

    def action_set(self, v: int) -> list:
        """Stay first, then neighbors in ascending id order."""
        return [v] + self._neighbors[v]

    @property
    def timers(self) -> np.ndarray:
        return self.net.timers.timers

    def queue_lengths(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues])

    def feature_snapshot(self, dests) -> FeatureSnapshot:
        dests = sorted(set(int(d) for d in dests))
        if self._snapshot is not None and self._snapshot[0] == (self.t, tuple(dests)):
            return self._snapshot[1]
        qlen = self.queue_lengths()
        col = {d: j for j, d in enumerate(dests)}
        qdest = np.zeros((self.n, len(dests)))
        for v, q in enumerate(self.queues):
            for p in q:
                j = col.get(p.destination)
                if j is not None:
                    qdest[v, j] += 1
        snap = FeatureSnapshot(
            self.norm, dests, qlen, qdest, self.adj, self.net.contacts.one_hop_delay_matrix(),
            self.positions, self.net.locations.xy, self.net.locations.stamp, self.config.area,
        )
        self._snapshot = ((self.t, tuple(dests)), snap)
        return snap

    # -- stepping ------------------------------------------------------------

    def _inject(self, t: int):
        tr = self.traffic
        i = self._next_packet
        while i < len(tr) and tr.times[i] == t:
            src, dst = int(tr.sources[i]), int(tr.destinations[i])
            hist = (src,)[: self.config.n_history]
            p = Packet(i, src, dst, self.config.ttl, t, history=hist, location=src, arrived_at=t)
            self.metrics.created += 1
            if len(self.queues[src]) >= self.config.queue_max:
                self._drop(p)
            else:
                self.queues[src].append(p)
            i += 1
        self._next_packet = i

    def _drop(self, p: Packet):
        self.metrics.dropped.append(p.id)
        self.strategy.on_outcome(self, p, "dropped")

    def step(self):
        t = self.t
        cfg = self.config
        self.positions = self.sampler(t)
        self.adj = adjacency(self.positions, cfg.tx_range)
        rows, cols = np.nonzero(self.adj)
        self._neighbors = [c.tolist() for c in np.split(cols, np.cumsum(np.bincount(rows, minlength=self.n))[:-1])]
        self.net.advance(t, self.positions, self.adj)
        self._inject(t)

        holders = [(p, v) for v, q in enumerate(self.queues) for p in q]
        choices = self.strategy.decide(self, holders) if holders else []
        if len(choices) != len(holders):
            raise ProtocolViolation("strategy returned the wrong number of decisions")

        new_queues = [[] for _ in range(self.n)]
        arrivals = []
        for (p, v), u in zip(holders, choices):
            u = int(u)
            if u == v:
                new_queues[v].append(p)
                continue
            if not (0 <= u < self.n and self.adj[v, u]):
                raise ProtocolViolation(f"packet {p.id} at {v}: next hop {u} not in action set")
            p.hops += 1
            p.ttl -= 1
            p.sender = v
            p.location = u
            p.arrived_at = t + 1
            if cfg.n_history:
                p.history = ((u,) + p.history)[: cfg.n_history]
            self.metrics.transmissions += 1
            if u == p.destination:
                self.metrics.delivered.append((p.id, t + 1 - p.created_at, p.hops))
                self.strategy.on_outcome(self, p, "delivered")
            else:
                arrivals.append(p)

        for p in arrivals:
            if p.ttl <= 0:
                self._drop(p)
            elif len(new_queues[p.location]) >= cfg.queue_max:
                self._drop(p)
            else:
                new_queues[p.location].append(p)
        self.queues = new_queues

        qlen = self.queue_lengths()
        m = self.metrics
        m.queue_sum += float(qlen.mean())
        m.queue_steps += 1
        m.max_queue = max(m.max_queue, int(qlen.max()))
        self.t = t + 1
        if self.t % cfg.round_steps == 0:
            m.rounds.append((self.t, m.mean_delay, m.mean_forwards, m.avg_queue, m.max_queue,
                             m.delivered_count, m.dropped_count))

    def in_flight(self) -> int:
        return sum(len(q) for q in self.queues)

    def run(self, steps: int | None = None) -> Metrics:
        stop = self.config.total_steps if steps is None else min(self.config.total_steps, self.t + steps)
        while self.t < stop:
            self.step()
        return self.metrics


def run(config: SimConfig, strategy, trace: MobilityTrace | None = None, traffic: Traffic | None = None) -> Metrics:
    """Simulate ``config.total_steps`` steps and return the metrics."""
    return World(config, strategy, trace, traffic).run()
