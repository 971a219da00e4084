"""Turning per-packet decision logs into SMDP experiences.

A run of consecutive stay decisions at one device with an unchanged
neighbor set is a single option: its reward is the discounted sum of the
per-step stay rewards and it spans ``k`` steps. A transmit spans one step.
Delivery and drops end the packet's episode with a terminal experience.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RLConfig


class ExperienceLogError(ValueError):
    """The decision/outcome log is not a valid sequence for some packet."""


@dataclass
class Experience:
    state: np.ndarray
    action: np.ndarray
    reward: float
    k: int
    next_state: np.ndarray | None
    next_actions: np.ndarray
    terminal: bool
    packet_id: int = -1
    start: int = 0


@dataclass
class DecisionEvent:
    packet_id: int
    t: int
    state: np.ndarray
    candidates: np.ndarray  # one action-feature row per candidate, stay first
    chosen: int
    neighbors: tuple

    @property
    def stay(self) -> bool:
        return self.chosen == 0


@dataclass
class OutcomeEvent:
    packet_id: int
    kind: str  # "delivered" | "dropped"


class ExperienceBuffer:
    """Column store of experiences, grown append-only."""

    def __init__(self):
        self._rows = []
        self._cache = None

    def __len__(self):
        return len(self._rows)

    def add(self, exp: Experience):
        if exp.k < 1:
            raise ExperienceLogError("experience must span at least one step")
        if exp.terminal and len(exp.next_actions):
            raise ExperienceLogError("terminal experience with next actions")
        self._rows.append(exp)
        self._cache = None

    def experiences(self) -> list:
        return list(self._rows)

    def arrays(self) -> dict:
        """``S, A, R, K, terminal, NS`` per experience, plus the stacked
        next-action rows ``NA`` with their owning experience index ``owner``."""
        if self._cache is not None and self._cache["n"] == len(self._rows):
            return self._cache
        rows = self._rows
        if not rows:
            raise ValueError("empty experience buffer")
        sd, ad = len(rows[0].state), len(rows[0].action)
        S = np.array([e.state for e in rows], dtype=float)
        A = np.array([e.action for e in rows], dtype=float)
        R = np.array([e.reward for e in rows], dtype=float)
        K = np.array([e.k for e in rows], dtype=float)
        T = np.array([e.terminal for e in rows], dtype=bool)
        NS = np.array([np.zeros(sd) if e.terminal else e.next_state for e in rows], dtype=float)
        blocks = [e.next_actions for e in rows if not e.terminal]
        NA = np.vstack(blocks) if blocks else np.zeros((0, ad))
        owner = np.concatenate(
            [np.full(len(e.next_actions), i) for i, e in enumerate(rows) if not e.terminal]
        ).astype(np.int64) if blocks else np.zeros(0, dtype=np.int64)
        self._cache = dict(n=len(rows), S=S, A=A, R=R, K=K, terminal=T, NS=NS, NA=NA, owner=owner)
        return self._cache


@dataclass
class _Pending:
    t0: int
    state: np.ndarray
    action: np.ndarray
    reward: float
    k: int
    stay: bool
    neighbors: tuple


class ExperienceCollector:
    """Online version of :func:`collect`; feed events as they happen."""

    def __init__(self, config: RLConfig):
        self.config = config
        self.buffer = ExperienceBuffer()
        self._pending = {}
        self._done = set()

    def has_pending(self, packet_id: int) -> bool:
        return packet_id in self._pending

    def decision(self, ev: DecisionEvent):
        cfg = self.config
        pid = ev.packet_id
        if pid in self._done:
            raise ExperienceLogError(f"packet {pid} decided after its episode ended")
        if not 0 <= ev.chosen < len(ev.candidates):
            raise ExperienceLogError(f"packet {pid}: chosen index {ev.chosen} out of range")
        p = self._pending.get(pid)
        if p is not None:
            if ev.t != p.t0 + p.k:
                raise ExperienceLogError(f"packet {pid}: decision at t={ev.t}, expected t={p.t0 + p.k}")
            if p.stay and ev.stay and ev.neighbors == p.neighbors:
                p.reward += cfg.gamma ** p.k * cfg.r_stay
                p.k += 1
                return
            self.buffer.add(Experience(p.state, p.action, p.reward, p.k, ev.state, np.asarray(ev.candidates),
                                       False, pid, p.t0))
        self._pending[pid] = _Pending(
            t0=ev.t,
            state=np.asarray(ev.state),
            action=np.asarray(ev.candidates[ev.chosen]),
            reward=cfg.r_stay if ev.stay else cfg.r_transmit,
            k=1,
            stay=ev.stay,
            neighbors=tuple(ev.neighbors),
        )

    def outcome(self, packet_id: int, kind: str):
        p = self._pending.pop(packet_id, None)
        if p is None:
            raise ExperienceLogError(f"outcome for packet {packet_id} without a pending decision")
        if p.stay:
            raise ExperienceLogError(f"packet {packet_id} ended while staying")
        if kind == "delivered":
            reward = self.config.r_delivery
        elif kind == "dropped":
            reward = self.config.drop_reward
        else:
            raise ExperienceLogError(f"unknown outcome {kind!r}")
        self.buffer.add(Experience(p.state, p.action, reward, 1, None, np.zeros((0, len(p.action))),
                                   True, packet_id, p.t0))
        self._done.add(packet_id)


def collect(events, config: RLConfig) -> list:
    """Experiences from a complete event log. Packets still in flight at the
    end of the log contribute only their closed experiences."""
    col = ExperienceCollector(config)
    for ev in events:
        if isinstance(ev, DecisionEvent):
            col.decision(ev)
        elif isinstance(ev, OutcomeEvent):
            col.outcome(ev.packet_id, ev.kind)
        else:
            raise ExperienceLogError(f"unknown event {ev!r}")
    return col.buffer.experiences()


def discounted_return(experiences, gamma: float) -> float:
    """Return of one packet's episode from its experiences in order."""
    total, elapsed = 0.0, 0
    for e in experiences:
        total += gamma ** elapsed * e.reward
        elapsed += e.k
    return total
