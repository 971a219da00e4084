"""The learned routing strategy: one Q-network shared by every packet."""

from __future__ import annotations

import numpy as np

from ..features import STATE_DIM, action_dim, ttl_feature
from ..strategies import Strategy
from .config import RLConfig
from .experience import DecisionEvent, ExperienceCollector
from .network import QNetwork


class DeepRLStrategy(Strategy):
    """Epsilon-greedy routing over ``Q(f_s, f_a)``.

    Each timestep all queued packets are scored in one batched forward pass:
    a packet's state row is paired with one action row per candidate in
    ``[v] + Nbr(v)``. With ``net=None`` every decision is uniformly random
    (used before the first training round). When a collector is attached,
    every decision and outcome is logged for training.

    With ``config.clip_inputs`` each input column is clipped to the range
    the network was fitted on (``net.meta["input_min"/"input_max"]``), so a
    denser or larger test network never pushes the network into
    extrapolation.
    """

    name = "deeprl"

    def __init__(self, net: QNetwork | None, config: RLConfig, epsilon: float | None = None,
                 collector: ExperienceCollector | None = None):
        self.net = net
        self.config = config
        self.epsilon = config.eps_test if epsilon is None else epsilon
        self.collector = collector
        self.n_history = config.n_history
        if net is not None and net.input_dim != STATE_DIM + action_dim(self.n_history):
            raise ValueError(
                f"network input {net.input_dim} does not match n_history={self.n_history} "
                f"(expected {STATE_DIM + action_dim(self.n_history)})"
            )

    def rows(self, world, holders):
        """State rows, action rows and the owning holder of each action row."""
        dests = sorted({p.destination for p, _ in holders})
        snap = world.feature_snapshot(dests)
        col = snap.col
        H = self.n_history
        n_h = len(holders)
        hv = np.fromiter((v for _, v in holders), dtype=np.int64, count=n_h)
        hj = np.fromiter((col[p.destination] for p, _ in holders), dtype=np.int64, count=n_h)
        ttl = np.fromiter((p.ttl for p, _ in holders), dtype=float, count=n_h)
        S = np.hstack([ttl_feature(ttl, world.norm)[:, None], snap.device_block[hv, hj]])

        actions = [world.action_set(v) for _, v in holders]
        sizes = np.fromiter((len(a) for a in actions), dtype=np.int64, count=n_h)
        owner = np.repeat(np.arange(n_h), sizes)
        cand = np.fromiter((u for a in actions for u in a), dtype=np.int64, count=int(sizes.sum()))
        A = snap.device_block[cand, hj[owner]]
        if H:
            hist = np.full((n_h, H), -1, dtype=np.int64)
            for i, (p, _) in enumerate(holders):
                hist[i, : len(p.history)] = p.history[:H]
            A = np.hstack([A, (hist[owner] == cand[:, None]).astype(float)])
        return S, A, owner, sizes, actions

    def _inputs(self, X):
        meta = self.net.meta
        if self.config.clip_inputs and "input_min" in meta:
            X = np.clip(X, meta["input_min"], meta["input_max"])
        return X

    def decide(self, world, holders):
        S, A, owner, sizes, actions = self.rows(world, holders)
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        if self.net is not None:
            q = self.net.predict(self._inputs(np.hstack([S[owner], A])))
        rng = world.rng
        eps = 1.0 if self.net is None else self.epsilon
        out = []
        for i, (p, v) in enumerate(holders):
            k = int(sizes[i])
            if eps > 0 and rng.random() < eps:
                c = int(rng.integers(k))
            else:
                s = starts[i]
                c = int(np.argmax(q[s: s + k]))
            out.append(actions[i][c])
            if self.collector is not None:
                s = starts[i]
                self.collector.decision(DecisionEvent(
                    p.id, world.t, S[i], A[s: s + k], c, tuple(actions[i][1:])
                ))
        return out

    def on_outcome(self, world, packet, kind):
        if self.collector is not None and self.collector.has_pending(packet.id):
            self.collector.outcome(packet.id, kind)
