"""Training loop around the simulator, and Q-value grids for inspection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import N_BASE, N_NBR, STATE_DIM, input_names
from ..simulator import SimConfig, World, generate_traffic
from ..mobility import generate_rwp_trace
from .agent import DeepRLStrategy
from .config import RLConfig
from .experience import ExperienceCollector
from .fqi import fitted_q_train
from .network import QNetwork

CURVE_FIELDS = ("round", "timestep", "mean_delay", "mean_forwards", "experiences")


@dataclass
class TrainingResult:
    net: QNetwork
    curves: list = field(default_factory=list)  # rows of CURVE_FIELDS
    metrics: object = None
    experiences: int = 0
    buffer: object = None  # the ExperienceBuffer the last network was fitted on

    @property
    def rounds(self) -> int:
        return len(self.curves)


def training_scenario(config: SimConfig, rl: RLConfig) -> SimConfig:
    """The simulator settings used while collecting training data: packets
    start with ``ttl_train``, traffic runs to the end and the round length
    and history depth follow ``rl``."""
    return config.with_(ttl=config.ttl_train, cooldown=0, round_steps=rl.round_steps, n_history=rl.n_history)


def training_driver(config: SimConfig, rl: RLConfig, seed: int = 0, trace=None, traffic=None,
                    progress=None) -> TrainingResult:
    """Train an agent online-offline: simulate ``config.total_steps`` steps
    with epsilon-greedy behavior and, every ``rl.round_steps`` steps, fit a
    fresh network on everything collected so far.

    The first round has no model to act on and explores uniformly. Returns
    the last network and one curve row per round.
    """
    sim = training_scenario(config, rl)
    if sim.total_steps < rl.round_steps:
        raise ValueError("total_steps must cover at least one training round")
    if trace is None:
        trace = generate_rwp_trace(sim.mobility_config())
    if traffic is None:
        traffic = generate_traffic(sim)
    collector = ExperienceCollector(rl)
    agent = DeepRLStrategy(None, rl, epsilon=rl.eps_train, collector=collector)
    world = World(sim, agent, trace, traffic)
    train_seeds = np.random.SeedSequence([seed, 1]).generate_state(sim.total_steps // rl.round_steps + 1)
    result = TrainingResult(net=None)
    r = 0
    while world.t + rl.round_steps <= sim.total_steps:
        world.run(rl.round_steps)
        net = fitted_q_train(collector.buffer, rl, seed=int(train_seeds[r])) if len(collector.buffer) else None
        if net is not None:
            agent.net = net
            result.net = net
        m = world.metrics
        result.curves.append((r, world.t, m.mean_delay, m.mean_forwards, len(collector.buffer)))
        if progress is not None:
            progress(r, world.t, m)
        r += 1
    if result.net is None:
        raise ValueError("no experiences were collected during training")
    result.net.meta.update({
        "n_history": rl.n_history,
        "input_names": list(input_names(rl.n_history)),
        "rounds": len(result.curves),
        "seed": seed,
        "rl": {k: (list(v) if isinstance(v, tuple) else v) for k, v in rl.__dict__.items()},
    })
    result.metrics = world.metrics
    result.experiences = len(collector.buffer)
    result.buffer = collector.buffer
    return result


def _axis_index(net: QNetwork, axis) -> int:
    if isinstance(axis, str):
        names = net.meta.get("input_names") or list(input_names(net.input_dim - STATE_DIM - N_BASE - N_NBR))
        if axis not in names:
            raise ValueError(f"unknown input feature {axis!r}")
        return names.index(axis)
    i = int(axis)
    if not 0 <= i < net.input_dim:
        raise ValueError(f"input index {i} out of range for {net.input_dim} inputs")
    return i


def qvalue_grid(net: QNetwork, x_axis, y_axis, base=None, x_range=(0.0, 1.0), y_range=(0.0, 1.0),
                resolution: int = 50):
    """Q over a ``resolution`` x ``resolution`` grid of two input coordinates
    with every other input held at ``base`` (default: the training-set mean
    stored in the checkpoint, else 0.5).

    Returns ``(xs, ys, Q)`` with ``Q[i, j]`` the value at ``(xs[j], ys[i])``.
    Ranges must lie within the normalized feature range ``[0, 1]``.
    """
    ix, iy = _axis_index(net, x_axis), _axis_index(net, y_axis)
    if ix == iy:
        raise ValueError("the two grid axes must differ")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    for lo, hi in (x_range, y_range):
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"axis range ({lo}, {hi}) outside [0, 1]")
    if base is None:
        base = net.meta.get("input_mean", [0.5] * net.input_dim)
    base = np.asarray(base, dtype=float)
    if base.shape != (net.input_dim,):
        raise ValueError(f"base point has shape {base.shape}, expected ({net.input_dim},)")
    xs = np.linspace(*x_range, resolution)
    ys = np.linspace(*y_range, resolution)
    X = np.repeat(base[None, :], resolution * resolution, axis=0)
    gx, gy = np.meshgrid(xs, ys)
    X[:, ix] = gx.ravel()
    X[:, iy] = gy.ravel()
    return xs, ys, net.predict(X).reshape(resolution, resolution)
