"""Experiment configuration: one flat JSON object covering mobility, traffic,
training, testing and strategy parameters.

Keys are named after the experiment's symbols (``n_train``, ``x_test``,
``ttl_train``, ``t_round`` ...). Unknown keys are rejected so that a typo
never silently falls back to a default.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .rl.config import RLConfig
from .simulator import SimConfig
from .strategies import DirectTransmission, OptimalRouting, SeekAndFocus, SeekFocusParams, UtilityRouting

ALL_STRATEGIES = ("direct", "utility", "seek_focus", "optimal", "deeprl")


@dataclass(frozen=True)
class ExperimentConfig:
    # network and mobility
    n_train: int = 25
    n_test: int = 25
    area_x: float = 500.0
    area_y: float = 500.0
    x_train: float = 50.0
    x_test: float = 50.0
    mean_speed: float = 3.0
    speed_delta: float = 2.0
    # traffic
    queue_max: int = 200
    flow_rate: float | None = None  # None: .001 * N / 25
    flow_duration: float = 5000.0
    packet_rate: float = 0.01
    ttl_train: int = 300
    ttl_test: int = 3000
    # learning
    eps_train: float = 0.1
    eps_test: float = 0.0
    gamma: float = 0.99
    iterations: int = 100
    r_delivery: float = 0.0
    r_stay: float = -1.0
    r_transmit: float = -2.0
    r_drop: float | None = None  # None: r_transmit / (1 - gamma)
    n_history: int = 5
    dropout: float = 0.2
    hidden: tuple = (64, 64)
    learning_rate: float = 0.03
    momentum: float = 0.9
    batch_size: int = 128
    steps_per_iteration: int = 200
    grad_clip: float = 1.0
    readout_ridge: float | None = 0.1
    clip_inputs: bool = True
    # schedule
    t_train: int = 90_000
    t_test: int = 100_000
    t_cooldown: int = 10_000
    t_round: int = 1000
    # baselines
    utility_threshold: float = 10.0
    snf_prob: float = 0.5
    snf_utility_threshold: float = 100.0
    snf_focus_threshold: float = 20.0
    snf_t_focus: int = 10
    snf_t_seek: int = 50
    snf_decoupling: int = 10
    # experiment
    strategies: tuple = ("direct", "utility", "seek_focus", "optimal", "deeprl")
    runs: int = 50
    seed: int = 0
    train_seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        bad = [s for s in self.strategies if s not in ALL_STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {list(ALL_STRATEGIES)}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.t_train < self.t_round:
            raise ConfigError("t_train must cover at least one round")
        # construct the derived configs once so that invalid values fail here
        self.rl_config()
        self.train_sim()
        self.test_sim(self.seed)
        self.snf_params()

    # -- derived configs --------------------------------------------------------

    def rl_config(self) -> RLConfig:
        return RLConfig(
            gamma=self.gamma, eps_train=self.eps_train, eps_test=self.eps_test, r_stay=self.r_stay,
            r_transmit=self.r_transmit, r_delivery=self.r_delivery, r_drop=self.r_drop,
            iterations=self.iterations, round_steps=self.t_round, dropout=self.dropout,
            n_history=self.n_history, hidden=self.hidden, learning_rate=self.learning_rate,
            momentum=self.momentum, batch_size=self.batch_size,
            steps_per_iteration=self.steps_per_iteration, grad_clip=self.grad_clip,
            readout_ridge=self.readout_ridge, clip_inputs=self.clip_inputs,
        )

    def _sim(self, n, x, steps, cooldown, ttl, seed) -> SimConfig:
        return SimConfig(
            n_devices=n, tx_range=x, area=(self.area_x, self.area_y), mean_speed=self.mean_speed,
            speed_delta=self.speed_delta, queue_max=self.queue_max, flow_rate=self.flow_rate,
            flow_duration=self.flow_duration, packet_rate=self.packet_rate, ttl=ttl,
            ttl_train=self.ttl_train, total_steps=steps, cooldown=cooldown, round_steps=self.t_round,
            n_history=self.n_history, seed=seed,
        )

    def train_sim(self) -> SimConfig:
        return self._sim(self.n_train, self.x_train, self.t_train, 0, self.ttl_train, self.train_seed)

    def test_sim(self, seed: int, n_devices: int | None = None, tx_range: float | None = None) -> SimConfig:
        return self._sim(
            self.n_test if n_devices is None else n_devices,
            self.x_test if tx_range is None else tx_range,
            self.t_test, self.t_cooldown, self.ttl_test, seed,
        )

    def snf_params(self) -> SeekFocusParams:
        return SeekFocusParams(
            prob=self.snf_prob, u_th=self.snf_utility_threshold, u_f=self.snf_focus_threshold,
            t_focus=self.snf_t_focus, t_seek=self.snf_t_seek, decoupling=self.snf_decoupling,
        )

    def make_strategy(self, name: str, net=None):
        """A fresh strategy instance; ``deeprl`` needs a trained network."""
        if name == "direct":
            return DirectTransmission()
        if name == "utility":
            return UtilityRouting(u_th=self.utility_threshold)
        if name == "seek_focus":
            return SeekAndFocus(self.snf_params())
        if name == "optimal":
            return OptimalRouting()
        if name == "deeprl":
            if net is None:
                raise ConfigError("the deeprl strategy needs a checkpoint")
            from .rl.agent import DeepRLStrategy
            return DeepRLStrategy(net, self.rl_config())
        raise ConfigError(f"unknown strategy {name!r}")

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON config: {e}") from e
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    def with_(self, **kw) -> "ExperimentConfig":
        unknown = sorted(set(kw) - {f.name for f in fields(self)})
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return replace(self, **kw)

