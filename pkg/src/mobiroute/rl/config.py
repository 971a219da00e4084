from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import ConfigError

TRANSITIONS = ("stay", "transmit", "delivery", "drop")


@dataclass(frozen=True)
class RLConfig:
    """Reward schedule, exploration and fitted-Q training settings.

    ``r_drop`` defaults to ``r_transmit / (1 - gamma)``, the value of paying
    ``r_transmit`` forever; an explicit value must agree with that formula.
    The optimizer fields (``hidden`` through ``readout_ridge``) are this
    package's choices for the otherwise unspecified network training.
    """

    gamma: float = 0.99
    eps_train: float = 0.1
    eps_test: float = 0.0
    r_stay: float = -1.0
    r_transmit: float = -2.0
    r_delivery: float = 0.0
    r_drop: float | None = None
    iterations: int = 100
    round_steps: int = 1000
    dropout: float = 0.2
    n_history: int = 5
    hidden: tuple = (64, 64)
    learning_rate: float = 0.03
    momentum: float = 0.9
    batch_size: int = 128
    steps_per_iteration: int = 200
    grad_clip: float = 1.0
    readout_ridge: float | None = 0.1  # None: keep the SGD read-out
    clip_inputs: bool = True  # clip decision inputs to the fitted range

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        for name in ("eps_train", "eps_test"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.r_drop is not None and abs(self.r_drop - self.r_transmit / (1.0 - self.gamma)) > 1e-9 * max(1.0, abs(self.r_drop)):
            raise ConfigError("r_drop must equal r_transmit / (1 - gamma)")
        if self.iterations < 1 or self.round_steps < 1 or self.batch_size < 1 or self.steps_per_iteration < 1:
            raise ConfigError("iterations, round_steps, batch_size and steps_per_iteration must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.readout_ridge is not None and self.readout_ridge < 0:
            raise ConfigError("readout_ridge must be >= 0")
        if self.n_history < 0:
            raise ConfigError("n_history must be >= 0")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def drop_reward(self) -> float:
        return self.r_transmit / (1.0 - self.gamma)

    @property
    def value_scale(self) -> float:
        """Magnitude bound of any discounted return under these rewards."""
        return max(abs(self.r_stay), abs(self.r_transmit), abs(self.r_delivery), 1e-12) / (1.0 - self.gamma)

    def with_(self, **kw) -> "RLConfig":
        return replace(self, **kw)


def reward_for(kind: str, config: RLConfig) -> float:
    if kind == "stay":
        return config.r_stay
    if kind == "transmit":
        return config.r_transmit
    if kind == "delivery":
        return config.r_delivery
    if kind == "drop":
        return config.drop_reward
    raise ValueError(f"unknown transition kind {kind!r}")
