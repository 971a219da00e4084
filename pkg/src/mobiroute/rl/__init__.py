"""Learned routing: Q-network, experience collection, fitted-Q training."""

from .agent import DeepRLStrategy
from .config import RLConfig, reward_for
from .driver import TrainingResult, qvalue_grid, training_driver, training_scenario
from .experience import DecisionEvent, Experience, ExperienceBuffer, ExperienceCollector, OutcomeEvent, collect
from .fqi import fitted_q_train
from .network import QNetwork, q_value, select_action

__all__ = [
    "DeepRLStrategy", "RLConfig", "reward_for", "TrainingResult", "qvalue_grid", "training_driver",
    "training_scenario", "DecisionEvent", "Experience", "ExperienceBuffer", "ExperienceCollector",
    "OutcomeEvent", "collect", "fitted_q_train", "QNetwork", "q_value", "select_action",
]
