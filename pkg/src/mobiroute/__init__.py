"""Single-copy routing in mobile delay-tolerant networks: mobility traces,
contact statistics, a discrete-time simulator, classical routing baselines
and a learned Q-network router."""

from .errors import (
    ConfigError, ContactConsistencyError, FeatureError, MobirouteError, OutOfRangeError,
    ProtocolViolation, TraceParseError,
)
from .mobility import MobilityConfig, MobilityTrace, generate_rwp_trace, parse_trace, serialize_trace
from .simulator import Metrics, SimConfig, World, aggregate, generate_traffic, run
from .strategies import STRATEGIES, optimal_oracle

__version__ = "0.1.0"
