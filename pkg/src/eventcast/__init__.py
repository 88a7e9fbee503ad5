"""Event-conditionally unbiased sequential prediction.

A library for producing high-dimensional predictions that are unbiased
conditional on arbitrary collections of events, together with downstream
applications: swap/groupwise regret for experts, subsequence regret in
online combinatorial optimization, causal-deviation regret in extensive-form
games, and score-free prediction sets with transparent coverage.
"""

__version__ = "0.1.0"

from .core import (
    AlwaysOnEvent,
    ArgmaxRegion,
    BestResponseEvent,
    ConvexRegion,
    Event,
    EventCollection,
    FunctionEvent,
    GroupEvent,
    LinearUtility,
    MixedPrediction,
    PredictionSpace,
    ProductEvent,
    Transcript,
    best_response,
    best_response_events,
    bias_report,
)
from .predictor import Predictor, PredictorConfig

__all__ = [
    "AlwaysOnEvent",
    "ArgmaxRegion",
    "BestResponseEvent",
    "ConvexRegion",
    "Event",
    "EventCollection",
    "FunctionEvent",
    "GroupEvent",
    "LinearUtility",
    "MixedPrediction",
    "PredictionSpace",
    "Predictor",
    "PredictorConfig",
    "ProductEvent",
    "Transcript",
    "best_response",
    "best_response_events",
    "bias_report",
]
