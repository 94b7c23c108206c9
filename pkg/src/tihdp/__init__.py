"""Hierarchical multi-robot cooperative transport with dynamic task priorities."""
from .obs import ObsConfig
from .priority import NoRemainingTask, PriorityLayer, PriorityVector, select_target, update_priorities
from .trainer import PpoConfig, TrainSetup, train
from .world import ScenarioConfig, WeightClass, WorldState, reset, step

__all__ = [
    "NoRemainingTask", "ObsConfig", "PpoConfig", "PriorityLayer", "PriorityVector", "ScenarioConfig",
    "TrainSetup", "WeightClass", "WorldState", "reset", "select_target", "step", "train", "update_priorities",
]
__version__ = "0.1.0"
