"""Federated proactive handover for mmWave vehicular networks, at desk scale."""

from .channel import ChannelParams, SnrTrace
from .dataset import Dataset, Sample, Scenario, StoragePolicy, WindowConfig
from .federated import FlConfig, RoundLog
from .handover import HandoverMetrics, PolicyKind, PolicySpec
from .mobility import MobilityConfig, Trajectory
from .neural import MlpModel, MlpParams
from .topology import LinkState, RegionTopology, Road, TopologyConfig

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "Dataset",
    "FlConfig",
    "HandoverMetrics",
    "LinkState",
    "MlpModel",
    "MlpParams",
    "MobilityConfig",
    "PolicyKind",
    "PolicySpec",
    "RegionTopology",
    "Road",
    "RoundLog",
    "Sample",
    "Scenario",
    "SnrTrace",
    "StoragePolicy",
    "Trajectory",
    "TopologyConfig",
    "WindowConfig",
    "__version__",
]
