"""Multi-process cluster simulator: partitioned topics, workers and latency injection."""

from .bus import LatencyModel, Topic
from .cluster import Cluster, ClusterConfig, ClusterError, DrainTimeout, inject_latency, shutdown, start_cluster

__all__ = [
    "Cluster",
    "ClusterConfig",
    "ClusterError",
    "DrainTimeout",
    "LatencyModel",
    "Topic",
    "inject_latency",
    "shutdown",
    "start_cluster",
]
