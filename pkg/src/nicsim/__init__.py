"""Deterministic simulator for NIC-offloaded leaderless replication."""

__version__ = "0.1.0"

from .checker import HistoryEvent, check_history, check_key_linearizable  # noqa: F401
from .experiment import ClusterConfig, Cluster, run_experiment  # noqa: F401
from .workload import WorkloadConfig, generate_trace  # noqa: F401
