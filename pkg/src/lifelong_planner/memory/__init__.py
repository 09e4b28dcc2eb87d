"""Scene-embedding memory with incremental density clustering and k-NN retrieval."""
from .bank import ClusterState, MemoryBank, MemoryEntry, MemoryFormatError, sample_synthetic
from .dbscan import (
    NOISE,
    DbscanParams,
    IncrementalDBSCAN,
    assign_borders,
    cluster_offline,
    cosine_distances_to,
    pairwise_cosine,
)
