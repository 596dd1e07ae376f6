"""dipsync: deterministic simulator and protocol library for asynchronous,
decentralized, single-hop WSN time synchronization (TSAU, UAF, BAF) with
transient-dip stopping."""

from .clock import NodeClocks, TriggerBits, gateway_time, init_node_clock, resync_period
from .dip import FILTER_TAPS, DipDetector, filter_output, freeze_at_dip
from .engine import SimConfig, Trace, current_backend, run, run_batch, substream
from .errors import (
    ConfigError,
    EpisodeAborted,
    MalformedMessage,
    ProtocolViolation,
    UnreachableNodeError,
)
from .metrics import (
    DipMetrics,
    EnergyParams,
    EnergyReport,
    ErrorSeries,
    dip_metrics,
    error_series,
    summary_table,
    total_energy,
)
from .noise import generate as generate_noise
from .noise import malicious_node
from .protocol import (
    NodeState,
    ProtocolKind,
    SyncMessage,
    decode,
    encode,
    neighborhood_average,
)
from .topology import (
    LayerAssignment,
    LinkRealization,
    Topology,
    connectivity_layers,
    load_topology,
    make_grid,
    make_line,
    sample_links,
)

__version__ = "0.1.0"
