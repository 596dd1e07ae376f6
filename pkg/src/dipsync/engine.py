"""Deterministic tick-driven simulation engine.

One `run` realizes the switched system: per tick it samples the link
realization, delivers the previous tick's broadcasts, applies the protocol
transitions of the activated nodes, lets dip detectors observe (when freezing
is enabled), and records a trace row.  Identical config and seed give a
bit-identical trace.

Randomness is split into three named sub-streams derived from the master
seed: "init-clocks" (label 0) draws the initial node clocks in node-id order,
"links" (label 1) draws one Bernoulli value per edge per tick (tick-major,
canonical edge order), and "noise" (label 2) feeds the malicious node's
colored-noise series.  A sub-stream for label m is
``numpy.random.default_rng(numpy.random.SeedSequence([seed, m]))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import noise as noise_mod
from ._kernels import backend_name, get_kernel
from .dip import WARMUP_OUTPUTS
from .errors import ConfigError, EpisodeAborted
from .protocol import ProtocolKind
from .topology import Topology, connectivity_layers, load_topology, make_grid, make_line

RNG_LABELS = {"init-clocks": 0, "links": 1, "noise": 2}

TRACE_CSV_HEADER = "tick,node,estimate,error,activated,frozen"


def substream(seed: int, label: str) -> np.random.Generator:
    """Named RNG sub-stream; see module docstring for the labels."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), RNG_LABELS[label]]))


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    protocol: ProtocolKind
    delta: float = 0.001
    max_ticks: int = 4000
    link_p: float = 1.0
    malicious: bool = False
    seed: int = 0
    freeze_on_dip: bool = True


@dataclass
class Trace:
    """Per-tick, per-node record of one episode."""

    protocol: ProtocolKind
    delta: float
    gateway: int
    estimates: np.ndarray          # (ticks, nodes) float64
    activated: np.ndarray          # (ticks, nodes) uint8
    frozen: np.ndarray             # (ticks, nodes) uint8
    transmitted: np.ndarray        # (ticks, nodes) uint8: node broadcast this tick
    messages_sent: np.ndarray      # (ticks,) broadcasts emitted per tick
    messages_delivered: np.ndarray  # (ticks,) broadcasts that reached >=1 node
    dip_tick: np.ndarray           # (nodes,) detector's dip tick, -1 if none
    dip_value: np.ndarray          # (nodes,) frozen estimate value
    dip_fire_tick: np.ndarray      # (nodes,) tick the detector fired, -1 if none
    config: SimConfig

    @property
    def n_ticks(self) -> int:
        return self.estimates.shape[0]

    @property
    def node_count(self) -> int:
        return self.estimates.shape[1]

    @property
    def gateway_times(self) -> np.ndarray:
        return self.delta * np.arange(self.n_ticks)

    @property
    def errors(self) -> np.ndarray:
        return np.abs(self.gateway_times[:, None] - self.estimates)

    def to_csv(self, path_or_file) -> None:
        """Write "tick,node,estimate,error,activated,frozen" rows, full float precision."""
        close = False
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            fh = open(path_or_file, "w", encoding="utf-8", newline="\n")
            close = True
        else:
            fh = path_or_file
        try:
            fh.write(TRACE_CSV_HEADER + "\n")
            err = self.errors
            for k in range(self.n_ticks):
                for i in range(self.node_count):
                    fh.write(
                        f"{k},{i},{float(self.estimates[k, i])!r},{float(err[k, i])!r},"
                        f"{int(self.activated[k, i])},{int(self.frozen[k, i])}\n"
                    )
        finally:
            if close:
                fh.close()


def _validate(config: SimConfig) -> int:
    if config.max_ticks < 1:
        raise ConfigError("max_ticks must be >= 1")
    if config.delta <= 0:
        raise ConfigError("delta must be positive")
    if not 0.0 <= config.link_p <= 1.0:
        raise ConfigError(f"link_p {config.link_p} outside [0, 1]")
    if config.topology.node_count < 2:
        raise ConfigError("need at least one non-gateway node")
    if config.topology.gateway != 0:
        raise ConfigError("engine expects the gateway at node id 0")
    return connectivity_layers(config.topology).max_layer  # raises if disconnected


def _csr(topo: Topology):
    indptr = np.zeros(topo.node_count + 1, dtype=np.int64)
    idx = []
    eidx = topo.edge_index()
    slots = []
    for i in range(topo.node_count):
        for j in topo.neighbors[i]:
            idx.append(j)
            slots.append(eidx[(min(i, j), max(i, j))])
        indptr[i + 1] = len(idx)
    return indptr, np.array(idx, dtype=np.int64), np.array(slots, dtype=np.int64)


def run(config: SimConfig) -> Trace:
    """Simulate one episode; deterministic in (config, seed)."""
    max_layer = _validate(config)
    topo = config.topology
    n = topo.node_count
    ticks = config.max_ticks

    init_rng = substream(config.seed, "init-clocks")
    init_est = np.zeros(n)
    init_est[1:] = init_rng.random(n - 1)

    n_edges = len(topo.edges)
    if config.link_p >= 1.0:
        link_live = np.ones((ticks, n_edges), dtype=np.uint8)
    else:
        link_rng = substream(config.seed, "links")
        link_live = (link_rng.random((ticks, n_edges)) < config.link_p).astype(np.uint8)

    if config.malicious:
        mal = noise_mod.malicious_node(topo)
        # the attacker biases its advertised clock by a stealth-scaled colored
        # noise stream: unit-variance process scaled to the tick quantum
        noise = config.delta * noise_mod.generate(
            max(ticks, 2), 2.0, substream(config.seed, "noise"))[:ticks]
    else:
        mal = -1
        noise = np.zeros(ticks)

    indptr, indices, edge_slot = _csr(topo)
    # detectors always observe; freeze_on_dip additionally stops the node
    dip_mode = np.int64(2 if config.freeze_on_dip else 1)
    args = (indptr, indices, edge_slot, link_live, init_est,
            float(config.delta), int(ticks), int(mal), noise,
            dip_mode, int(WARMUP_OUTPUTS))
    name = config.protocol.value
    kernel = get_kernel(name)
    if config.protocol is ProtocolKind.UAF:
        out = kernel(*args, int(max_layer))
    else:
        out = kernel(*args)
    est_tr, act_tr, frz_tr, tx_tr, sent, delivered, dip_tick, dip_val, fire_tick, abort = out
    if abort >= 0:
        raise EpisodeAborted(int(abort), "broadcast time overflows the 4-byte wire field")
    return Trace(
        protocol=config.protocol,
        delta=config.delta,
        gateway=topo.gateway,
        estimates=est_tr,
        activated=act_tr,
        frozen=frz_tr,
        transmitted=tx_tr,
        messages_sent=sent,
        messages_delivered=delivered,
        dip_tick=dip_tick,
        dip_value=dip_val,
        dip_fire_tick=fire_tick,
        config=config,
    )


def run_batch(configs: Sequence[SimConfig]) -> list[Trace]:
    """Sequential batch; results identical to running each config alone."""
    return [run(cfg) for cfg in configs]


# ---------------------------------------------------------------------------
# Config-file ingestion ("key = value" lines mirroring SimConfig field names)
# ---------------------------------------------------------------------------

def topology_from_spec(spec: str) -> Topology:
    """Parse a topology spec string: grid:RxC[:corner], line:N, edgelist:PATH."""
    spec = spec.strip()
    kind, _, rest = spec.partition(":")
    kind = kind.lower()
    if kind == "grid":
        dims, _, corner = rest.partition(":")
        r, _, c = dims.lower().partition("x")
        return make_grid(int(r), int(c), corner or "top-left")
    if kind == "line":
        return make_line(int(rest))
    if kind == "edgelist":
        return load_topology(rest)
    raise ConfigError(f"unknown topology spec {spec!r}")


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def config_from_mapping(fields: dict) -> SimConfig:
    """Build a SimConfig from string key/value pairs (unknown keys rejected)."""
    known = {"topology", "protocol", "delta", "max_ticks", "link_p",
             "malicious", "seed", "freeze_on_dip"}
    unknown = set(fields) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"topology", "protocol"} - set(fields)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")

    def parse_bool(key, default):
        raw = fields.get(key)
        if raw is None:
            return default
        try:
            return _BOOL[str(raw).strip().lower()]
        except KeyError:
            raise ConfigError(f"{key} must be a boolean, got {raw!r}") from None

    try:
        return SimConfig(
            topology=topology_from_spec(str(fields["topology"])),
            protocol=ProtocolKind.parse(str(fields["protocol"])),
            delta=float(fields.get("delta", 0.001)),
            max_ticks=int(fields.get("max_ticks", 4000)),
            link_p=float(fields.get("link_p", 1.0)),
            malicious=parse_bool("malicious", False),
            seed=int(fields.get("seed", 0)),
            freeze_on_dip=parse_bool("freeze_on_dip", True),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_keyvalue_file(path) -> dict:
    """Read "key = value" lines; '#' starts a comment."""
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
    return fields


def current_backend() -> str:
    """Which kernel path runs: "numba" or "pure" (see DIPSYNC_NO_NUMBA)."""
    return backend_name()
