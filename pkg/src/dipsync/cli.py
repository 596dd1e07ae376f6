"""Experiment runner: standard runs from spec files, the link-availability
sweep, protocol comparisons on the canonical scenarios, the energy table, and
a kernel benchmark.

All outputs are UTF-8 CSV.  Every run is deterministic given its spec; the
DIPSYNC_SEED environment variable overrides the spec's seed.
"""

from __future__ import annotations

import argparse
import os
import re
import statistics
import sys
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .engine import (
    SimConfig,
    Trace,
    config_from_mapping,
    current_backend,
    parse_keyvalue_file,
    run,
)
from .errors import ConfigError
from .metrics import (
    PROTOCOL_ENERGY_CONSTANTS,
    QUOTED_TOTALS_UJ,
    DipMetrics,
    dip_metrics,
    summary_table,
    total_energy,
)
from .protocol import ProtocolKind
from .topology import make_grid, make_line

_NAME_RE = re.compile(r"^[A-Za-z0-9._-]+$")

# dip cycles per transmission: a BAF wake-up cycle is one full
# forward+backward round trip (two transmissions)
TX_PER_CYCLE = {ProtocolKind.BAF: 2.0}


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    config: SimConfig
    repeat: int = 1
    output_dir: str = "."


def repeat_seed(base: int, rep: int) -> int:
    """Deterministic per-repeat seed derivation (documented label scheme)."""
    return base if rep == 0 else base * 1000003 + rep


def load_spec(path) -> ExperimentSpec:
    fields = parse_keyvalue_file(path)
    name = fields.pop("name", Path(path).stem)
    if not _NAME_RE.match(name):
        raise ConfigError(f"experiment name {name!r} is not filesystem-safe")
    repeat = int(fields.pop("repeat", 1))
    if repeat < 1:
        raise ConfigError("repeat must be >= 1")
    output_dir = fields.pop("output_dir", ".")
    env_seed = os.environ.get("DIPSYNC_SEED")
    if env_seed is not None:
        fields["seed"] = env_seed
    return ExperimentSpec(
        name=name, config=config_from_mapping(fields), repeat=repeat, output_dir=output_dir
    )


def resolve_spec_path(arg: str) -> str:
    """A path on disk, or the name of a bundled spec (data/<name>.spec)."""
    if os.path.exists(arg):
        return arg
    bundled = resources.files("dipsync").joinpath(f"data/{arg}.spec")
    if bundled.is_file():
        return str(bundled)
    raise ConfigError(f"spec {arg!r}: no such file or bundled spec")


def scenario_config(name: str, protocol: ProtocolKind, seed: int, max_ticks: int) -> SimConfig:
    if name == "grid16":
        return SimConfig(topology=make_grid(4, 4), protocol=protocol, seed=seed,
                         max_ticks=max_ticks, freeze_on_dip=False)
    if name == "line16":
        return SimConfig(topology=make_line(16), protocol=protocol, seed=seed,
                         max_ticks=max_ticks, freeze_on_dip=False)
    if name == "malicious16":
        return SimConfig(topology=make_grid(4, 4), protocol=protocol, seed=seed,
                         max_ticks=max_ticks, malicious=True, freeze_on_dip=True)
    raise ConfigError(f"unknown scenario {name!r} (grid16, line16, malicious16)")


def _write_manifest(path, spec: ExperimentSpec, seeds) -> None:
    cfg = spec.config
    lines = [
        f"name = {spec.name}",
        f"protocol = {cfg.protocol.value}",
        f"nodes = {cfg.topology.node_count}",
        f"edges = {len(cfg.topology.edges)}",
        f"gateway = {cfg.topology.gateway}",
        f"delta = {cfg.delta!r}",
        f"max_ticks = {cfg.max_ticks}",
        f"link_p = {cfg.link_p!r}",
        f"malicious = {str(cfg.malicious).lower()}",
        f"seed = {cfg.seed}",
        f"freeze_on_dip = {str(cfg.freeze_on_dip).lower()}",
        f"repeat = {spec.repeat}",
        f"repeat_seeds = {','.join(str(s) for s in seeds)}",
        f"kernel_backend = {current_backend()}",
        f"dipsync_version = {__version__}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _metrics_csv(path, results: list[tuple[int, DipMetrics]]) -> None:
    lines = ["metric,node,value"]
    for seed, dm in results:
        tag = f"seed{seed}:" if len(results) > 1 else ""
        for idx, node in enumerate(range(1, len(dm.e_dip) + 1)):
            lines.append(f"{tag}k_dip,{node},{dm.k_dip[idx]!r}")
            lines.append(f"{tag}e_dip,{node},{dm.e_dip[idx]!r}")
        lines.append(f"{tag}E_dip_min,,{dm.e_dip_min!r}")
        lines.append(f"{tag}k_dip_min,,{dm.k_dip_min!r}")
        lines.append(f"{tag}V_k_dip,,{dm.v_k_dip!r}")
    if len(results) > 1:
        for field in ("e_dip_min", "k_dip_min", "v_k_dip"):
            vals = sorted(getattr(dm, field) for _, dm in results)
            med = statistics.median(vals)
            lines.append(f"median_{field},,{med!r}")
            lines.append(f"min_{field},,{vals[0]!r}")
            lines.append(f"max_{field},,{vals[-1]!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def dip_cycles(trace: Trace) -> DipMetrics:
    """Dip metrics with k_dip rescaled to the protocol's wake-up cycles."""
    dm = dip_metrics(trace)
    per_cycle = TX_PER_CYCLE.get(trace.protocol, 1.0)
    if per_cycle == 1.0:
        return dm
    k = dm.k_dip / per_cycle
    mean_k = float(k.mean())
    return DipMetrics(
        k_dip=k, k_dip_tick=dm.k_dip_tick, e_dip=dm.e_dip,
        e_dip_min=dm.e_dip_min, k_dip_min=mean_k,
        v_k_dip=float(((k - mean_k) ** 2).mean()),
    )


def cmd_run(args) -> int:
    spec = load_spec(resolve_spec_path(args.spec))
    out_dir = Path(args.out or spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = [repeat_seed(spec.config.seed, r) for r in range(spec.repeat)]
    results = []
    for rep, seed in enumerate(seeds):
        cfg = spec.config if seed == spec.config.seed else SimConfig(
            **{**spec.config.__dict__, "seed": seed})
        trace = run(cfg)
        name = "trace.csv" if spec.repeat == 1 else f"trace_r{rep}.csv"
        trace.to_csv(out_dir / name)
        results.append((seed, dip_cycles(trace)))
    _metrics_csv(out_dir / "metrics.csv", results)
    _write_manifest(out_dir / "manifest.txt", spec, seeds)
    print(f"wrote {out_dir}/trace*.csv, metrics.csv, manifest.txt")
    return 0


def cmd_sweep_links(args) -> int:
    if not args.p:
        print("error: empty probability list", file=sys.stderr)
        return 2
    for p in args.p:
        if not 0.0 <= p <= 1.0:
            print(f"error: probability {p} outside [0, 1]", file=sys.stderr)
            return 2
    protocol = ProtocolKind.parse(args.protocol)
    seed = int(os.environ.get("DIPSYNC_SEED", args.seed))
    topo = make_grid(4, 4)
    lines = ["p,median_E_dip_min,min_E_dip_min,max_E_dip_min,median_k_dip_min,dip_persists"]
    for p in args.p:
        e_vals, k_vals = [], []
        per_node = []
        for r in range(args.repeats):
            cfg = SimConfig(topology=topo, protocol=protocol, link_p=p,
                            seed=repeat_seed(seed, r), max_ticks=args.ticks,
                            freeze_on_dip=False)
            dm = dip_cycles(run(cfg))
            e_vals.append(dm.e_dip_min)
            k_vals.append(dm.k_dip_min)
            per_node.append(dm.e_dip)
        med_node = np.median(np.array(per_node), axis=0)
        persists = bool((med_node >= 1e-5).all() and (med_node <= 1e-2).all())
        e_vals.sort()
        lines.append(
            f"{p!r},{statistics.median(e_vals)!r},{e_vals[0]!r},{e_vals[-1]!r},"
            f"{statistics.median(k_vals)!r},{str(persists).lower()}"
        )
    out = "\n".join(lines) + "\n"
    sys.stdout.write(out)
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    return 0


_ORDER_CHECKS = {
    "grid16": [
        ("uaf_lowest_variance", lambda m: m["uaf"].v_k_dip <= min(v.v_k_dip for v in m.values())),
        ("baf_lowest_error", lambda m: m["baf"].e_dip_min <= min(v.e_dip_min for v in m.values())),
    ],
    "malicious16": [
        ("baf_variance_dominates",
         lambda m: m["baf"].v_k_dip > 10 * max(m["tsau"].v_k_dip, m["uaf"].v_k_dip)),
        ("uaf_slowest",
         lambda m: m["uaf"].k_dip_min > max(m["tsau"].k_dip_min, m["baf"].k_dip_min)),
    ],
}


def cmd_compare(args) -> int:
    protocols = [ProtocolKind.parse(p) for p in args.protocols]
    seed = int(os.environ.get("DIPSYNC_SEED", args.seed))
    results = {}
    for proto in protocols:
        cfg = scenario_config(args.scenario, proto, seed, args.ticks)
        results[proto.value] = dip_cycles(run(cfg))
    sys.stdout.write(summary_table(list(results.items())))
    if len(results) == len(ProtocolKind) - 1:  # all three protocols present
        for name, check in _ORDER_CHECKS.get(args.scenario, []):
            verdict = "PASS" if check(results) else "FAIL"
            print(f"check {name}: {verdict}")
    return 0


def cmd_energy(args) -> int:
    lines = ["protocol,cpu_ticks,payload_bytes,packet_bytes,cpu_uJ,tx_uJ,rx_uJ,"
             "total_uJ,quoted_total_uJ_unverified"]
    for name, (cpu_ticks, payload) in PROTOCOL_ENERGY_CONSTANTS.items():
        rep = total_energy(cpu_ticks, payload)
        quoted = QUOTED_TOTALS_UJ[name]
        lines.append(
            f"{name},{cpu_ticks},{payload},{payload + 18},"
            f"{rep.cpu_energy * 1e6!r},{rep.tx_energy * 1e6!r},{rep.rx_energy * 1e6!r},"
            f"{rep.total * 1e6!r},{quoted!r}"
        )
    out = "\n".join(lines) + "\n"
    sys.stdout.write(out)
    if args.out:
        Path(args.out).write_text(out, encoding="utf-8")
    return 0


def _bench_workload(ticks: int) -> float:
    topo = make_grid(4, 4)
    acc = 0.0
    for proto in (ProtocolKind.TSAU, ProtocolKind.UAF, ProtocolKind.BAF):
        tr = run(SimConfig(topology=topo, protocol=proto, max_ticks=ticks, seed=7))
        acc += float(tr.estimates.sum())
    return acc


def cmd_benchmark(args) -> int:
    """Time the tick kernels on both backends and check they agree bit-for-bit."""
    rows = ["backend,median_seconds,checksum"]
    results = {}
    for backend, env_val in (("numba", ""), ("pure", "1")):
        os.environ["DIPSYNC_NO_NUMBA"] = env_val
        try:
            if current_backend() != backend:
                print(f"note: backend {backend} unavailable, skipping")
                continue
            _bench_workload(64)  # warm the JIT so compile time is not measured
            times = []
            checksum = 0.0
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                checksum = _bench_workload(args.ticks)
                times.append(time.perf_counter() - t0)
            results[backend] = (statistics.median(times), checksum)
            rows.append(f"{backend},{statistics.median(times)!r},{checksum!r}")
        finally:
            os.environ.pop("DIPSYNC_NO_NUMBA", None)
    sys.stdout.write("\n".join(rows) + "\n")
    if len(results) == 2:
        same = results["numba"][1] == results["pure"][1]
        speedup = results["pure"][0] / results["numba"][0]
        print(f"backends_agree: {same}")
        print(f"speedup: {speedup:.1f}x")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dipsync", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec file")
    p_run.add_argument("spec", help="path to a spec file or a bundled spec name")
    p_run.add_argument("--out", help="output directory (overrides the spec)")
    p_run.set_defaults(func=cmd_run)

    p_sw = sub.add_parser("sweep-links", help="link-availability sweep on the 16-node grid")
    p_sw.add_argument("--protocol", required=True)
    p_sw.add_argument("--p", type=float, nargs="+", default=[])
    p_sw.add_argument("--seed", type=int, default=1)
    p_sw.add_argument("--repeats", type=int, default=11)
    p_sw.add_argument("--ticks", type=int, default=16000)
    p_sw.add_argument("--out")
    p_sw.set_defaults(func=cmd_sweep_links)

    p_cmp = sub.add_parser("compare", help="compare protocols on a canonical scenario")
    p_cmp.add_argument("--scenario", required=True, choices=["grid16", "line16", "malicious16"])
    p_cmp.add_argument("--protocols", nargs="+", default=["tsau", "uaf", "baf"])
    p_cmp.add_argument("--seed", type=int, default=1)
    p_cmp.add_argument("--ticks", type=int, default=4000)
    p_cmp.set_defaults(func=cmd_compare)

    p_en = sub.add_parser("energy", help="per-message energy table")
    p_en.add_argument("--out")
    p_en.set_defaults(func=cmd_energy)

    p_b = sub.add_parser("benchmark", help="time the numba and pure kernel backends")
    p_b.add_argument("--ticks", type=int, default=4000)
    p_b.add_argument("--repeats", type=int, default=5)
    p_b.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
