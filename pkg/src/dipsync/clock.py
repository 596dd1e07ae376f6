"""Gateway reference clock and per-node time bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class NodeClocks:
    """A node's clock variables: hardware start value, logical clock, soft estimate."""

    tau0: float
    t_c: float
    t_s: float = 0.0


@dataclass
class TriggerBits:
    """Per-node action triggers: request, update, dip-stage, reply."""

    i_t: bool = True
    i_u: bool = True
    i_s: bool = False
    i_r: bool = False


def gateway_time(k: int, delta: float) -> float:
    """Gateway time at tick k, computed as the product delta*k (no running sum)."""
    if k < 0:
        raise ValueError("tick must be non-negative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return delta * k


def init_node_clock(rng: np.random.Generator) -> NodeClocks:
    """Draw the initial hardware clock uniform on [0, 1); the soft estimate starts at 0."""
    tau0 = float(rng.random())
    return NodeClocks(tau0=tau0, t_c=tau0, t_s=0.0)


def resync_period(drift_ppm: float, accuracy: float) -> float:
    """Seconds between resynchronizations for a clock drifting `drift_ppm` parts
    per million when the application needs `accuracy` seconds of precision."""
    if drift_ppm <= 0:
        raise ValueError("drift_ppm must be positive")
    if accuracy <= 0:
        raise ValueError("accuracy must be positive")
    # delta / (x * 1e-6) computed as delta * 1e6 / x so that e.g.
    # (100 ppm, 1 ms) gives exactly 10 s
    return accuracy * 1e6 / drift_ppm
