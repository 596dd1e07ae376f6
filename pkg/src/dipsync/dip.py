"""Transient-dip detection: a length-7 antisymmetric difference filter over a
node's own estimate series, with zero-crossing detection and the freeze rule.

The filter is a smoothed slope estimator.  While a node's estimate descends
toward the rising gateway line the output is negative; once the estimate
starts tracking the gateway from below it turns positive.  The sign change
therefore marks the sample where the estimate passed closest to the gateway
time.  The causal realization delays the noncausal kernel by 3 samples, so on
a fire the dip is attributed to the window's center sample and the frozen
clock takes that sample's value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .errors import ProtocolViolation
from .protocol import NodeState

# Weights applied to the window ordered oldest -> newest.  Antisymmetric,
# zero-sum, zero center tap: length 7 with 6 nonzero taps.
FILTER_TAPS = (-0.2, -0.5, -0.2, 0.0, 0.2, 0.5, 0.2)

WINDOW_LEN = 7
CAUSAL_DELAY = 3
WARMUP_OUTPUTS = 3


def filter_output(window: Sequence[float]) -> float:
    """Apply the difference filter to exactly 7 samples (oldest first).

    Evaluated in paired form 0.2(x6-x0) + 0.5(x5-x1) + 0.2(x4-x2), which is
    exactly zero on constant and even-symmetric windows (the zero-crossing
    rule relies on exact zeros).
    """
    if len(window) != WINDOW_LEN:
        raise ValueError(f"window must hold exactly {WINDOW_LEN} samples")
    return (
        0.2 * (window[6] - window[0])
        + 0.5 * (window[5] - window[1])
        + 0.2 * (window[4] - window[2])
    )


@dataclass
class DipDetector:
    """Streaming zero-crossing detector over one node's estimate samples.

    Feed one (tick, estimate) pair per communication instant via `observe`.
    The first `warmup` outputs only seed the sign comparison; afterwards the
    detector fires once, on a strict sign change or an exact zero, and reports
    the dip at the window's center sample (undoing the 3-sample delay).
    """

    warmup: int = WARMUP_OUTPUTS
    ticks: list = field(default_factory=list)
    values: list = field(default_factory=list)
    last_output: Optional[float] = None
    outputs_seen: int = 0
    fired: bool = False
    dip_tick: Optional[int] = None
    dip_value: Optional[float] = None

    def observe(self, estimate: float, tick: int) -> bool:
        if self.fired:
            raise ProtocolViolation("detector observed after firing")
        self.ticks.append(tick)
        self.values.append(float(estimate))
        if len(self.values) > WINDOW_LEN:
            del self.ticks[0]
            del self.values[0]
        if len(self.values) < WINDOW_LEN:
            return False
        y = filter_output(self.values)
        self.outputs_seen += 1
        crossed = False
        if self.outputs_seen > self.warmup and self.last_output is not None:
            crossed = y == 0.0 or y * self.last_output < 0.0
        self.last_output = y
        if crossed:
            self.fired = True
            self.dip_tick = self.ticks[CAUSAL_DELAY]
            self.dip_value = self.values[CAUSAL_DELAY]
        return crossed


def freeze_at_dip(state: NodeState, detector: DipDetector) -> NodeState:
    """Stop the node at the detected dip: the logical clock takes the buffered
    center-sample estimate and the node drops to stand-by (no more updates or
    requests; it still answers queries with the frozen value)."""
    if not detector.fired:
        raise ProtocolViolation("freeze requested before the detector fired")
    if state.frozen:
        raise ProtocolViolation("node already frozen")
    new = replace(state, frozen=True)
    new.clocks = replace(state.clocks, t_c=detector.dip_value, t_s=detector.dip_value)
    new.triggers = replace(state.triggers, i_s=True, i_u=False, i_t=False)
    return new
