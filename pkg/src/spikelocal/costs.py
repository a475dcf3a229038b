"""Analytic memory/MAC counters and the runtime retained-state audit.

Counts are in stored elements and multiply-accumulate operations, never
bytes or FLOPs, and element-wise work is excluded from the MAC counts.
The audit functions measure the same quantities from live engine runs
so the formulas can be cross-checked against reality.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError


def _check_widths(layer_widths: list[int]) -> list[int]:
    widths = [int(w) for w in layer_widths]
    if len(widths) < 2:
        raise ConfigError("need at least input and one layer width")
    if any(w < 1 for w in widths):
        raise ConfigError(f"widths must be >= 1, got {widths}")
    return widths


def cost_bptt(layer_widths: list[int], t_total: int) -> tuple[int, int]:
    """Memory elements and MACs of backprop through time.

    layer_widths is [N_0, ..., N_L] with N_0 the input width.
    mem = T * sum_l N_l   (one stored activation per neuron per step)
    mac = 2T * sum_l N_l * N_{l-1}  (forward transport + error transport)
    """
    widths = _check_widths(layer_widths)
    if t_total < 1:
        raise ConfigError(f"t_total must be >= 1, got {t_total}")
    mem = t_total * sum(widths)
    mac = 2 * t_total * sum(a * b for a, b in zip(widths[1:], widths[:-1]))
    return mem, mac


def cost_local(layer_widths: list[int], t_total: int, t_signal: int) -> tuple[int, int]:
    """Memory elements and MACs of the temporally local rule.

    mem = 2 * sum_l N_l  (the two trace variables; no dependence on T)
    mac = 3 * (T - T_l) * sum_l N_l * N_{l-1}  (updates happen on the
    last T - T_l steps; the extra factor covers the non-causal term)
    """
    widths = _check_widths(layer_widths)
    if not 0 <= t_signal <= t_total:
        raise ConfigError(f"need 0 <= t_signal <= t_total, got {t_signal} > {t_total}")
    mem = 2 * sum(widths)
    mac = 3 * (t_total - t_signal) * sum(a * b for a, b in zip(widths[1:], widths[:-1]))
    return mem, mac


def speedups(t_total: int, t_signal: int) -> tuple[float, float]:
    """Memory and MAC improvement ratios over BPTT.

    s_mem = T / 2 and s_mac = 2T / (3 (T - T_l)); the layer widths
    cancel, so these hold for every architecture.
    """
    if t_total < 1:
        raise ConfigError(f"t_total must be >= 1, got {t_total}")
    if not 0 <= t_signal < t_total:
        raise ConfigError(
            "t_signal must satisfy 0 <= t_signal < t_total "
            f"(t_signal == t_total makes the MAC ratio undefined), got {t_signal}"
        )
    s_mem = t_total / 2.0
    s_mac = 2.0 * t_total / (3.0 * (t_total - t_signal))
    return s_mem, s_mac


@dataclass
class CostReport:
    layer_widths: list[int]
    t_total: int
    t_signal: int
    mem_bptt: int
    mem_local: int
    mac_bptt: int
    mac_local: int
    s_mem: float
    s_mac: float
    per_layer: list[dict] = field(default_factory=list)
    measured: dict | None = None

    @classmethod
    def build(
        cls, layer_widths: list[int], t_total: int, t_signal: int
    ) -> "CostReport":
        widths = _check_widths(layer_widths)
        mem_b, mac_b = cost_bptt(widths, t_total)
        mem_l, mac_l = cost_local(widths, t_total, t_signal)
        s_mem, s_mac = speedups(t_total, t_signal)
        per_layer = []
        for l in range(1, len(widths)):
            per_layer.append(
                {
                    "layer": l,
                    "fan_in": widths[l - 1],
                    "width": widths[l],
                    "mem_bptt": t_total * widths[l],
                    "mem_local": 2 * widths[l],
                    "mac_bptt": 2 * t_total * widths[l] * widths[l - 1],
                    "mac_local": 3 * (t_total - t_signal) * widths[l] * widths[l - 1],
                }
            )
        return cls(
            layer_widths=widths,
            t_total=t_total,
            t_signal=t_signal,
            mem_bptt=mem_b,
            mem_local=mem_l,
            mac_bptt=mac_b,
            mac_local=mac_l,
            s_mem=s_mem,
            s_mac=s_mac,
            per_layer=per_layer,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_text(self) -> str:
        """Aligned plain-text table of the same numbers."""
        lines = [
            f"widths: {self.layer_widths}   T={self.t_total}  T_l={self.t_signal}",
            f"{'':14}{'memory':>14}{'MACs':>16}",
            f"{'BPTT':14}{self.mem_bptt:>14}{self.mac_bptt:>16}",
            f"{'local rule':14}{self.mem_local:>14}{self.mac_local:>16}",
            f"{'ratio':14}{self.s_mem:>14.3f}{self.s_mac:>16.3f}",
        ]
        if self.measured:
            lines.append(f"measured: {json.dumps(self.measured)}")
        return "\n".join(lines)


# Complexity classes per method, one layer, big-O. "memory"/"time" are
# symbolic in the neuron count n and sequence length T.
COMPLEXITY_TABLE: list[dict] = [
    {"method": "BPTT", "memory": "Tn", "time": "Tn^2", "temporal_local": False, "non_causal": False},
    {"method": "RTRL", "memory": "n^3", "time": "n^4", "temporal_local": True, "non_causal": False},
    {"method": "e-prop", "memory": "n^2", "time": "n^2", "temporal_local": True, "non_causal": False},
    {"method": "OSTL", "memory": "n^2", "time": "n^2", "temporal_local": True, "non_causal": False},
    {"method": "ETLP", "memory": "n^2", "time": "n^2", "temporal_local": True, "non_causal": False},
    {"method": "OSTTP", "memory": "n^2", "time": "n^2", "temporal_local": True, "non_causal": False},
    {"method": "OTTT", "memory": "n", "time": "n^2", "temporal_local": True, "non_causal": False},
    {"method": "S-TLLR", "memory": "n", "time": "n^2", "temporal_local": True, "non_causal": True},
]


def complexity_table() -> list[dict]:
    """Static comparison of training-rule complexity classes."""
    return [dict(row) for row in COMPLEXITY_TABLE]


def complexity_lookup(method: str) -> dict:
    for row in COMPLEXITY_TABLE:
        if row["method"].lower() == method.lower():
            return dict(row)
    raise KeyError(f"unknown method {method!r}")


def audit_local_run(net, config, t_total: int, input_width: int, seed: int = 0) -> int:
    """Peak retained-element count of a live engine run.

    Drives one training sequence of the given length with random binary
    input and returns the engine's own counter: every float carried
    across a step boundary (membranes, previous spikes, and traces).
    Empty networks (no steps) count zero.
    """
    from .learning import Trainer

    if t_total < 1:
        return 0
    rng = np.random.default_rng(seed)
    xs = (rng.random((1, t_total, input_width)) < 0.2).astype(float)
    out_width = net.spec.layers[-1].width
    if config.loss == "mse":
        target = np.zeros((1, out_width))
    else:
        target = np.array([0])
    trainer = Trainer(net, config, seed=seed)
    _, metrics = trainer.sequence_updates(xs, target)
    return metrics.peak_retained


def audit_bptt_run(net, t_total: int, input_width: int, seed: int = 0) -> int:
    """Tape element count of an oracle forward pass of length t_total."""
    from .bptt import record_tape

    if t_total < 1:
        return 0
    rng = np.random.default_rng(seed)
    xs = (rng.random((t_total, input_width)) < 0.2).astype(float)
    tape = record_tape(net, xs)
    return tape.element_count()
