"""Layer stacks: specification, weights, and the per-step forward pass.

A network is an ordered chain of dense spiking, recurrent spiking, and
leaky-readout layers. The forward pass advances every layer by one time
step and keeps only one step of state: membranes, previous spikes, and
the plasticity traces. Nothing here retains history, which is what the
retained-element audit counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .neurons import (
    DEFAULT_SURROGATE,
    LayerState,
    NeuronParams,
    PsiKind,
    leaky_readout_step,
    lif_step,
    psi_eval,
    rlif_step,
)
from .plasticity import StdpParams, TraceBuffer, trace_update

DENSE = "dense-spiking"
RECURRENT = "recurrent-spiking"
READOUT = "leaky-readout"

WS_EPS = 1e-5


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int
    gamma: float = 0.5
    v_th: float = 0.8
    psi: PsiKind = PsiKind.TRIANGULAR
    surrogate: PsiKind = DEFAULT_SURROGATE
    standardize: bool = False

    def __post_init__(self) -> None:
        if self.kind not in (DENSE, RECURRENT, READOUT):
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.width < 1:
            raise ConfigError(f"layer width must be >= 1, got {self.width}")
        if self.kind != READOUT:
            # validates gamma/v_th ranges
            NeuronParams(self.gamma, self.v_th)
        elif not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"readout gamma must be in [0, 1], got {self.gamma}")
        if self.standardize and self.kind != DENSE:
            raise ConfigError("weight standardization applies to dense spiking layers only")

    @property
    def params(self) -> NeuronParams:
        return NeuronParams(self.gamma, self.v_th)

    @property
    def spiking(self) -> bool:
        return self.kind != READOUT


@dataclass(frozen=True)
class NetworkSpec:
    input_width: int
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.input_width < 1:
            raise ConfigError("input_width must be >= 1")
        if not self.layers:
            raise ConfigError("network needs at least one layer")
        if self.layers[-1].kind == RECURRENT:
            raise ConfigError(
                "last layer must be a leaky readout or a dense spiking layer"
            )
        for spec in self.layers[:-1]:
            if spec.kind == READOUT:
                raise ConfigError("leaky readout is only allowed as the last layer")

    @property
    def widths(self) -> list[int]:
        """Neuron counts per population, input first."""
        return [self.input_width] + [s.width for s in self.layers]

    def fan_in(self, index: int) -> int:
        return self.widths[index]


def weight_standardize(w: np.ndarray) -> np.ndarray:
    """Row-wise (per output neuron) zero-mean unit-variance weights.

    w_hat = (w - mean) / sqrt(var + 1e-5), computed over each row's
    fan-in. Constant rows collapse to ~0 through the variance floor.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[1] < 2:
        raise ConfigError("weight standardization needs fan-in >= 2")
    mean = w.mean(axis=1, keepdims=True)
    var = w.var(axis=1, keepdims=True)
    return (w - mean) / np.sqrt(var + WS_EPS)


@dataclass
class LayerWeights:
    w: np.ndarray
    w_rec: np.ndarray | None = None

    def copy(self) -> "LayerWeights":
        return LayerWeights(
            w=self.w.copy(),
            w_rec=None if self.w_rec is None else self.w_rec.copy(),
        )


class Network:
    """A layer stack plus its weights."""

    def __init__(self, spec: NetworkSpec, weights: list[LayerWeights]):
        self.spec = spec
        self.weights = weights

    @classmethod
    def build(cls, spec: NetworkSpec, seed: int) -> "Network":
        """Initialize weights uniformly in +-sqrt(1/fan_in)."""
        rng = np.random.default_rng(seed)
        weights = []
        for idx, layer in enumerate(spec.layers):
            fan_in = spec.fan_in(idx)
            bound = np.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(layer.width, fan_in))
            w_rec = None
            if layer.kind == RECURRENT:
                rec_bound = np.sqrt(1.0 / layer.width)
                w_rec = rng.uniform(-rec_bound, rec_bound, size=(layer.width, layer.width))
            weights.append(LayerWeights(w=w, w_rec=w_rec))
        return cls(spec, weights)

    def effective_w(self, index: int) -> np.ndarray:
        """Forward weights after optional standardization."""
        layer = self.spec.layers[index]
        w = self.weights[index].w
        return weight_standardize(w) if layer.standardize else w

    def copy_weights(self) -> list[LayerWeights]:
        return [lw.copy() for lw in self.weights]


@dataclass
class SpikingLayerSlot:
    """Carried-over state of one spiking layer: O(width + fan-in)."""

    state: LayerState
    traces: TraceBuffer
    tr_rec: np.ndarray | None = None  # filtered delayed outputs, recurrent only

    def arrays(self) -> list[np.ndarray]:
        out = [self.state.u, self.state.y_prev, self.traces.tr_x, self.traces.tr_psi]
        if self.tr_rec is not None:
            out.append(self.tr_rec)
        return out


@dataclass
class NetworkState:
    """Everything retained between consecutive time steps."""

    slots: list[SpikingLayerSlot | None]
    readout_u: np.ndarray | None

    def retained_elements(self) -> int:
        """Count of floats carried across the step boundary."""
        total = 0
        for slot in self.slots:
            if slot is not None:
                total += sum(a.size for a in slot.arrays())
        if self.readout_u is not None:
            total += self.readout_u.size
        return total


@dataclass
class StepOutput:
    """Per-step quantities needed to form an update at that step."""

    inputs: list[np.ndarray] = field(default_factory=list)  # presyn activity per layer
    spikes: list[np.ndarray | None] = field(default_factory=list)
    psi: list[np.ndarray | None] = field(default_factory=list)
    membranes: list[np.ndarray | None] = field(default_factory=list)
    delayed: list[np.ndarray | None] = field(default_factory=list)  # y[t-1], recurrent
    readout: np.ndarray | None = None


def init_state(net: Network, batch: int) -> NetworkState:
    """Zero state at sequence start: membranes, spikes, and traces."""
    slots: list[SpikingLayerSlot | None] = []
    readout_u = None
    for idx, layer in enumerate(net.spec.layers):
        if layer.kind == READOUT:
            slots.append(None)
            readout_u = np.zeros((batch, layer.width))
        else:
            slot = SpikingLayerSlot(
                state=LayerState.zeros(batch, layer.width),
                traces=TraceBuffer.zeros(batch, net.spec.fan_in(idx), layer.width),
            )
            if layer.kind == RECURRENT:
                slot.tr_rec = np.zeros((batch, layer.width))
            slots.append(slot)
    return NetworkState(slots=slots, readout_u=readout_u)


def forward_step(
    net: Network, state: NetworkState, x_t: np.ndarray, stdp: StdpParams
) -> tuple[NetworkState, StepOutput]:
    """Advance the whole stack by one time step.

    Per layer, in order: compute input current from the layer below's
    current-step activity, integrate, fire, evaluate psi on the updated
    membrane, and advance all traces (they include the current step
    before any eligibility is formed). Returns the new state and the
    per-step signals; nothing older than one step survives.
    """
    x = np.asarray(x_t, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.spec.input_width:
        raise ConfigError(
            f"input width {x.shape[1]} does not match network input "
            f"{net.spec.input_width}"
        )

    out = StepOutput()
    new_slots: list[SpikingLayerSlot | None] = []
    new_readout_u = state.readout_u
    activity = x
    for idx, layer in enumerate(net.spec.layers):
        current = activity @ net.effective_w(idx).T
        out.inputs.append(activity)

        if layer.kind == READOUT:
            new_readout_u = leaky_readout_step(state.readout_u, current, layer.gamma)
            new_slots.append(None)
            out.spikes.append(None)
            out.psi.append(None)
            out.membranes.append(new_readout_u)
            out.delayed.append(None)
            out.readout = new_readout_u
            activity = new_readout_u
            continue

        slot = state.slots[idx]
        y_delayed = slot.state.y_prev
        if layer.kind == RECURRENT:
            new_state, spikes = rlif_step(
                slot.state, current, net.weights[idx].w_rec, layer.params
            )
        else:
            new_state, spikes = lif_step(slot.state, current, layer.params)

        psi_now = psi_eval(layer.psi, new_state.u, layer.v_th)
        new_traces = TraceBuffer(
            tr_x=trace_update(slot.traces.tr_x, activity, stdp.lambda_pre),
            tr_psi=trace_update(slot.traces.tr_psi, psi_now, stdp.lambda_post),
        )
        new_slot = SpikingLayerSlot(state=new_state, traces=new_traces)
        if layer.kind == RECURRENT:
            new_slot.tr_rec = trace_update(slot.tr_rec, y_delayed, stdp.lambda_pre)
        new_slots.append(new_slot)

        out.spikes.append(spikes)
        out.psi.append(psi_now)
        out.membranes.append(new_state.u)
        out.delayed.append(y_delayed if layer.kind == RECURRENT else None)
        activity = spikes

    if out.readout is None:
        # spiking last layer: its spike train is the network output
        out.readout = activity
    return NetworkState(slots=new_slots, readout_u=new_readout_u), out
