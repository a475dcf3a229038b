"""Temporally local three-factor training over a layer stack.

Each time step runs the forward pass, and, once the learning signal is
active (the last T - T_l steps), converts the instantaneous top-layer
error into per-layer signals (spatial backprop or fixed random
feedback) and accumulates weight updates: the top layer pairs its
signal with its input activity, hidden layers pair theirs with the
instantaneous synapse eligibility. No error is propagated across time
steps; the traces carry all temporal information.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .network import (
    READOUT,
    RECURRENT,
    Network,
    NetworkState,
    StepOutput,
    forward_step,
    init_state,
)
from .neurons import surrogate_deriv
from .plasticity import StdpParams

BP = "bp"
DFA = "dfa"
CROSS_ENTROPY = "cross-entropy"
MSE = "mse"


@dataclass(frozen=True)
class LearningConfig:
    mode: str = BP
    t_total: int = 10
    t_signal: int = 0
    rho: float = 1e-3
    stdp: StdpParams = field(default_factory=StdpParams)
    loss: str = CROSS_ENTROPY
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.mode not in (BP, DFA):
            raise ConfigError(f"mode must be '{BP}' or '{DFA}', got {self.mode!r}")
        if self.loss not in (CROSS_ENTROPY, MSE):
            raise ConfigError(f"unknown loss kind {self.loss!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= self.t_signal <= self.t_total:
            raise ConfigError(
                f"need 0 <= t_signal <= t_total, got {self.t_signal} > {self.t_total}"
            )
        if not self.rho > 0:
            raise ConfigError(f"learning rate must be positive, got {self.rho}")
        if self.t_signal == self.t_total:
            warnings.warn(
                "t_signal == t_total: the learning signal is never active, "
                "so training performs zero weight updates",
                stacklevel=2,
            )

    @property
    def updates_per_sequence(self) -> int:
        return self.t_total - self.t_signal


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_delta_L(
    readout: np.ndarray, target: np.ndarray, loss_kind: str
) -> tuple[float, np.ndarray]:
    """Instantaneous loss and its gradient at the top layer.

    cross-entropy: target holds class indices; returns softmax(readout)
    minus the one-hot target. mse: target matches the readout shape;
    loss 1/2 ||readout - target||^2 with gradient readout - target.
    The scalar loss is the batch mean; the gradient is per sample.
    """
    readout = np.atleast_2d(np.asarray(readout, dtype=float))
    batch, width = readout.shape
    if loss_kind == CROSS_ENTROPY:
        target = np.atleast_1d(np.asarray(target))
        if target.shape != (batch,):
            raise ConfigError(f"expected {batch} class indices, got shape {target.shape}")
        idx = target.astype(int)
        if np.any(idx < 0) or np.any(idx >= width):
            raise ConfigError(f"class index out of range [0, {width})")
        probs = softmax(readout)
        loss = float(-np.log(probs[np.arange(batch), idx] + 1e-300).mean())
        delta = probs.copy()
        delta[np.arange(batch), idx] -= 1.0
        return loss, delta
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if target.shape != readout.shape:
        raise ConfigError(
            f"target shape {target.shape} does not match readout {readout.shape}"
        )
    diff = readout - target
    loss = float(0.5 * (diff**2).sum(axis=1).mean())
    return loss, diff


def backprop_signal(
    net: Network, delta_L: np.ndarray, membranes: list[np.ndarray | None]
) -> list[np.ndarray | None]:
    """Spatial-only backprop of the top signal within one time step.

    The top interface passes through ungated; below that, each layer's
    surrogate derivative gates the signal before it is transported
    through the next weight matrix down. Returns one signal per layer
    (None at the top, which uses delta_L directly).
    """
    layers = net.spec.layers
    deltas: list[np.ndarray | None] = [None] * len(layers)
    gated = np.atleast_2d(np.asarray(delta_L, dtype=float))
    for idx in range(len(layers) - 2, -1, -1):
        delta = gated @ net.effective_w(idx + 1)
        deltas[idx] = delta
        layer = layers[idx]
        gated = delta * surrogate_deriv(layer.surrogate, membranes[idx], layer.v_th)
    return deltas


class FeedbackMatrices:
    """Fixed random feedback from the output error to each hidden layer."""

    def __init__(self, matrices: dict[int, np.ndarray], seed: int):
        self.matrices = matrices
        self.seed = seed
        for b in matrices.values():
            b.setflags(write=False)

    @classmethod
    def build(cls, net: Network, seed: int) -> "FeedbackMatrices":
        rng = np.random.default_rng(seed)
        out_width = net.spec.layers[-1].width
        bound = np.sqrt(1.0 / out_width)
        matrices = {}
        for idx, layer in enumerate(net.spec.layers[:-1]):
            matrices[idx] = rng.uniform(-bound, bound, size=(layer.width, out_width))
        return cls(matrices, seed)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for idx in sorted(self.matrices):
            h.update(self.matrices[idx].tobytes())
        return h.hexdigest()


def dfa_signal(
    feedback: FeedbackMatrices, delta_L: np.ndarray, n_layers: int
) -> list[np.ndarray | None]:
    """Route the top error to every hidden layer through fixed feedback."""
    delta_L = np.atleast_2d(np.asarray(delta_L, dtype=float))
    deltas: list[np.ndarray | None] = [None] * n_layers
    for idx, b in feedback.matrices.items():
        if b.shape[1] != delta_L.shape[1]:
            raise ConfigError(
                f"feedback matrix for layer {idx} expects error width "
                f"{b.shape[1]}, got {delta_L.shape[1]}"
            )
        deltas[idx] = delta_L @ b.T
    return deltas


def accumulate_step_updates(
    net: Network,
    state: NetworkState,
    out: StepOutput,
    deltas: list[np.ndarray | None],
    delta_L: np.ndarray,
    stdp: StdpParams,
    acc: "list[LayerUpdate]",
) -> None:
    """Add this step's contribution to the per-layer update buffers.

    Top layer: signal times input activity. Hidden layers: signal times
    the instantaneous eligibility, expanded into its two rank-1 parts so
    no synapse-shaped temporary outlives the step. Batch elements are
    summed by the matrix products.
    """
    top = len(net.spec.layers) - 1
    acc[top].w += delta_L.T @ out.inputs[top]
    for idx, layer in enumerate(net.spec.layers[:top]):
        delta = deltas[idx]
        if delta is None:
            continue
        slot = state.slots[idx]
        psi_now = out.psi[idx]
        mod_causal = stdp.alpha_pre * (delta * psi_now)
        mod_noncausal = stdp.alpha_post * (delta * (slot.traces.tr_psi - psi_now))
        acc[idx].w += mod_causal.T @ slot.traces.tr_x
        acc[idx].w += mod_noncausal.T @ out.inputs[idx]
        if layer.kind == RECURRENT:
            acc[idx].w_rec += mod_causal.T @ slot.tr_rec
            acc[idx].w_rec += mod_noncausal.T @ out.delayed[idx]


@dataclass
class LayerUpdate:
    w: np.ndarray
    w_rec: np.ndarray | None = None


def zero_updates(net: Network) -> list[LayerUpdate]:
    ups = []
    for lw in net.weights:
        ups.append(
            LayerUpdate(
                w=np.zeros_like(lw.w),
                w_rec=None if lw.w_rec is None else np.zeros_like(lw.w_rec),
            )
        )
    return ups


@dataclass
class AdamSlot:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def optimizer_step(
    w: np.ndarray,
    dw: np.ndarray,
    state: AdamSlot | None,
    config: LearningConfig,
) -> tuple[np.ndarray, AdamSlot | None]:
    """Apply one accumulated update.

    dw is already a descent direction, so sgd is w + rho * dw and adam
    follows the first/second-moment update with bias correction, also
    stepping along +dw.
    """
    if config.optimizer == "sgd":
        return w + config.rho * dw, state
    if state is None:
        state = AdamSlot(m=np.zeros_like(w), v=np.zeros_like(w))
    state.t += 1
    state.m = config.beta1 * state.m + (1 - config.beta1) * dw
    state.v = config.beta2 * state.v + (1 - config.beta2) * dw**2
    m_hat = state.m / (1 - config.beta1**state.t)
    v_hat = state.v / (1 - config.beta2**state.t)
    return w + config.rho * m_hat / (np.sqrt(v_hat) + config.adam_eps), state


@dataclass
class SequenceMetrics:
    loss: float
    accuracy: float
    updates: int
    peak_retained: int
    correct: int = 0
    count: int = 0


class Trainer:
    """Owns a network's weights, optimizer state, and feedback matrices."""

    def __init__(self, net: Network, config: LearningConfig, seed: int = 0):
        self.net = net
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.feedback = (
            FeedbackMatrices.build(net, seed) if config.mode == DFA else None
        )
        self._adam: dict[tuple[int, str], AdamSlot | None] = {}

    def _signals(
        self, delta_L: np.ndarray, out: StepOutput
    ) -> list[np.ndarray | None]:
        if self.config.mode == BP:
            return backprop_signal(self.net, delta_L, out.membranes)
        return dfa_signal(self.feedback, delta_L, len(self.net.spec.layers))

    def sequence_updates(
        self, xs: np.ndarray, targets: np.ndarray, learn: bool = True
    ) -> tuple[list[LayerUpdate], SequenceMetrics]:
        """Run one sequence (possibly batched) and accumulate updates.

        xs is (batch, T, input_width) or (T, input_width). Updates are
        accumulated on the last T - t_signal steps and returned without
        being applied. The returned metrics include the number of
        accumulation events and the peak state retained between steps.
        With learn=False only the loss/prediction bookkeeping runs.
        """
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 2:
            xs = xs[None, :, :]
        batch, t_total, _ = xs.shape
        if t_total != self.config.t_total:
            raise ConfigError(
                f"sample has {t_total} steps, config expects {self.config.t_total}"
            )

        cfg = self.config
        state = init_state(self.net, batch)
        acc = zero_updates(self.net)
        score = np.zeros((batch, self.net.spec.layers[-1].width))
        fallback_score = np.zeros_like(score)
        losses = []
        updates = 0
        peak_retained = state.retained_elements()

        for t in range(t_total):
            state, out = forward_step(self.net, state, xs[:, t, :], cfg.stdp)
            peak_retained = max(peak_retained, state.retained_elements())
            fallback_score += out.readout
            if t < cfg.t_signal:
                continue
            loss, delta_raw = loss_and_delta_L(out.readout, targets, cfg.loss)
            losses.append(loss)
            score += out.readout
            if not learn:
                continue
            delta_L = -delta_raw  # descend the loss
            deltas = self._signals(delta_L, out)
            accumulate_step_updates(
                self.net, state, out, deltas, delta_L, cfg.stdp, acc
            )
            updates += 1

        if updates == 0:
            score = fallback_score
        if cfg.loss == CROSS_ENTROPY:
            pred = score.argmax(axis=1)
            correct = int((pred == np.asarray(targets).astype(int)).sum())
            accuracy = correct / batch
        else:
            correct = 0
            accuracy = float("nan")
        metrics = SequenceMetrics(
            loss=float(np.mean(losses)) if losses else float("nan"),
            accuracy=accuracy,
            updates=updates,
            peak_retained=peak_retained,
            correct=correct,
            count=batch,
        )
        return acc, metrics

    def apply_updates(self, acc: list[LayerUpdate]) -> None:
        for idx, (lw, up) in enumerate(zip(self.net.weights, acc)):
            lw.w, self._adam[(idx, "w")] = optimizer_step(
                lw.w, up.w, self._adam.get((idx, "w")), self.config
            )
            if lw.w_rec is not None:
                lw.w_rec, self._adam[(idx, "rec")] = optimizer_step(
                    lw.w_rec, up.w_rec, self._adam.get((idx, "rec")), self.config
                )

    def train_sequence(self, xs: np.ndarray, targets: np.ndarray) -> SequenceMetrics:
        """Accumulate over one sequence/batch and apply the optimizer."""
        acc, metrics = self.sequence_updates(xs, targets)
        self.apply_updates(acc)
        return metrics

    def run_epoch(
        self, xs: np.ndarray, targets: np.ndarray, batch_size: int
    ) -> SequenceMetrics:
        """One pass over the training set in shuffled mini-batches."""
        n = xs.shape[0]
        order = self.rng.permutation(n)
        losses, correct, updates, peak = [], 0, 0, 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            m = self.train_sequence(xs[idx], targets[idx])
            if not np.isnan(m.loss):
                losses.append((m.loss, len(idx)))
            correct += m.correct
            updates += m.updates
            peak = max(peak, m.peak_retained)
        total_loss = (
            sum(l * w for l, w in losses) / sum(w for _, w in losses)
            if losses
            else float("nan")
        )
        accuracy = correct / n if self.config.loss == CROSS_ENTROPY else float("nan")
        return SequenceMetrics(
            loss=total_loss,
            accuracy=accuracy,
            updates=updates,
            peak_retained=peak,
            correct=correct,
            count=n,
        )

    def evaluate(
        self, xs: np.ndarray, targets: np.ndarray, batch_size: int = 64
    ) -> SequenceMetrics:
        """Forward-only pass; loss/accuracy over the active window."""
        n = xs.shape[0]
        losses, correct, peak = [], 0, 0
        for start in range(0, n, batch_size):
            sl = slice(start, start + batch_size)
            _, m = self.sequence_updates(xs[sl], targets[sl], learn=False)
            if not np.isnan(m.loss):
                losses.append((m.loss, m.count))
            correct += m.correct
            peak = max(peak, m.peak_retained)
        total_loss = (
            sum(l * w for l, w in losses) / sum(w for _, w in losses)
            if losses
            else float("nan")
        )
        accuracy = correct / n if self.config.loss == CROSS_ENTROPY else float("nan")
        return SequenceMetrics(
            loss=total_loss,
            accuracy=accuracy,
            updates=0,
            peak_retained=peak,
            correct=correct,
            count=n,
        )
