"""Reference gradients by backpropagation through the unrolled sequence.

This module intentionally keeps the full activity history (the tape)
and walks it backwards, which is exactly the O(T) memory behaviour the
temporally local rule avoids. It exists to validate that rule and the
cost model, not to train anything.

Conventions shared with the online engine: the reset path is detached
(the only membrane-to-membrane derivative is the leak), and the firing
derivative is the configured surrogate. A "smoothed" mode replaces the
Heaviside firing with a sigmoid so the whole map becomes differentiable
and central finite differences can check the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .learning import CROSS_ENTROPY, MSE, loss_and_delta_L
from .network import READOUT, RECURRENT, Network
from .neurons import heaviside_spikes, surrogate_deriv

SMOOTH_K = 10.0


def _smooth_fire(u: np.ndarray, v_th: float, k: float) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-k * (u - v_th)))


def _smooth_fire_deriv(u: np.ndarray, v_th: float, k: float) -> np.ndarray:
    s = _smooth_fire(u, v_th, k)
    return k * s * (1.0 - s)


@dataclass
class Tape:
    """Full forward history: input frames plus every layer's membrane.

    Spikes are recomputed from the membranes on demand, so the counted
    elements are exactly one float per neuron per step (inputs
    included), which is the quantity the cost model charges to BPTT.
    """

    xs: np.ndarray  # (T, input_width)
    membranes: list[np.ndarray]  # per layer, (T, width)
    smoothed: bool
    k: float

    def __len__(self) -> int:
        return self.xs.shape[0]

    def element_count(self) -> int:
        return self.xs.size + sum(m.size for m in self.membranes)

    def outputs(self, net: Network, idx: int) -> np.ndarray:
        """Layer activity over time, recomputed from the membranes."""
        layer = net.spec.layers[idx]
        u = self.membranes[idx]
        if layer.kind == READOUT:
            return u
        if self.smoothed:
            return _smooth_fire(u, layer.v_th, self.k)
        return heaviside_spikes(u, layer.v_th)


def record_tape(
    net: Network,
    xs: np.ndarray,
    smoothed: bool = False,
    k: float = SMOOTH_K,
    frozen_resets: list[np.ndarray] | None = None,
) -> Tape:
    """Run the forward pass over a whole sequence, keeping everything.

    frozen_resets, when given, supplies per-layer output histories whose
    delayed values drive the reset term instead of the live outputs
    (recurrent and feedforward transport stay live). This is how the
    finite-difference check realizes the detached-reset convention.
    """
    if any(layer.standardize for layer in net.spec.layers):
        raise ConfigError("oracle does not support standardized layers")
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != net.spec.input_width:
        raise ConfigError(
            f"expected (T, {net.spec.input_width}) input, got {xs.shape}"
        )
    t_total = xs.shape[0]
    layers = net.spec.layers
    membranes = [np.zeros((t_total, layer.width)) for layer in layers]

    u = [np.zeros(layer.width) for layer in layers]
    y_prev = [np.zeros(layer.width) for layer in layers]
    for t in range(t_total):
        activity = xs[t]
        for idx, layer in enumerate(layers):
            current = net.weights[idx].w @ activity
            if layer.kind == READOUT:
                u[idx] = layer.gamma * u[idx] + current
                membranes[idx][t] = u[idx]
                activity = u[idx]
                continue
            if layer.kind == RECURRENT:
                current = current + net.weights[idx].w_rec @ y_prev[idx]
            reset_drive = (
                frozen_resets[idx][t - 1]
                if frozen_resets is not None and t > 0
                else (y_prev[idx] if frozen_resets is None else np.zeros(layer.width))
            )
            u[idx] = layer.gamma * (u[idx] - layer.v_th * reset_drive) + current
            membranes[idx][t] = u[idx]
            if smoothed:
                y = _smooth_fire(u[idx], layer.v_th, k)
            else:
                y = heaviside_spikes(u[idx], layer.v_th)
            y_prev[idx] = y
            activity = y
    return Tape(xs=xs, membranes=membranes, smoothed=smoothed, k=k)


def sequence_loss(
    net: Network,
    tape: Tape,
    target: np.ndarray,
    loss_kind: str,
    step_mask: np.ndarray,
) -> float:
    """Total masked per-step loss of a recorded forward pass."""
    top = len(net.spec.layers) - 1
    readout = tape.outputs(net, top)
    total = 0.0
    for t in range(len(tape)):
        if not step_mask[t]:
            continue
        loss, _ = loss_and_delta_L(readout[t], target, loss_kind)
        total += loss
    return total


def bptt_gradients(
    net: Network,
    tape: Tape,
    target: np.ndarray,
    loss_kind: str = MSE,
    step_mask: np.ndarray | None = None,
) -> list[dict[str, np.ndarray]]:
    """Reverse-mode gradients of the masked per-step loss.

    Walks the tape backwards with the detached-reset recursion
    dL/du[t] = (dL/dy[t]) * theta'(u[t]) + gamma * dL/du[t+1] per layer,
    routing credit through feedforward weights (and recurrent weights
    one step back). Returns one dict per layer with "w" and, for
    recurrent layers, "w_rec".
    """
    if tape is None:
        raise ConfigError("no tape recorded; run record_tape first")
    t_total = len(tape)
    layers = net.spec.layers
    if step_mask is None:
        step_mask = np.ones(t_total, dtype=bool)
    step_mask = np.asarray(step_mask, dtype=bool)
    if step_mask.shape != (t_total,):
        raise ConfigError(f"step mask must have shape ({t_total},)")

    outputs = [tape.outputs(net, idx) for idx in range(len(layers))]
    grads = [
        {
            "w": np.zeros_like(net.weights[idx].w),
            **(
                {"w_rec": np.zeros_like(net.weights[idx].w_rec)}
                if net.weights[idx].w_rec is not None
                else {}
            ),
        }
        for idx in range(len(layers))
    ]

    # dL/dy for the top layer comes straight from the loss
    top = len(layers) - 1
    g_out = np.zeros((t_total, layers[top].width))
    for t in range(t_total):
        if step_mask[t]:
            _, delta = loss_and_delta_L(outputs[top][t], target, loss_kind)
            g_out[t] = delta[0]

    g_from_above = g_out
    for idx in range(top, -1, -1):
        layer = layers[idx]
        u_hist = tape.membranes[idx]
        x_hist = tape.xs if idx == 0 else outputs[idx - 1]
        g_below = np.zeros((t_total, net.spec.fan_in(idx)))
        w = net.weights[idx].w
        w_rec = net.weights[idx].w_rec

        if layer.kind == READOUT:
            gu_next = np.zeros(layer.width)
            for t in range(t_total - 1, -1, -1):
                gu = g_from_above[t] + layer.gamma * gu_next
                grads[idx]["w"] += np.outer(gu, x_hist[t])
                g_below[t] = w.T @ gu
                gu_next = gu
        else:
            if tape.smoothed:
                thetap = _smooth_fire_deriv(u_hist, layer.v_th, tape.k)
            else:
                thetap = surrogate_deriv(layer.surrogate, u_hist, layer.v_th)
            gu_next = np.zeros(layer.width)
            for t in range(t_total - 1, -1, -1):
                gy = g_from_above[t].copy()
                if layer.kind == RECURRENT:
                    gy += w_rec.T @ gu_next
                gu = gy * thetap[t] + layer.gamma * gu_next
                grads[idx]["w"] += np.outer(gu, x_hist[t])
                if layer.kind == RECURRENT and t >= 1:
                    grads[idx]["w_rec"] += np.outer(gu, outputs[idx][t - 1])
                g_below[t] = w.T @ gu
                gu_next = gu
        g_from_above = g_below
    return grads


def finite_difference_check(
    net: Network,
    xs: np.ndarray,
    target: np.ndarray,
    loss_kind: str = MSE,
    step_mask: np.ndarray | None = None,
    h: float = 1e-5,
    n_coords: int = 120,
    k: float = SMOOTH_K,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference grads.

    The network runs in smoothed mode (sigmoid firing, slope k) so the
    forward map is differentiable; the reset term is frozen to the base
    run's outputs in every perturbed evaluation, which makes the
    detached-reset analytic gradient the exact gradient of the map
    being differenced. Coordinates are sampled uniformly across all
    weight matrices; each error is normalized by
    max(|analytic|, |numeric|, 1e-3 * max|analytic|) so near-zero
    coordinates are measured on the gradient's own scale.
    """
    if h <= 0:
        raise ConfigError(f"step size h must be positive, got {h}")
    xs = np.asarray(xs, dtype=float)
    t_total = xs.shape[0]
    if step_mask is None:
        step_mask = np.ones(t_total, dtype=bool)

    base_tape = record_tape(net, xs, smoothed=True, k=k)
    frozen = [
        base_tape.outputs(net, idx) if layer.kind != READOUT else None
        for idx, layer in enumerate(net.spec.layers)
    ]
    grads = bptt_gradients(net, base_tape, target, loss_kind, step_mask)

    def loss_fn() -> float:
        tape = record_tape(net, xs, smoothed=True, k=k, frozen_resets=frozen)
        return sequence_loss(net, tape, target, loss_kind, step_mask)

    # flat index space over every weight matrix
    mats: list[tuple[int, str]] = []
    for idx, lw in enumerate(net.weights):
        mats.append((idx, "w"))
        if lw.w_rec is not None:
            mats.append((idx, "rec"))
    sizes = [
        (net.weights[i].w if which == "w" else net.weights[i].w_rec).size
        for i, which in mats
    ]
    total = sum(sizes)
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)

    gmax = max(float(np.max(np.abs(g_mat))) for g in grads for g_mat in g.values())
    floor = max(1e-3 * gmax, 1e-12)

    max_err = 0.0
    offsets = np.cumsum([0] + sizes)
    for flat in picks:
        m = int(np.searchsorted(offsets, flat, side="right") - 1)
        idx, which = mats[m]
        mat = net.weights[idx].w if which == "w" else net.weights[idx].w_rec
        pos = np.unravel_index(int(flat - offsets[m]), mat.shape)
        orig = mat[pos]
        mat[pos] = orig + h
        up = loss_fn()
        mat[pos] = orig - h
        down = loss_fn()
        mat[pos] = orig
        numeric = (up - down) / (2 * h)
        analytic = grads[idx]["w" if which == "w" else "w_rec"][pos]
        err = abs(numeric - analytic) / max(abs(numeric), abs(analytic), floor)
        max_err = max(max_err, float(err))
    return max_err
