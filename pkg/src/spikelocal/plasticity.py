"""Exponential traces, STDP, and instantaneous eligibility traces.

The eligibility of a synapse combines a causal term (current
postsynaptic activity times low-pass-filtered presynaptic activity) and
a non-causal term (current presynaptic spike times filtered *past*
postsynaptic activity). Both are computed forward in time from two
vector traces, so the stored state per layer is O(fan-in + fan-out),
never O(synapses).

The *_reference functions re-derive the same quantities from full spike
histories with literal double sums; they exist only as oracles for the
forward-recurrence forms and deliberately keep O(T) memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .neurons import PsiKind, psi_eval


@dataclass(frozen=True)
class StdpParams:
    """Gains and decays of the causal / non-causal pair.

    alpha_pre, lambda_pre parameterize the causal (pre-before-post)
    term; alpha_post, lambda_post the non-causal one. alpha_post < 0
    rewards causality, alpha_post > 0 rewards synchrony, 0 disables the
    non-causal term entirely.
    """

    lambda_pre: float = 0.5
    lambda_post: float = 0.5
    alpha_pre: float = 1.0
    alpha_post: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_pre <= 1.0:
            raise ConfigError(f"lambda_pre must be in [0, 1], got {self.lambda_pre}")
        if not 0.0 <= self.lambda_post <= 1.0:
            raise ConfigError(f"lambda_post must be in [0, 1], got {self.lambda_post}")


@dataclass
class TraceBuffer:
    """Filtered presynaptic activity and filtered postsynaptic psi.

    tr_x has fan-in length and is advanced with lambda_pre; tr_psi has
    fan-out length and is advanced with lambda_post. Both start at zero
    and are reset between sequences.
    """

    tr_x: np.ndarray
    tr_psi: np.ndarray

    @classmethod
    def zeros(cls, batch: int, fan_in: int, fan_out: int) -> "TraceBuffer":
        return cls(
            tr_x=np.zeros((batch, fan_in)),
            tr_psi=np.zeros((batch, fan_out)),
        )


def trace_update(tr: np.ndarray, x: np.ndarray, lam: float) -> np.ndarray:
    """One step of the exponential filter: tr' = lam * tr + x."""
    tr = np.asarray(tr, dtype=float)
    x = np.asarray(x, dtype=float)
    if tr.shape != x.shape:
        raise ConfigError(f"trace shape {tr.shape} does not match input {x.shape}")
    return lam * tr + x


def _pair_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """outer(a, b) for vectors, stacked per-sample outers for (B, n)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 and b.ndim == 1:
        return np.outer(a, b)
    return np.einsum("bi,bj->bij", np.atleast_2d(a), np.atleast_2d(b))


def stdp_delta(
    y: np.ndarray,
    x: np.ndarray,
    tr_x: np.ndarray,
    tr_y: np.ndarray,
    params: StdpParams,
) -> np.ndarray:
    """Classical pairwise STDP step on spike traces.

    dw_ij = alpha_pre * y_i * tr(x_j) + alpha_post * x_j * (tr(y_i) - y_i)

    tr_y must already include the current y, so subtracting y restores
    the strictly-past filtered activity. Vector inputs give a
    (fan-out, fan-in) matrix; a leading batch axis gives one matrix per
    sample.
    """
    y = np.asarray(y, dtype=float)
    causal = params.alpha_pre * _pair_outer(y, tr_x)
    non_causal = params.alpha_post * _pair_outer(np.asarray(tr_y) - y, x)
    return causal + non_causal


def eligibility_ff(
    psi_u: np.ndarray,
    x_now: np.ndarray,
    traces: TraceBuffer,
    params: StdpParams,
) -> np.ndarray:
    """Instantaneous eligibility of feedforward synapses at this step.

    e_ij = alpha_pre * psi_i * tr(x_j) + alpha_post * x_j * (tr_psi_i - psi_i)

    Preconditions: traces.tr_x filtered through the current step
    (includes x_now) with lambda_pre, traces.tr_psi filtered through the
    current step (includes psi_u) with lambda_post. The psi subtraction
    limits the non-causal sum to strictly earlier steps.

    Vector inputs give a (fan-out, fan-in) matrix; a leading batch axis
    gives one matrix per sample.
    """
    psi_u = np.asarray(psi_u, dtype=float)
    causal = params.alpha_pre * _pair_outer(psi_u, traces.tr_x)
    past_psi = np.asarray(traces.tr_psi, dtype=float) - psi_u
    non_causal = params.alpha_post * _pair_outer(past_psi, x_now)
    return causal + non_causal


def eligibility_rec(
    psi_u: np.ndarray,
    y_prev: np.ndarray,
    traces: TraceBuffer,
    params: StdpParams,
) -> np.ndarray:
    """Instantaneous eligibility of recurrent synapses at this step.

    Recurrent synapses see the layer's own delayed output as their
    presynaptic signal, so traces.tr_x must filter y[t-1] (with
    lambda_pre) and y_prev is the delayed output at this step.
    Otherwise identical in structure to eligibility_ff.
    """
    return eligibility_ff(psi_u, y_prev, traces, params)


def eligibility_ff_reference(
    x_history: np.ndarray,
    u_history: np.ndarray,
    t: int,
    params: StdpParams,
    psi_kind: "PsiKind | str",
    v_th: float,
) -> np.ndarray:
    """Double-sum oracle for eligibility_ff, from full histories.

    e_ij[t] = alpha_pre * psi(u_i[t]) * sum_{t'=0..t} lambda_pre^(t-t') x_j[t']
            + alpha_post * x_j[t] * sum_{t'=0..t-1} lambda_post^(t-t') psi(u_i[t'])

    x_history is (T, fan_in), u_history is (T, fan_out). O(T) work and
    memory by design; oracle use only.
    """
    x_history = np.asarray(x_history, dtype=float)
    u_history = np.asarray(u_history, dtype=float)
    psi_now = psi_eval(psi_kind, u_history[t], v_th)

    filt_x = np.zeros(x_history.shape[1])
    for tp in range(t + 1):
        filt_x += params.lambda_pre ** (t - tp) * x_history[tp]
    causal = params.alpha_pre * np.outer(psi_now, filt_x)

    filt_psi = np.zeros(u_history.shape[1])
    for tp in range(t):
        filt_psi += params.lambda_post ** (t - tp) * psi_eval(
            psi_kind, u_history[tp], v_th
        )
    non_causal = params.alpha_post * np.outer(filt_psi, x_history[t])
    return causal + non_causal


def eligibility_rec_reference(
    y_history: np.ndarray,
    u_history: np.ndarray,
    t: int,
    params: StdpParams,
    psi_kind: "PsiKind | str",
    v_th: float,
) -> np.ndarray:
    """Double-sum oracle for eligibility_rec, from full histories.

    e_ik[t] = alpha_pre * psi(u_i[t]) * sum_{t'=1..t} lambda_pre^(t-t') y_k[t'-1]
            + alpha_post * y_k[t-1] * sum_{t'=0..t-1} lambda_post^(t-t') psi(u_i[t'])

    y_history is the layer's own output, (T, width); y[-1] is taken as 0
    so both sums are empty at t = 0.
    """
    y_history = np.asarray(y_history, dtype=float)
    u_history = np.asarray(u_history, dtype=float)
    width = y_history.shape[1]
    psi_now = psi_eval(psi_kind, u_history[t], v_th)

    filt_y = np.zeros(width)
    for tp in range(1, t + 1):
        filt_y += params.lambda_pre ** (t - tp) * y_history[tp - 1]
    causal = params.alpha_pre * np.outer(psi_now, filt_y)

    filt_psi = np.zeros(u_history.shape[1])
    for tp in range(t):
        filt_psi += params.lambda_post ** (t - tp) * psi_eval(
            psi_kind, u_history[tp], v_th
        )
    y_delayed = y_history[t - 1] if t >= 1 else np.zeros(width)
    non_causal = params.alpha_post * np.outer(filt_psi, y_delayed)
    return causal + non_causal
