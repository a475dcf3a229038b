"""Single-step dynamics for leaky integrate-and-fire layers.

All state is explicit and owned by the caller: each step maps
(state, input current) -> (new state, spikes). Arrays carry a leading
batch axis, shape (batch, width); a bare 1-D vector is treated as a
single sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class NeuronParams:
    """Leak factor and threshold of a LIF population.

    gamma is the per-step leak in [0, 1]; v_th > 0 is the firing
    threshold, also used as the soft-reset magnitude.
    """

    gamma: float
    v_th: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if not self.v_th > 0.0:
            raise ConfigError(f"v_th must be positive, got {self.v_th}")


@dataclass
class LayerState:
    """Membrane potentials and previous-step spikes of one layer."""

    u: np.ndarray
    y_prev: np.ndarray

    @classmethod
    def zeros(cls, batch: int, width: int) -> "LayerState":
        return cls(
            u=np.zeros((batch, width)),
            y_prev=np.zeros((batch, width)),
        )


class PsiKind(str, Enum):
    """Bump-shaped activation families, all peaked at u = v_th.

    Used both as the secondary activation inside eligibility traces and
    as the surrogate derivative for spatial error transport.
    """

    INVERSE_SQUARE = "inverse-square"
    TRIANGULAR = "triangular"
    SIGMOID_BELL = "sigmoid-bell"
    RATIONAL_BELL = "rational-bell"

    @classmethod
    def parse(cls, name: "str | PsiKind") -> "PsiKind":
        if isinstance(name, PsiKind):
            return name
        return cls(str(name).strip().lower().replace("_", "-"))


def _as_batched(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


def heaviside_spikes(u: np.ndarray, v_th: float) -> np.ndarray:
    """Firing nonlinearity: 1 where u >= v_th, else 0 (ties spike)."""
    return (u >= v_th).astype(float)


def lif_step(
    state: LayerState, input_current: np.ndarray, params: NeuronParams
) -> tuple[LayerState, np.ndarray]:
    """Advance a feedforward LIF layer by one step.

    u' = gamma * (u - v_th * y_prev) + input_current, spikes where
    u' >= v_th. The reset is "soft": v_th is subtracted (through the
    leak) instead of zeroing the membrane.
    """
    current = _as_batched(input_current)
    if current.shape != state.u.shape:
        raise ConfigError(
            f"input current shape {current.shape} does not match "
            f"layer state shape {state.u.shape}"
        )
    u_new = params.gamma * (state.u - params.v_th * state.y_prev) + current
    spikes = heaviside_spikes(u_new, params.v_th)
    return LayerState(u=u_new, y_prev=spikes), spikes


def rlif_step(
    state: LayerState,
    ff_current: np.ndarray,
    rec_weights: np.ndarray,
    params: NeuronParams,
) -> tuple[LayerState, np.ndarray]:
    """Advance a recurrent LIF layer by one step.

    Identical to lif_step plus the delayed recurrent drive
    rec_weights @ y_prev.
    """
    rec_weights = np.asarray(rec_weights, dtype=float)
    width = state.u.shape[-1]
    if rec_weights.shape != (width, width):
        raise ConfigError(
            f"recurrent weights must be square ({width}, {width}), "
            f"got {rec_weights.shape}"
        )
    total = _as_batched(ff_current) + state.y_prev @ rec_weights.T
    return lif_step(state, total, params)


def leaky_readout_step(
    u: np.ndarray, input_current: np.ndarray, gamma: float
) -> np.ndarray:
    """Non-spiking leaky integrator: u' = gamma * u + input_current."""
    u = _as_batched(u)
    current = _as_batched(input_current)
    if current.shape != u.shape:
        raise ConfigError(
            f"input current shape {current.shape} does not match "
            f"readout shape {u.shape}"
        )
    return gamma * u + current


def psi_eval(kind: "PsiKind | str", u: np.ndarray, v_th: float) -> np.ndarray:
    """Evaluate the chosen bump function element-wise, centered at v_th.

    inverse-square: 1 / (100|u - v_th| + 1)^2
    triangular:     0.3 * max(1 - |u - v_th|, 0)
    sigmoid-bell:   4 * sigma(u - v_th) * (1 - sigma(u - v_th))
    rational-bell:  1 / (1 + (10 (u - v_th))^2)
    """
    kind = PsiKind.parse(kind)
    d = np.asarray(u, dtype=float) - v_th
    if kind is PsiKind.INVERSE_SQUARE:
        return 1.0 / (100.0 * np.abs(d) + 1.0) ** 2
    if kind is PsiKind.TRIANGULAR:
        return 0.3 * np.maximum(1.0 - np.abs(d), 0.0)
    if kind is PsiKind.SIGMOID_BELL:
        s = 1.0 / (1.0 + np.exp(-d))
        return 4.0 * s * (1.0 - s)
    return 1.0 / (1.0 + (10.0 * d) ** 2)


def surrogate_deriv(kind: "PsiKind | str", u: np.ndarray, v_th: float) -> np.ndarray:
    """Surrogate derivative of the firing function for error transport.

    Same families as psi_eval; a layer may use one kind here and a
    different kind inside its eligibility trace. Defaults elsewhere to
    the triangular kind.
    """
    return psi_eval(kind, u, v_th)


DEFAULT_SURROGATE = PsiKind.TRIANGULAR
