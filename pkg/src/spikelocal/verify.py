"""Self-check suite: every cross-cutting invariant as a runnable check.

Each check returns a VerifyResult with the worst observed error so the
release gate can print one line per invariant. Checks accept an
injectable implementation where that makes mutation testing possible
(a deliberately corrupted implementation must make the check fail).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bptt import bptt_gradients, finite_difference_check, record_tape
from .costs import audit_bptt_run, audit_local_run, cost_bptt, cost_local, speedups
from .learning import LearningConfig, Trainer
from .network import DENSE, READOUT, RECURRENT, LayerSpec, Network, NetworkSpec
from .neurons import PsiKind, psi_eval
from .plasticity import (
    StdpParams,
    TraceBuffer,
    eligibility_ff,
    eligibility_ff_reference,
    eligibility_rec,
    eligibility_rec_reference,
    trace_update,
)

PSI_KINDS = list(PsiKind)


@dataclass
class VerifyResult:
    name: str
    ok: bool
    max_err: float
    detail: str

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status}  {self.name:34} max_err={self.max_err:.3e}  {self.detail}"


def _random_case(rng: np.random.Generator, max_t: int, max_width: int):
    t_total = int(rng.integers(1, max_t + 1))
    n_in = int(rng.integers(1, max_width + 1))
    n_out = int(rng.integers(1, max_width + 1))
    params = StdpParams(
        lambda_pre=float(rng.random()),
        lambda_post=float(rng.random()),
        alpha_pre=float(rng.choice((-1.0, 0.0, 1.0))),
        alpha_post=float(rng.choice((-1.0, 0.0, 1.0))),
    )
    kind = PSI_KINDS[int(rng.integers(len(PSI_KINDS)))]
    v_th = float(rng.uniform(0.2, 1.5))
    x_hist = (rng.random((t_total, n_in)) < 0.3).astype(float)
    u_hist = rng.normal(v_th, 0.8, (t_total, n_out))
    t = int(rng.integers(t_total))
    return t_total, params, kind, v_th, x_hist, u_hist, t


def forward_eligibility_ff(
    x_hist: np.ndarray,
    u_hist: np.ndarray,
    t: int,
    params: StdpParams,
    kind: PsiKind,
    v_th: float,
) -> np.ndarray:
    """Run the trace recurrences up to t and form the eligibility there."""
    traces = TraceBuffer.zeros(1, x_hist.shape[1], u_hist.shape[1])
    for step in range(t + 1):
        psi = psi_eval(kind, u_hist[step], v_th)[None]
        traces.tr_x = trace_update(traces.tr_x, x_hist[step][None], params.lambda_pre)
        traces.tr_psi = trace_update(traces.tr_psi, psi, params.lambda_post)
    psi_t = psi_eval(kind, u_hist[t], v_th)[None]
    return eligibility_ff(psi_t, x_hist[t][None], traces, params)[0]


def forward_eligibility_rec(
    y_hist: np.ndarray,
    u_hist: np.ndarray,
    t: int,
    params: StdpParams,
    kind: PsiKind,
    v_th: float,
) -> np.ndarray:
    """Same as forward_eligibility_ff but on the layer's delayed output."""
    width = y_hist.shape[1]
    traces = TraceBuffer.zeros(1, width, u_hist.shape[1])
    for step in range(t + 1):
        y_delayed = y_hist[step - 1] if step >= 1 else np.zeros(width)
        psi = psi_eval(kind, u_hist[step], v_th)[None]
        traces.tr_x = trace_update(traces.tr_x, y_delayed[None], params.lambda_pre)
        traces.tr_psi = trace_update(traces.tr_psi, psi, params.lambda_post)
    psi_t = psi_eval(kind, u_hist[t], v_th)[None]
    y_delayed = y_hist[t - 1] if t >= 1 else np.zeros(width)
    return eligibility_rec(psi_t, y_delayed[None], traces, params)[0]


def check_eligibility_ff(
    n_cases: int = 2000,
    seed: int = 0,
    max_t: int = 64,
    max_width: int = 32,
    forward_fn: Callable = forward_eligibility_ff,
) -> VerifyResult:
    """Forward-recurrence eligibility vs the literal double sum."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        _, params, kind, v_th, x_hist, u_hist, t = _random_case(rng, max_t, max_width)
        got = forward_fn(x_hist, u_hist, t, params, kind, v_th)
        ref = eligibility_ff_reference(x_hist, u_hist, t, params, kind, v_th)
        scale = np.maximum(np.abs(ref), 1.0)
        worst = max(worst, float(np.max(np.abs(got - ref) / scale)))
    return VerifyResult(
        "eligibility-ff-vs-reference", worst < 1e-9, worst, f"({n_cases} cases)"
    )


def check_eligibility_rec(
    n_cases: int = 2000,
    seed: int = 1,
    max_t: int = 64,
    max_width: int = 32,
    forward_fn: Callable = forward_eligibility_rec,
) -> VerifyResult:
    """Recurrent-synapse eligibility vs its double-sum form."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        _, params, kind, v_th, _, u_hist, t = _random_case(rng, max_t, max_width)
        width = u_hist.shape[1]
        y_hist = (rng.random((u_hist.shape[0], width)) < 0.3).astype(float)
        got = forward_fn(y_hist, u_hist, t, params, kind, v_th)
        ref = eligibility_rec_reference(y_hist, u_hist, t, params, kind, v_th)
        scale = np.maximum(np.abs(ref), 1.0)
        worst = max(worst, float(np.max(np.abs(got - ref) / scale)))
    return VerifyResult(
        "eligibility-rec-vs-reference", worst < 1e-9, worst, f"({n_cases} cases)"
    )


def restricted_equivalence_case(
    rng: np.random.Generator,
) -> tuple[float, Network]:
    """One random instance of the gradient-equivalence construction.

    One dense spiking hidden layer plus a stateless linear readout,
    per-step loss over all steps, matched decay (lambda_pre = gamma),
    causal-only gains, and the eligibility's activation equal to the
    surrogate. The accumulated online update must equal the negated
    reference gradient.
    """
    n_in = int(rng.integers(2, 17))
    n_hidden = int(rng.integers(2, 17))
    n_out = int(rng.integers(1, 6))
    t_total = int(rng.integers(2, 21))
    gamma = float(rng.uniform(0.05, 0.99))
    kind = PSI_KINDS[int(rng.integers(len(PSI_KINDS)))]
    spec = NetworkSpec(
        n_in,
        (
            LayerSpec(DENSE, n_hidden, gamma=gamma, v_th=0.8, psi=kind, surrogate=kind),
            LayerSpec(READOUT, n_out, gamma=0.0),
        ),
    )
    net = Network.build(spec, seed=int(rng.integers(1 << 30)))
    stdp = StdpParams(
        lambda_pre=gamma,
        lambda_post=float(rng.random()),
        alpha_pre=1.0,
        alpha_post=0.0,
    )
    config = LearningConfig(
        mode="bp", t_total=t_total, t_signal=0, rho=1.0, stdp=stdp,
        loss="mse", optimizer="sgd",
    )
    xs = (rng.random((t_total, n_in)) < 0.4).astype(float)
    target = rng.standard_normal(n_out)

    trainer = Trainer(net, config, seed=0)
    acc, _ = trainer.sequence_updates(xs[None], target[None])
    tape = record_tape(net, xs)
    grads = bptt_gradients(net, tape, target, loss_kind="mse")

    worst = 0.0
    for idx in range(len(spec.layers)):
        online = acc[idx].w
        ref = grads[idx]["w"]
        scale = max(float(np.max(np.abs(ref))), 1e-12)
        worst = max(worst, float(np.max(np.abs(online + ref)) / scale))
    return worst, net


def check_restricted_equivalence(n_instances: int = 40, seed: int = 2) -> VerifyResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        err, _ = restricted_equivalence_case(rng)
        worst = max(worst, err)
    return VerifyResult(
        "online-vs-bptt-restricted", worst < 1e-6, worst, f"({n_instances} instances)"
    )


def random_small_net(rng: np.random.Generator) -> Network:
    """A random 2-3 layer stack for gradient checking, widths <= 16."""
    n_in = int(rng.integers(2, 9))
    layers = []
    depth = int(rng.integers(1, 3))
    for _ in range(depth):
        kind = RECURRENT if rng.random() < 0.4 else DENSE
        layers.append(
            LayerSpec(
                kind,
                int(rng.integers(2, 17)),
                gamma=float(rng.uniform(0.1, 0.95)),
                v_th=float(rng.uniform(0.4, 1.0)),
            )
        )
    layers.append(LayerSpec(READOUT, int(rng.integers(1, 5)), gamma=float(rng.uniform(0.0, 0.95))))
    spec = NetworkSpec(n_in, tuple(layers))
    return Network.build(spec, seed=int(rng.integers(1 << 30)))


def check_finite_differences(
    n_nets: int = 6, n_coords: int = 60, seed: int = 3
) -> VerifyResult:
    """Oracle backward pass vs central differences on smoothed nets."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_nets):
        net = random_small_net(rng)
        t_total = int(rng.integers(3, 11))
        xs = (rng.random((t_total, net.spec.input_width)) < 0.4).astype(float)
        out_w = net.spec.layers[-1].width
        if i % 2 == 0:
            loss_kind, target = "mse", rng.standard_normal(out_w)
        else:
            loss_kind, target = "cross-entropy", np.array([int(rng.integers(out_w))])
        err = finite_difference_check(
            net, xs, target, loss_kind=loss_kind, h=1e-5,
            n_coords=n_coords, seed=int(rng.integers(1 << 30)),
        )
        worst = max(worst, err)
    return VerifyResult(
        "bptt-vs-finite-differences",
        worst < 1e-4,
        worst,
        f"({n_nets} nets x {n_coords} coords)",
    )


def check_cost_identities(n_cases: int = 200, seed: int = 4) -> VerifyResult:
    """Speedup ratios must equal the count ratios for any widths."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        n_layers = int(rng.integers(1, 6))
        widths = [int(rng.integers(1, 2000)) for _ in range(n_layers + 1)]
        t_total = int(rng.integers(2, 400))
        t_signal = int(rng.integers(0, t_total))
        mem_b, mac_b = cost_bptt(widths, t_total)
        mem_l, mac_l = cost_local(widths, t_total, t_signal)
        s_mem, s_mac = speedups(t_total, t_signal)
        worst = max(worst, abs(s_mem - mem_b / mem_l), abs(s_mac - mac_b / mac_l))
    return VerifyResult(
        "cost-ratio-identities", worst < 1e-12, worst, f"({n_cases} width vectors)"
    )


def check_memory_invariance(
    widths: tuple[int, ...] = (120, 120, 120, 1),
    t_short: int = 10,
    t_long: int = 120,
    seed: int = 5,
) -> VerifyResult:
    """Online retained state must not depend on T; the tape must scale."""
    layers = [LayerSpec(DENSE, w, gamma=0.9, v_th=0.8) for w in widths[1:-1]]
    layers.append(LayerSpec(READOUT, widths[-1], gamma=0.9))
    spec = NetworkSpec(widths[0], tuple(layers))
    net = Network.build(spec, seed=seed)

    def local_cfg(t_total: int) -> LearningConfig:
        return LearningConfig(
            mode="bp", t_total=t_total, t_signal=t_total - 1, rho=1e-3,
            stdp=StdpParams(0.9, 0.5, 1.0, 0.0), loss="mse", optimizer="sgd",
        )

    peak_short = audit_local_run(net, local_cfg(t_short), t_short, widths[0], seed)
    peak_long = audit_local_run(net, local_cfg(t_long), t_long, widths[0], seed)
    tape_short = audit_bptt_run(net, t_short, widths[0], seed)
    tape_long = audit_bptt_run(net, t_long, widths[0], seed)

    expect_ratio = t_long / t_short
    ok = (
        peak_short == peak_long
        and tape_short == cost_bptt(list(widths), t_short)[0]
        and tape_long == cost_bptt(list(widths), t_long)[0]
        and tape_long == tape_short * expect_ratio
    )
    err = abs(peak_long - peak_short) + abs(tape_long - tape_short * expect_ratio)
    return VerifyResult(
        "memory-audit-invariance",
        ok,
        float(err),
        f"(online {peak_short}=>{peak_long} elems, tape {tape_short}=>{tape_long})",
    )


def run_all(deep: bool = False) -> list[VerifyResult]:
    """The release gate. deep=True runs acceptance-scale case counts."""
    n_elig = 10000 if deep else 2000
    results = [
        check_eligibility_ff(n_cases=n_elig),
        check_eligibility_rec(n_cases=n_elig),
        check_restricted_equivalence(n_instances=100 if deep else 40),
        check_finite_differences(n_nets=20 if deep else 6),
        check_cost_identities(),
        check_memory_invariance(),
    ]
    return results
