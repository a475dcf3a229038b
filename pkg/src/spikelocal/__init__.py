"""Spiking-network training with a temporally local three-factor rule.

Core pieces: LIF layer dynamics (neurons), eligibility traces
(plasticity), the online trainer (learning), a full-history BPTT oracle
(bptt), exact memory/MAC counters (costs), event binning and synthetic
tasks (data), and the experiment/CLI harness (experiments, cli).
"""

from .bptt import Tape, bptt_gradients, finite_difference_check, record_tape
from .costs import (
    CostReport,
    audit_bptt_run,
    audit_local_run,
    complexity_lookup,
    complexity_table,
    cost_bptt,
    cost_local,
    speedups,
)
from .data import (
    BinnedTensor,
    Dataset,
    EventStream,
    bin_events,
    gen_pattern_task,
    gen_regression_task,
    load_binned,
    save_binned,
)
from .errors import ConfigError, DataFormatError
from .experiments import (
    ExperimentConfig,
    config_from_json,
    config_to_json,
    load_dataset,
    run_ablation,
    run_experiment,
)
from .learning import (
    FeedbackMatrices,
    LearningConfig,
    Trainer,
    backprop_signal,
    dfa_signal,
    loss_and_delta_L,
    optimizer_step,
)
from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    forward_step,
    init_state,
    weight_standardize,
)
from .neurons import (
    LayerState,
    NeuronParams,
    PsiKind,
    leaky_readout_step,
    lif_step,
    psi_eval,
    rlif_step,
    surrogate_deriv,
)
from .plasticity import (
    StdpParams,
    TraceBuffer,
    eligibility_ff,
    eligibility_ff_reference,
    eligibility_rec,
    eligibility_rec_reference,
    stdp_delta,
    trace_update,
)

__version__ = "0.1.0"
