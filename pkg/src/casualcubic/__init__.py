"""Casual cubic methods: HVP certificates that let gradient steps replace cubic Newton steps."""

__version__ = "0.1.0"

from .baselines import (
    run_acc_cubic,
    run_adan,
    run_adan_plus,
    run_adgd,
    run_baseline,
    run_cubic_newton,
    run_gd,
    run_nesterov_ls,
    run_polyak,
    run_reg_newton,
)
from .certificate import CertificateInputs, backtrack_H, grad_cubic_step, hat_H, per_condition_test
from .data import (
    Dataset,
    RunConfig,
    estimate_H_logistic,
    gen_logsumexp,
    gen_separable_logistic,
    load_libsvm,
    parse_libsvm,
    read_trace_csv,
    write_trace_csv,
)
from .deterministic import (
    run_acc_cacun,
    run_cacuadan,
    run_cacuadan_plus,
    run_cacuadgd,
    run_cacun,
)
from .estimators import CasualCubicLogisticRegression, OracleMinimizer
from .oracle import (
    BacktrackOverflow,
    Budgets,
    Converged,
    IndefiniteSystem,
    IterRecord,
    Oracle,
    OracleCounters,
    StepKind,
    SubproblemFailure,
    Trace,
    snapshot_counters,
)
from .problems import (
    CubicNormProblem,
    LogisticProblem,
    LogSumExpProblem,
    QuadraticProblem,
    SeparableCubicProblem,
)
from .stochastic import MinibatchSampler, NoisyOracle, cacusgd_regime, run_cacusgd, run_sgd
from .subproblem import crn_step, reg_newton_step, shifted_solve
