"""Distributionally robust loss aggregation for adversarial training.

Library layout:
  divergence     f-divergence generators and Legendre transforms
  dro_core       KL and general-divergence dual objectives, weights, solver
  lambda_solver  fixed / learnable / bisection-optimized dual variable
  primal_oracle  brute-force primal certification of strong duality
  toy_model      tiny differentiable preference model, analytic gradients
  attack         embedding-space projected gradient ascent
  synthetic      seeded heavy-tail preference task
  trainer        the full training loop, logging, config I/O
  verify         the oracle suite behind `drotrain verify`
  cli            `drotrain train|ablate|verify`
"""

from .attack import AttackConfig, project, run_attack
from .divergence import (
    INFINITE,
    DivergenceSpec,
    InfiniteDivergence,
    chi2_spec,
    divergence_value,
    kl_spec,
)
from .dro_core import (
    DroConfig,
    GeneralDualSolution,
    LambdaMode,
    LossBatch,
    general_dual_objective,
    general_dual_solve,
    kl_dual_derivative,
    kl_dual_objective,
    kl_weights,
)
from .lambda_solver import DualState, learnable_step, resolve_lambda, solve_optimized
from .primal_oracle import PrimalSolution, kl_tilt_crosscheck, primal_solve
from .synthetic import TaskConfig, make_heavy_tail_task
from .toy_model import (
    LossKind,
    PreferenceSample,
    ReferenceParams,
    ToyModelParams,
    UtilitySample,
    attack_objective,
    attack_objective_grad_delta,
    capo_loss,
    cat_loss,
    forward,
    init_params,
    load_params,
    loss_grad_delta,
    loss_grad_params,
    save_params,
    utility_loss,
)
from .trainer import (
    Aggregation,
    ExperimentRecord,
    NonFiniteLossError,
    TrainConfig,
    chain_rule_check,
    evaluate_final_metrics,
    train,
)

__version__ = "0.1.0"
