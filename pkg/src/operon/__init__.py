"""Learned local solution operators for controlled ODE systems.

Train a branch/trunk operator network on one-step trajectory data, then
simulate long horizons either by recursive forward passes or by an
improved-Euler scheme built from the network's step-size derivatives.
"""

from .baselines import EnsembleParams, FnnParams, ensemble_forward, fnn_forward, train_ensemble, train_fnn
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SamplingSpec, TrainingTriplet, generate, get_system, load, save, split
from .estimators import (
    DeepONetRegressor,
    EnsembleNextStateRegressor,
    NextStateRegressor,
    pack_features,
    triplets_to_arrays,
    unpack_features,
)
from .metrics import ErrorReport, evaluate_over_initial_conditions, evaluate_single, l2_relative_error, l2_relative_errors
from .nn import AdamState, DenseParams, adam_step, dense_backward, dense_forward, dense_jvp, init_adam, init_dense
from .operator import (
    DeepONetConfig,
    DeepONetParams,
    LocalInput,
    TrainingSchedule,
    assemble_branch_input,
    branch_features,
    combine_features,
    combine_features_dh,
    forward,
    forward_dh,
    init_deeponet,
    loss,
    train,
)
from .rollout import (
    ErrorProfile,
    RolloutRequest,
    predict_batch,
    recursive_predict,
    rk2_corrector_predict,
    rk2_predict,
    rollout_error_profile,
    run_scheme,
)
from .systems import (
    InputSignal,
    OdeSystem,
    Partition,
    Trajectory,
    cart_pole,
    lorenz63,
    pendulum,
    predator_prey,
    rk4_step,
    simulate_truth,
    trajectory_from_csv,
    trajectory_to_csv,
)

__version__ = "0.1.0"
