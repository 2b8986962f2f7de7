"""One-step solution-operator model.

A branch network encodes the current state concatenated with the local input
samples and their relative sensor offsets; a trunk network encodes the scalar
step size h. The predicted next state is formed per component by the dot
product of matching q-sized chunks of the two feature vectors.

Training minimizes mean squared one-step error with minibatch Adam. States
can optionally be standardized per dimension (statistics from the training
set, stored with the parameters); prediction de-standardizes transparently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._seeding import subseed
from .exceptions import (
    ConfigurationError,
    DivergenceError,
    ShapeError,
    TrainingDivergedError,
)
from .nn import (
    DenseParams,
    adam_step,
    dense_forward,
    dense_jvp,
    init_adam,
    init_dense,
    _backward_cached,
    _forward_cached,
)


@dataclass
class DeepONetConfig:
    """Architecture of the operator model.

    ``branch_widths`` / ``trunk_widths`` are full width chains including the
    input and output layers; use :meth:`create` to build them from a hidden
    size and depth.
    """

    state_dim: int
    num_sensors: int
    basis_per_output: int
    branch_widths: list
    trunk_widths: list
    activation: str = "tanh"
    architecture: str = "modified"
    seed: int = 0

    def __post_init__(self):
        n, ns, q = self.state_dim, self.num_sensors, self.basis_per_output
        if n < 1 or ns < 1 or q < 1:
            raise ConfigurationError("state_dim, num_sensors, basis_per_output must be >= 1")
        if self.branch_widths[0] != n + 2 * ns:
            raise ConfigurationError(
                f"branch input width must be state_dim + 2*num_sensors = {n + 2 * ns}, "
                f"got {self.branch_widths[0]}"
            )
        if self.trunk_widths[0] != 1:
            raise ConfigurationError("trunk input width must be 1 (the scalar step size)")
        if self.branch_widths[-1] != n * q or self.trunk_widths[-1] != n * q:
            raise ConfigurationError(
                f"branch/trunk output widths must be state_dim*basis_per_output = {n * q}"
            )

    @classmethod
    def create(
        cls,
        state_dim,
        num_sensors=1,
        basis_per_output=20,
        hidden_width=100,
        hidden_depth=3,
        activation="tanh",
        architecture="modified",
        seed=0,
    ):
        n, ns, q = int(state_dim), int(num_sensors), int(basis_per_output)
        hidden = [int(hidden_width)] * int(hidden_depth)
        return cls(
            state_dim=n,
            num_sensors=ns,
            basis_per_output=q,
            branch_widths=[n + 2 * ns] + hidden + [n * q],
            trunk_widths=[1] + hidden + [n * q],
            activation=activation,
            architecture=architecture,
            seed=int(seed),
        )


@dataclass
class LocalInput:
    """Input samples at the local sensors plus their relative offsets.

    ``offsets[i]`` is (current time - sensor time): the first sensor sits at
    the current time (offset 0) and later sensors give non-positive,
    non-increasing offsets.
    """

    values: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        self.offsets = np.atleast_1d(np.asarray(self.offsets, dtype=float))
        if self.values.shape != self.offsets.shape or self.values.ndim != 1:
            raise ShapeError("values and offsets must be equal-length vectors")
        if self.offsets[0] != 0.0:
            raise ConfigurationError("first sensor offset must be 0 (sensor at current time)")
        if np.any(self.offsets > 0.0) or np.any(np.diff(self.offsets) > 0.0):
            raise ConfigurationError("offsets must be non-positive and non-increasing")

    @classmethod
    def constant(cls, value, num_sensors=1):
        """All sensors reading the same value, co-located at the current time."""
        return cls(np.full(num_sensors, float(value)), np.zeros(num_sensors))


@dataclass
class DeepONetParams:
    """Trained (or freshly initialized) operator model."""

    config: DeepONetConfig
    branch: DenseParams
    trunk: DenseParams
    state_mean: np.ndarray | None = None
    state_std: np.ndarray | None = None
    h_max: float | None = None

    @property
    def state_dim(self):
        return self.config.state_dim

    @property
    def num_sensors(self):
        return self.config.num_sensors

    def predict_next(self, state, local_input, h):
        return forward(self, state, local_input, h)

    def predict_next_dh(self, state, local_input, h):
        return forward_dh(self, state, local_input, h)


def init_deeponet(config: DeepONetConfig) -> DeepONetParams:
    branch = init_dense(
        config.branch_widths, config.activation, config.architecture,
        seed=subseed(config.seed, "branch"),
    )
    trunk = init_dense(
        config.trunk_widths, config.activation, config.architecture,
        seed=subseed(config.seed, "trunk"),
    )
    return DeepONetParams(config, branch, trunk)


def assemble_branch_input(state, local_input: LocalInput):
    """Concatenate [state | sensor values | relative offsets]."""
    state = np.atleast_1d(np.asarray(state, dtype=float))
    return np.concatenate([state, local_input.values, local_input.offsets])


def _standardize_state(params: DeepONetParams, state):
    if params.state_mean is None:
        return state
    return (state - params.state_mean) / params.state_std


def branch_features(params: DeepONetParams, state, local_input: LocalInput):
    """Branch output for one (state, local input) pair; reusable across h."""
    state = np.asarray(state, dtype=float)
    if state.shape != (params.state_dim,):
        raise ShapeError(f"state must have shape ({params.state_dim},)")
    if local_input.values.size != params.num_sensors:
        raise ShapeError(f"local input must carry {params.num_sensors} sensors")
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(local_input.values))):
        raise ConfigurationError("non-finite model inputs")
    x = assemble_branch_input(_standardize_state(params, state), local_input)
    return dense_forward(params.branch, x)


def combine_features(params: DeepONetParams, beta, h):
    """Chunked dot product of branch features with trunk features at h."""
    n, q = params.config.state_dim, params.config.basis_per_output
    tau = dense_forward(params.trunk, np.array([float(h)]))
    out = (beta.reshape(n, q) * tau.reshape(n, q)).sum(axis=1)
    if params.state_mean is not None:
        out = params.state_mean + params.state_std * out
    return out


def combine_features_dh(params: DeepONetParams, beta, h):
    """Value and d(value)/dh from one trunk JVP; branch features are reused."""
    n, q = params.config.state_dim, params.config.basis_per_output
    tau, dtau = dense_jvp(params.trunk, np.array([float(h)]), np.ones(1))
    b = beta.reshape(n, q)
    out = (b * tau.reshape(n, q)).sum(axis=1)
    dout = (b * dtau.reshape(n, q)).sum(axis=1)
    if params.state_mean is not None:
        out = params.state_mean + params.state_std * out
        dout = params.state_std * dout
    return out, dout


def forward(params: DeepONetParams, state, local_input: LocalInput, h):
    """Predicted next state after a step of size h >= 0."""
    if not np.isfinite(h) or h < 0:
        raise ConfigurationError(f"step size must be finite and >= 0, got {h}")
    return combine_features(params, branch_features(params, state, local_input), h)


def forward_dh(params: DeepONetParams, state, local_input: LocalInput, h):
    """(next state, its derivative w.r.t. h); h == 0 is allowed."""
    if not np.isfinite(h) or h < 0:
        raise ConfigurationError(f"step size must be finite and >= 0, got {h}")
    return combine_features_dh(params, branch_features(params, state, local_input), h)


# --- training ----------------------------------------------------------------


@dataclass
class TrainingSchedule:
    epochs: int
    batch_size: int = 256
    base_lr: float = 1e-3
    decay_rate: float = 0.9
    decay_every: int = 2000
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be >= 1")


def stack_triplets(triplets):
    """Columns (states, values, offsets, h, next_states) from a triplet list."""
    if not triplets:
        raise ConfigurationError("empty triplet batch")
    states = np.stack([t.state for t in triplets])
    values = np.stack([t.local_input.values for t in triplets])
    offsets = np.stack([t.local_input.offsets for t in triplets])
    h = np.array([t.h for t in triplets])
    nexts = np.stack([t.next_state for t in triplets])
    return states, values, offsets, h, nexts


def _forward_batch(params: DeepONetParams, states, values, offsets, h):
    n, q = params.config.state_dim, params.config.basis_per_output
    if params.state_mean is not None:
        states = (states - params.state_mean) / params.state_std
    xb = np.hstack([states, values, offsets])
    beta = dense_forward(params.branch, xb)
    tau = dense_forward(params.trunk, h[:, None])
    net = (beta.reshape(-1, n, q) * tau.reshape(-1, n, q)).sum(axis=2)
    return net  # network-space prediction (standardized if the model is)


def loss(params: DeepONetParams, triplets) -> float:
    """Mean squared one-step error over the batch.

    Computed in the model's training coordinates: standardized models compare
    standardized targets with standardized predictions.
    """
    states, values, offsets, h, targets = stack_triplets(triplets)
    net = _forward_batch(params, states, values, offsets, h)
    if params.state_mean is not None:
        targets = (targets - params.state_mean) / params.state_std
    r = net - targets
    return float((r * r).sum() / len(triplets))


def train(triplets, config: DeepONetConfig, schedule: TrainingSchedule, progress=None):
    """Minibatch Adam on the one-step MSE.

    Returns (params, history) where history holds one (epoch, full-dataset
    loss) pair per epoch. Raises TrainingDivergedError carrying the last
    finite-loss parameters if the loss leaves the finite range.
    """
    states, values, offsets, h, targets = stack_triplets(triplets)
    _check_dims(config, states, values, targets)
    return _train_arrays(states, values, offsets, h, targets, config, schedule, progress)


def _check_dims(config, states, values, targets):
    if states.shape[1] != config.state_dim:
        raise ConfigurationError(
            f"dataset state_dim {states.shape[1]} != config state_dim {config.state_dim}"
        )
    if values.shape[1] != config.num_sensors:
        raise ConfigurationError(
            f"dataset num_sensors {values.shape[1]} != config num_sensors {config.num_sensors}"
        )
    if targets.shape[1] != config.state_dim:
        raise ConfigurationError("next-state width disagrees with state_dim")


def _train_arrays(states, values, offsets, h, targets, config, schedule, progress=None):
    n, q = config.state_dim, config.basis_per_output
    count = states.shape[0]

    params = init_deeponet(config)
    if schedule.standardize:
        mean = states.mean(axis=0)
        std = states.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        params = replace(params, state_mean=mean, state_std=std)
        states = (states - mean) / std
        targets = (targets - mean) / std
    params = replace(params, h_max=float(h.max()) if count else None)

    xb_all = np.hstack([states, values, offsets])
    hh_all = h[:, None]

    branch, trunk = params.branch, params.trunk
    st_b = init_adam(branch, schedule.base_lr, schedule.decay_rate, schedule.decay_every)
    st_t = init_adam(trunk, schedule.base_lr, schedule.decay_rate, schedule.decay_every)

    rng = np.random.default_rng(schedule.seed)
    history = []
    last_good = (branch, trunk)

    def full_loss(br, tr):
        beta = dense_forward(br, xb_all)
        tau = dense_forward(tr, hh_all)
        r = (beta.reshape(-1, n, q) * tau.reshape(-1, n, q)).sum(axis=2) - targets
        return float((r * r).sum() / count)

    for epoch in range(1, schedule.epochs + 1):
        perm = rng.permutation(count)
        try:
            for lo in range(0, count, schedule.batch_size):
                idx = perm[lo : lo + schedule.batch_size]
                xb, hh, y = xb_all[idx], hh_all[idx], targets[idx]
                bsz = idx.size
                beta, bcache = _forward_cached(branch, xb)
                tau, tcache = _forward_cached(trunk, hh)
                b3 = beta.reshape(bsz, n, q)
                t3 = tau.reshape(bsz, n, q)
                resid = (b3 * t3).sum(axis=2) - y
                dpred = (2.0 / bsz) * resid
                dbeta = (dpred[:, :, None] * t3).reshape(bsz, n * q)
                dtau = (dpred[:, :, None] * b3).reshape(bsz, n * q)
                gb, _ = _backward_cached(branch, bcache, dbeta)
                gt, _ = _backward_cached(trunk, tcache, dtau)
                branch, st_b = adam_step(branch, gb, st_b, epoch - 1)
                trunk, st_t = adam_step(trunk, gt, st_t, epoch - 1)
        except DivergenceError as exc:
            raise TrainingDivergedError(
                f"non-finite gradients at epoch {epoch}: {exc}",
                params=replace(params, branch=last_good[0], trunk=last_good[1]),
                history=history,
            ) from exc

        epoch_loss = full_loss(branch, trunk)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch}",
                params=replace(params, branch=last_good[0], trunk=last_good[1]),
                history=history,
            )
        last_good = (branch, trunk)
        history.append((epoch, epoch_loss))
        if progress is not None:
            progress(epoch, epoch_loss)

    return replace(params, branch=branch, trunk=trunk), history
