"""Comparison models: a next-state dense network over the concatenated
(state, input samples, offsets, step size) vector, and an unweighted ensemble
of such networks that differ only by seed.

Both consume the same triplet datasets as the operator model and roll out
through the same recursive loop.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._seeding import subseed
from .exceptions import (
    ConfigurationError,
    DivergenceError,
    ShapeError,
    TrainingDivergedError,
)
from .nn import adam_step, dense_forward, init_adam, init_dense, _backward_cached, _forward_cached
from .operator import LocalInput, TrainingSchedule, stack_triplets


@dataclass
class FnnParams:
    """Plain next-state regressor; input width is state_dim + 2*num_sensors + 1.

    With ``residual`` set the network predicts the state increment instead of
    the absolute next state.
    """

    net: object
    state_dim: int
    num_sensors: int
    residual: bool = False
    h_max: float | None = None

    def __post_init__(self):
        if self.net.input_width != self.state_dim + 2 * self.num_sensors + 1:
            raise ShapeError("net input width must be state_dim + 2*num_sensors + 1")
        if self.net.output_width != self.state_dim:
            raise ShapeError("net output width must be state_dim")

    def predict_next(self, state, local_input, h):
        return fnn_forward(self, state, local_input, h)


@dataclass
class EnsembleParams:
    """Unweighted mean of independently initialized members."""

    members: list

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("ensemble needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            if (m.state_dim, m.num_sensors, m.residual) != (
                first.state_dim, first.num_sensors, first.residual,
            ):
                raise ConfigurationError("ensemble members must share one configuration")

    @property
    def state_dim(self):
        return self.members[0].state_dim

    @property
    def num_sensors(self):
        return self.members[0].num_sensors

    @property
    def h_max(self):
        return self.members[0].h_max

    def predict_next(self, state, local_input, h):
        return ensemble_forward(self, state, local_input, h)


def _assemble(state, local_input: LocalInput, h):
    state = np.asarray(state, dtype=float)
    return np.concatenate([state, local_input.values, local_input.offsets, [float(h)]])


def fnn_forward(params: FnnParams, state, local_input, h):
    state = np.asarray(state, dtype=float)
    if state.shape != (params.state_dim,):
        raise ShapeError(f"state must have shape ({params.state_dim},)")
    if local_input.values.size != params.num_sensors:
        raise ShapeError(f"local input must carry {params.num_sensors} sensors")
    out = dense_forward(params.net, _assemble(state, local_input, h))
    return state + out if params.residual else out


def ensemble_forward(params: EnsembleParams, state, local_input, h):
    preds = [fnn_forward(m, state, local_input, h) for m in params.members]
    return np.mean(preds, axis=0)


def train_fnn(
    triplets,
    schedule: TrainingSchedule,
    hidden=(128, 128, 128),
    activation="tanh",
    residual=False,
    progress=None,
) -> tuple:
    """Same minibatch-Adam protocol as the operator model; returns (params, history)."""
    states, values, offsets, h, targets = stack_triplets(triplets)
    n = states.shape[1]
    x_all = np.hstack([states, values, offsets, h[:, None]])
    y_all = targets - states if residual else targets
    count = x_all.shape[0]

    net = init_dense(
        [x_all.shape[1], *hidden, n], activation, "plain", seed=subseed(schedule.seed, "init")
    )
    state = init_adam(net, schedule.base_lr, schedule.decay_rate, schedule.decay_every)
    rng = np.random.default_rng(schedule.seed)
    history = []
    last_good = net

    for epoch in range(1, schedule.epochs + 1):
        perm = rng.permutation(count)
        try:
            for lo in range(0, count, schedule.batch_size):
                idx = perm[lo : lo + schedule.batch_size]
                out, cache = _forward_cached(net, x_all[idx])
                grad_out = (2.0 / idx.size) * (out - y_all[idx])
                grads, _ = _backward_cached(net, cache, grad_out)
                net, state = adam_step(net, grads, state, epoch - 1)
        except DivergenceError as exc:
            raise TrainingDivergedError(
                f"non-finite gradients at epoch {epoch}: {exc}",
                params=FnnParams(last_good, n, values.shape[1], residual, float(h.max())),
                history=history,
            ) from exc
        resid = dense_forward(net, x_all) - y_all
        epoch_loss = float((resid * resid).sum() / count)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch}",
                params=FnnParams(last_good, n, values.shape[1], residual, float(h.max())),
                history=history,
            )
        last_good = net
        history.append((epoch, epoch_loss))
        if progress is not None:
            progress(epoch, epoch_loss)

    params = FnnParams(net, n, values.shape[1], residual, float(h.max()))
    return params, history


def train_ensemble(
    triplets,
    num_members,
    schedule: TrainingSchedule,
    hidden=(128, 128, 128),
    activation="tanh",
    residual=False,
    progress=None,
) -> tuple:
    """Members differ only by seed (member i trains with schedule.seed + i),
    so a one-member ensemble reproduces train_fnn exactly."""
    if num_members < 1:
        raise ConfigurationError("num_members must be >= 1")
    members = []
    histories = []
    for i in range(num_members):
        member_schedule = replace(schedule, seed=schedule.seed + i)
        params, history = train_fnn(
            triplets, member_schedule, hidden, activation, residual,
            progress=(lambda e, l, i=i: progress(i, e, l)) if progress else None,
        )
        members.append(params)
        histories.append(history)
    return EnsembleParams(members), histories
