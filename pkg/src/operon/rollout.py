"""Long-horizon rollout schemes over a trained one-step model.

Two families:

* ``recursive``      -- feed each predicted state back as the next step's
  input state and query the model at the partition step size.
* ``rk2`` / ``rk2_corrector`` -- improved-Euler update built from the model's
  derivative with respect to its step-size input: k1 at h=0 estimates the
  vector field at the current node, k2 at h=h_n at the end of the predicted
  step, and the state advances by (h/2)(k1 + k2). The corrector variant
  computes k2 with the next interval's input samples when the signal can be
  evaluated ahead of time.

A model is anything exposing state_dim, num_sensors, predict_next(state,
local_input, h) and, for the rk2 schemes, predict_next_dh.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ShapeError
from .operator import DeepONetParams, LocalInput, branch_features, combine_features_dh
from .systems import InputSignal, Partition, Trajectory

SCHEMES = ("recursive", "rk2", "rk2_corrector")

DEFAULT_DIVERGENCE_THRESHOLD = 1e6


@dataclass
class RolloutRequest:
    model: object
    x0: np.ndarray
    partition: Partition
    signal: InputSignal
    scheme: str = "recursive"
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.model.state_dim,):
            raise ShapeError(
                f"x0 must have shape ({self.model.state_dim},), got {self.x0.shape}"
            )
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; known: {SCHEMES}")
        h_max = getattr(self.model, "h_max", None)
        steps = self.partition.steps
        if h_max is not None and steps.size and steps.max() > h_max * (1 + 1e-12):
            warnings.warn(
                f"partition step {steps.max():.6g} exceeds the trained step cap "
                f"{h_max:.6g}; the model extrapolates in its step-size input",
                stacklevel=2,
            )


def sensor_input(num_sensors, signal, t, x, h) -> LocalInput:
    """Local input samples for the interval [t, t+h].

    One sensor sits at t; with more sensors they are spread evenly to t+h.
    Feedback signals are evaluated at the supplied (current) state.
    """
    if num_sensors == 1:
        return LocalInput(np.array([signal(t, x)]), np.zeros(1))
    rel = np.linspace(0.0, h, num_sensors)
    values = np.array([signal(t + d, x) for d in rel])
    return LocalInput(values, -rel)


def _bad(x, threshold):
    return not np.all(np.isfinite(x)) or np.max(np.abs(x)) > threshold


def recursive_predict(request: RolloutRequest) -> Trajectory:
    """Recursive forward passes; feedback signals see the predicted state."""
    model, signal = request.model, request.signal
    times = request.partition.times
    states = [request.x0]
    x = request.x0
    diverged = False
    for n in range(times.size - 1):
        h = times[n + 1] - times[n]
        li = sensor_input(model.num_sensors, signal, times[n], x, h)
        x = model.predict_next(x, li, h)
        if _bad(x, request.divergence_threshold):
            diverged = True
            break
        states.append(x)
    return Trajectory(times[: len(states)], np.stack(states), diverged=diverged)


def _rk2_rollout(request: RolloutRequest, corrector: bool) -> Trajectory:
    model, signal = request.model, request.signal
    fast = isinstance(model, DeepONetParams)  # branch features reusable across h
    times = request.partition.times
    states = [request.x0]
    x = request.x0
    diverged = False
    for n in range(times.size - 1):
        h = times[n + 1] - times[n]
        li = sensor_input(model.num_sensors, signal, times[n], x, h)
        if fast:
            beta = branch_features(model, x, li)
            _, k1 = combine_features_dh(model, beta, 0.0)
            xbar, k2 = combine_features_dh(model, beta, h)
        else:
            _, k1 = model.predict_next_dh(x, li, 0.0)
            xbar, k2 = model.predict_next_dh(x, li, h)
        if corrector:
            # k2 from the next interval's input over a window of the same
            # step size; feedback signals see the predictor state
            li_next = sensor_input(model.num_sensors, signal, times[n + 1], xbar, h)
            if fast:
                _, k2 = combine_features_dh(model, branch_features(model, x, li_next), h)
            else:
                _, k2 = model.predict_next_dh(x, li_next, h)
        x = x + 0.5 * h * (k1 + k2)
        if _bad(x, request.divergence_threshold):
            diverged = True
            break
        states.append(x)
    return Trajectory(times[: len(states)], np.stack(states), diverged=diverged)


def rk2_predict(request: RolloutRequest) -> Trajectory:
    """Improved-Euler rollout from the model's step-size derivatives."""
    return _rk2_rollout(request, corrector=False)


def rk2_corrector_predict(request: RolloutRequest) -> Trajectory:
    """rk2 with k2 computed from the next interval's input samples."""
    return _rk2_rollout(request, corrector=True)


_RUNNERS = {
    "recursive": recursive_predict,
    "rk2": rk2_predict,
    "rk2_corrector": rk2_corrector_predict,
}


def run_scheme(request: RolloutRequest) -> Trajectory:
    return _RUNNERS[request.scheme](request)


def predict_batch(model, x0s, partition, signal, scheme="recursive",
                  divergence_threshold=DEFAULT_DIVERGENCE_THRESHOLD):
    """Independent rollouts for several initial conditions, ordered by input index."""
    return [
        run_scheme(RolloutRequest(model, x0, partition, signal, scheme, divergence_threshold))
        for x0 in x0s
    ]


@dataclass
class ErrorProfile:
    """Per-node Euclidean error and its running maximum."""

    times: np.ndarray
    errors: np.ndarray
    envelope: np.ndarray


def rollout_error_profile(pred: Trajectory, truth: Trajectory) -> ErrorProfile:
    if pred.times.shape != truth.times.shape or np.any(pred.times != truth.times):
        raise ShapeError("prediction and truth trajectories use different time grids")
    err = np.linalg.norm(pred.states - truth.states, axis=1)
    return ErrorProfile(pred.times.copy(), err, np.maximum.accumulate(err))
