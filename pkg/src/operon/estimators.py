"""Scikit-learn style estimators over the one-step models.

The feature matrix packs one step per row:

    [state (n) | sensor values (n_s) | sensor offsets (n_s) | step size h]

and the target matrix holds the next states (N, n). The state dimension is
inferred from the matrix width and ``num_sensors``, so the estimators compose
with pipelines, grid search, and cloning like any other regressor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .baselines import train_ensemble, train_fnn
from .exceptions import ConfigurationError
from .operator import (
    DeepONetConfig,
    LocalInput,
    TrainingSchedule,
    _forward_batch,
    _train_arrays,
)
from .rollout import RolloutRequest, run_scheme


def pack_features(states, values, offsets, h) -> np.ndarray:
    """Build the flat feature matrix from its column groups."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    h = np.asarray(h, dtype=float).reshape(-1, 1)
    return np.hstack([states, values, offsets, h])


def unpack_features(X, num_sensors):
    """Split the flat feature matrix back into (states, values, offsets, h)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[1] - 2 * num_sensors - 1
    if n < 1:
        raise ConfigurationError(
            f"feature width {X.shape[1]} leaves no state columns for "
            f"num_sensors={num_sensors}"
        )
    ns = num_sensors
    return X[:, :n], X[:, n : n + ns], X[:, n + ns : n + 2 * ns], X[:, -1]


def triplets_to_arrays(triplets):
    """(X, y) matrices for the estimator API from a triplet list."""
    from .operator import stack_triplets

    states, values, offsets, h, nexts = stack_triplets(triplets)
    return pack_features(states, values, offsets, h), nexts


class _OneStepRegressor(RegressorMixin, BaseEstimator):
    """Shared fit/predict plumbing; subclasses provide _fit_model/_predict_net."""

    def _validate(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        states, values, offsets, h = unpack_features(X, self.num_sensors)
        if y.shape[1] != states.shape[1]:
            raise ConfigurationError(
                f"y width {y.shape[1]} != inferred state width {states.shape[1]}"
            )
        if np.any(h < 0):
            raise ConfigurationError("step-size column must be non-negative")
        return states, values, offsets, h, y

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"X has {X.shape[1]} features; fitted with {self.n_features_in_}"
            )
        states, values, offsets, h = unpack_features(X, self.num_sensors)
        return self._predict_arrays(states, values, offsets, h)

    def _predict_arrays(self, states, values, offsets, h):
        model = self.model_
        out = np.empty_like(states)
        for i in range(states.shape[0]):
            li = LocalInput(values[i], offsets[i])
            out[i] = model.predict_next(states[i], li, float(h[i]))
        return out

    def rollout(self, x0, partition, signal, scheme="recursive",
                divergence_threshold=1e6):
        """Convenience wrapper around the rollout schemes for a fitted model."""
        check_is_fitted(self, "model_")
        return run_scheme(
            RolloutRequest(self.model_, x0, partition, signal, scheme, divergence_threshold)
        )


class DeepONetRegressor(_OneStepRegressor):
    """Branch/trunk one-step operator as a scikit-learn regressor."""

    def __init__(
        self,
        num_sensors=1,
        basis_per_output=20,
        hidden_width=100,
        hidden_depth=3,
        activation="tanh",
        architecture="modified",
        standardize=False,
        epochs=2000,
        batch_size=256,
        learning_rate=1e-3,
        decay_rate=0.9,
        decay_every=2000,
        random_state=0,
    ):
        self.num_sensors = num_sensors
        self.basis_per_output = basis_per_output
        self.hidden_width = hidden_width
        self.hidden_depth = hidden_depth
        self.activation = activation
        self.architecture = architecture
        self.standardize = standardize
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decay_rate = decay_rate
        self.decay_every = decay_every
        self.random_state = random_state

    def fit(self, X, y):
        states, values, offsets, h, y = self._validate(X, y)
        config = DeepONetConfig.create(
            state_dim=states.shape[1],
            num_sensors=self.num_sensors,
            basis_per_output=self.basis_per_output,
            hidden_width=self.hidden_width,
            hidden_depth=self.hidden_depth,
            activation=self.activation,
            architecture=self.architecture,
            seed=self.random_state,
        )
        schedule = TrainingSchedule(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.learning_rate,
            decay_rate=self.decay_rate,
            decay_every=self.decay_every,
            seed=self.random_state,
            standardize=self.standardize,
        )
        self.model_, self.history_ = _train_arrays(
            states, values, offsets, h, y, config, schedule
        )
        self.n_features_in_ = states.shape[1] + 2 * self.num_sensors + 1
        return self

    def _predict_arrays(self, states, values, offsets, h):
        # batched path: one network pass instead of a per-row loop
        net = _forward_batch(self.model_, states, values, offsets, h)
        if self.model_.state_mean is not None:
            net = self.model_.state_mean + self.model_.state_std * net
        return net


class NextStateRegressor(_OneStepRegressor):
    """Plain dense next-state network (the non-operator baseline)."""

    def __init__(
        self,
        num_sensors=1,
        hidden=(128, 128, 128),
        activation="tanh",
        residual=False,
        epochs=2000,
        batch_size=256,
        learning_rate=1e-3,
        decay_rate=0.9,
        decay_every=2000,
        random_state=0,
    ):
        self.num_sensors = num_sensors
        self.hidden = hidden
        self.activation = activation
        self.residual = residual
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decay_rate = decay_rate
        self.decay_every = decay_every
        self.random_state = random_state

    def _schedule(self):
        return TrainingSchedule(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.learning_rate,
            decay_rate=self.decay_rate,
            decay_every=self.decay_every,
            seed=self.random_state,
        )

    def _triplets(self, X, y):
        from .data import TrainingTriplet

        states, values, offsets, h, y = self._validate(X, y)
        return [
            TrainingTriplet(states[i], LocalInput(values[i], offsets[i]), float(h[i]), y[i])
            for i in range(states.shape[0])
        ]

    def fit(self, X, y):
        triplets = self._triplets(X, y)
        self.model_, self.history_ = train_fnn(
            triplets, self._schedule(), tuple(self.hidden), self.activation, self.residual
        )
        self.n_features_in_ = np.asarray(X).shape[1]
        return self


class EnsembleNextStateRegressor(NextStateRegressor):
    """Mean of several independently seeded next-state networks."""

    def __init__(
        self,
        num_sensors=1,
        n_members=5,
        hidden=(128, 128, 128),
        activation="tanh",
        residual=False,
        epochs=2000,
        batch_size=256,
        learning_rate=1e-3,
        decay_rate=0.9,
        decay_every=2000,
        random_state=0,
    ):
        super().__init__(
            num_sensors=num_sensors,
            hidden=hidden,
            activation=activation,
            residual=residual,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            decay_rate=decay_rate,
            decay_every=decay_every,
            random_state=random_state,
        )
        self.n_members = n_members

    def fit(self, X, y):
        triplets = self._triplets(X, y)
        self.model_, self.histories_ = train_ensemble(
            triplets, self.n_members, self._schedule(), tuple(self.hidden),
            self.activation, self.residual,
        )
        self.n_features_in_ = np.asarray(X).shape[1]
        return self
