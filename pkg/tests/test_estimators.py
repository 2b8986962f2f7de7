import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import GridSearchCV
from sklearn.pipeline import Pipeline

from operon.data import SamplingSpec, generate
from operon.estimators import (
    DeepONetRegressor,
    EnsembleNextStateRegressor,
    NextStateRegressor,
    pack_features,
    triplets_to_arrays,
    unpack_features,
)
from operon.exceptions import ConfigurationError
from operon.operator import forward


@pytest.fixture(scope="module")
def pendulum_xy():
    triplets = generate(SamplingSpec("pendulum", 200, (0.0, 0.02), seed=17))
    return triplets_to_arrays(triplets)


def tiny_deeponet(**kw):
    defaults = dict(basis_per_output=4, hidden_width=16, hidden_depth=2,
                    epochs=40, batch_size=64, random_state=0)
    defaults.update(kw)
    return DeepONetRegressor(**defaults)


class TestFeaturePacking:
    def test_round_trip(self):
        states = np.arange(6.0).reshape(2, 3)
        values = np.array([[1.0], [2.0]])
        offsets = np.zeros((2, 1))
        h = np.array([0.1, 0.2])
        X = pack_features(states, values, offsets, h)
        assert X.shape == (2, 6)
        s, v, o, hh = unpack_features(X, num_sensors=1)
        assert np.array_equal(s, states) and np.array_equal(v, values)
        assert np.array_equal(o, offsets) and np.array_equal(hh, h)

    def test_width_too_small(self):
        with pytest.raises(ConfigurationError):
            unpack_features(np.zeros((3, 3)), num_sensors=1)


class TestDeepONetRegressor:
    def test_fit_predict_shapes(self, pendulum_xy):
        X, y = pendulum_xy
        est = tiny_deeponet().fit(X, y)
        pred = est.predict(X)
        assert pred.shape == y.shape
        assert est.n_features_in_ == 5  # state(2) + value + offset + h
        assert est.history_[-1][1] < est.history_[0][1]

    def test_predict_matches_functional_forward(self, pendulum_xy):
        from operon.operator import LocalInput

        X, y = pendulum_xy
        est = tiny_deeponet(epochs=5).fit(X, y)
        row = X[3]
        single = forward(est.model_, row[:2], LocalInput([row[2]], [row[3]]), row[4])
        assert np.allclose(est.predict(row[None, :])[0], single, rtol=1e-12, atol=1e-14)

    def test_not_fitted_error(self, pendulum_xy):
        X, _ = pendulum_xy
        with pytest.raises(NotFittedError):
            tiny_deeponet().predict(X)

    def test_clone_and_get_params(self):
        est = tiny_deeponet(standardize=True)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_determinism(self, pendulum_xy):
        X, y = pendulum_xy
        a = tiny_deeponet(epochs=10).fit(X, y).predict(X[:5])
        b = tiny_deeponet(epochs=10).fit(X, y).predict(X[:5])
        assert np.array_equal(a, b)

    def test_y_width_checked(self, pendulum_xy):
        X, y = pendulum_xy
        with pytest.raises(ConfigurationError):
            tiny_deeponet().fit(X, y[:, :1])

    def test_grid_search_smoke(self, pendulum_xy):
        X, y = pendulum_xy
        grid = GridSearchCV(
            tiny_deeponet(epochs=5),
            {"basis_per_output": [2, 4]},
            cv=2,
        )
        grid.fit(X[:64], y[:64])
        assert grid.best_params_["basis_per_output"] in (2, 4)

    def test_rollout_convenience(self, pendulum_xy):
        from operon.systems import InputSignal, Partition

        X, y = pendulum_xy
        est = tiny_deeponet(epochs=5).fit(X, y)
        traj = est.rollout(np.array([0.2, 0.0]), Partition.uniform(0, 0.1, 0.01),
                           InputSignal.constant(0.0))
        assert traj.times.size == 11


class TestBaselineRegressors:
    def test_fnn_fit_predict(self, pendulum_xy):
        X, y = pendulum_xy
        est = NextStateRegressor(hidden=(16, 16), epochs=30, random_state=1).fit(X, y)
        assert est.predict(X).shape == y.shape

    def test_pipeline_composition(self, pendulum_xy):
        X, y = pendulum_xy
        pipe = Pipeline([
            ("model", NextStateRegressor(hidden=(8,), epochs=5, random_state=0)),
        ])
        pipe.fit(X, y)
        assert pipe.predict(X[:3]).shape == (3, 2)

    def test_ensemble_fit(self, pendulum_xy):
        X, y = pendulum_xy
        est = EnsembleNextStateRegressor(
            n_members=2, hidden=(8,), epochs=5, random_state=0
        ).fit(X, y)
        assert len(est.model_.members) == 2
        assert est.predict(X[:4]).shape == (4, 2)

    def test_single_member_matches_fnn(self, pendulum_xy):
        X, y = pendulum_xy
        fnn = NextStateRegressor(hidden=(8,), epochs=5, random_state=3).fit(X, y)
        ens = EnsembleNextStateRegressor(
            n_members=1, hidden=(8,), epochs=5, random_state=3
        ).fit(X, y)
        assert np.array_equal(fnn.predict(X[:8]), ens.predict(X[:8]))
