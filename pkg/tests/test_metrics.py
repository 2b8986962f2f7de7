import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from operon.data import get_system
from operon.exceptions import DivergenceError, MetricUndefinedError, ShapeError
from operon.metrics import (
    ErrorReport,
    evaluate_over_initial_conditions,
    evaluate_single,
    l2_relative_error,
    l2_relative_errors,
)
from operon.systems import InputSignal, Partition, Trajectory, integrate_interval


def traj(states, t0=0.0, dt=1.0):
    states = np.asarray(states, dtype=float)
    return Trajectory(t0 + dt * np.arange(states.shape[0]), states)


class TruthModel:
    """One-step wrapper around the reference integrator, for exactness tests."""

    def __init__(self, system, substeps=10):
        self.system = system
        self.substeps = substeps
        self.state_dim = system.state_dim
        self.num_sensors = 1
        self.h_max = None

    def predict_next(self, state, local_input, h):
        u = float(local_input.values[0])
        return integrate_interval(self.system, state, lambda t, x: u, 0.0, h, self.substeps)


class TestL2RelativeError:
    def test_identical_zero(self):
        a = traj([[1.0, 2.0], [3.0, 4.0]])
        assert l2_relative_error(a, a, 0) == 0.0

    def test_full_magnitude_error(self):
        truth = traj([[3.0], [4.0]])
        pred = traj([[0.0], [0.0]])
        assert l2_relative_error(pred, truth, 0) == pytest.approx(100.0)

    def test_hand_norm(self):
        truth = traj([[1.0], [0.0]])
        pred = traj([[1.0], [0.3]])
        assert l2_relative_error(pred, truth, 0) == pytest.approx(30.0)

    def test_zero_reference_raises_with_rmse(self):
        truth = traj([[0.0], [0.0]])
        pred = traj([[0.1], [0.3]])
        with pytest.raises(MetricUndefinedError) as info:
            l2_relative_error(pred, truth, 0)
        assert info.value.absolute_rmse == pytest.approx(np.sqrt((0.01 + 0.09) / 2))

    def test_grid_mismatch(self):
        with pytest.raises(ShapeError):
            l2_relative_error(traj([[1.0], [2.0]]), traj([[1.0], [2.0]], t0=5.0), 0)

    @given(st.floats(0.1, 1e6), st.integers(0, 5))
    @settings(max_examples=30, deadline=None)
    def test_scale_covariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        t = rng.standard_normal((6, 2)) + 3.0
        p = t + 0.1 * rng.standard_normal((6, 2))
        base = l2_relative_errors(traj(p), traj(t))
        scaled = l2_relative_errors(traj(scale * p), traj(scale * t))
        assert np.allclose(base, scaled, rtol=1e-9)


class TestErrorReport:
    def test_json_round_trip(self):
        rep = ErrorReport([1.5, 2.5], [1.5, 2.5], [0.25, 0.5], 100, 3)
        again = ErrorReport.from_json(rep.to_json())
        assert np.array_equal(again.mean, rep.mean)
        assert np.array_equal(again.std, rep.std)
        assert again.num_trajectories == 100 and again.divergence_count == 3

    def test_csv_row(self):
        rep = ErrorReport([1.0, 2.0], [1.0, 2.0], [0.0, 0.5], 10, 0)
        assert rep.csv_header() == "mean_x0,mean_x1,std_x0,std_x1,num_trajectories,divergence_count"
        assert rep.csv_row().endswith(",10,0")


class TestEvaluate:
    def test_truth_model_zero_error(self):
        system = get_system("pendulum")
        part = Partition.uniform(0, 2, 0.1)
        report = evaluate_over_initial_conditions(
            TruthModel(system), system, InputSignal.constant(0.5), part,
            np.array([[-1.0, 1.0], [0.0, 0.0]]), count=5, seed=7,
        )
        assert np.allclose(report.mean, 0.0, atol=1e-12)
        assert np.allclose(report.std, 0.0, atol=1e-12)
        assert report.divergence_count == 0

    def test_single_trajectory_stats(self):
        system = get_system("pendulum")
        part = Partition.uniform(0, 1, 0.1)
        report = evaluate_single(
            TruthModel(system), system, np.array([0.5, 0.0]),
            InputSignal.constant(0.0), part,
        )
        assert report.num_trajectories == 1
        assert np.all(report.std == 0.0)
        assert np.array_equal(report.mean, report.per_component_l2_rel)

    def test_deterministic(self):
        system = get_system("pendulum")
        part = Partition.uniform(0, 1, 0.1)
        kw = dict(
            model=TruthModel(system, substeps=3), system=system,
            signal=InputSignal.linear_feedback(-0.8, 1), partition=part,
            ic_box=np.array([[-1.0, 1.0], [0.0, 0.0]]), count=4, seed=11,
        )
        a = evaluate_over_initial_conditions(**kw)
        b = evaluate_over_initial_conditions(**kw)
        assert a.to_json() == b.to_json()

    def test_diverging_model_counted_and_excluded(self):
        system = get_system("pendulum")

        class Explodes(TruthModel):
            def predict_next(self, state, local_input, h):
                if abs(state[0]) > 0.5:  # blow up for half the draws
                    return state * 1e9
                return super().predict_next(state, local_input, h)

        part = Partition.uniform(0, 0.5, 0.1)
        report = evaluate_over_initial_conditions(
            Explodes(system), system, InputSignal.constant(0.0), part,
            np.array([[-1.0, 1.0], [0.0, 0.0]]), count=8, seed=3,
        )
        assert 0 < report.divergence_count < 8
        assert np.all(np.isfinite(report.mean))

    def test_all_diverged_is_failure(self):
        system = get_system("pendulum")

        class AlwaysExplodes(TruthModel):
            def predict_next(self, state, local_input, h):
                return state + 1e9

        with pytest.raises(DivergenceError):
            evaluate_over_initial_conditions(
                AlwaysExplodes(system), system, InputSignal.constant(0.0),
                Partition.uniform(0, 0.5, 0.1),
                np.array([[-1.0, 1.0], [0.0, 0.0]]), count=3, seed=0,
            )
