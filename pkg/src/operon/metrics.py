"""Trajectory error metrics and multi-initial-condition evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError, MetricUndefinedError, ShapeError
from .rollout import RolloutRequest, run_scheme
from .systems import Partition, Trajectory, simulate_truth


def _check_grids(pred: Trajectory, truth: Trajectory):
    if pred.times.shape != truth.times.shape or np.any(pred.times != truth.times):
        raise ShapeError("prediction and truth trajectories use different time grids")


def l2_relative_error(pred: Trajectory, truth: Trajectory, component: int) -> float:
    """100 * ||pred_i - truth_i||_2 / ||truth_i||_2 over the partition nodes."""
    _check_grids(pred, truth)
    p = pred.states[:, component]
    t = truth.states[:, component]
    denom = float(np.linalg.norm(t))
    if denom == 0.0:
        rmse = float(np.sqrt(np.mean((p - t) ** 2)))
        raise MetricUndefinedError(
            f"component {component} of the reference is identically zero; "
            f"absolute RMSE = {rmse:.6g}",
            absolute_rmse=rmse,
        )
    return 100.0 * float(np.linalg.norm(p - t)) / denom


def l2_relative_errors(pred: Trajectory, truth: Trajectory) -> np.ndarray:
    return np.array(
        [l2_relative_error(pred, truth, i) for i in range(truth.state_dim)]
    )


@dataclass
class ErrorReport:
    """Per-component trajectory errors (percent) aggregated over initial conditions.

    Diverged rollouts are excluded from mean/std and counted.
    """

    per_component_l2_rel: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    num_trajectories: int
    divergence_count: int

    def __post_init__(self):
        self.per_component_l2_rel = np.asarray(self.per_component_l2_rel, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.std = np.asarray(self.std, dtype=float)

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_component_l2_rel": self.per_component_l2_rel.tolist(),
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
                "num_trajectories": self.num_trajectories,
                "divergence_count": self.divergence_count,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ErrorReport":
        doc = json.loads(text)
        return cls(
            doc["per_component_l2_rel"],
            doc["mean"],
            doc["std"],
            doc["num_trajectories"],
            doc["divergence_count"],
        )

    def csv_header(self) -> str:
        n = self.mean.size
        cols = [f"mean_x{i}" for i in range(n)] + [f"std_x{i}" for i in range(n)]
        return ",".join(cols + ["num_trajectories", "divergence_count"])

    def csv_row(self) -> str:
        vals = [f"{v:.17g}" for v in (*self.mean, *self.std)]
        return ",".join(vals + [str(self.num_trajectories), str(self.divergence_count)])


def evaluate_single(model, system, x0, signal, partition: Partition,
                    scheme="recursive", substeps=10) -> ErrorReport:
    """Error report for one initial condition."""
    truth = simulate_truth(system, x0, signal, partition, substeps)
    threshold = 10.0 * float(np.abs(system.state_space).max())
    pred = run_scheme(RolloutRequest(model, x0, partition, signal, scheme, threshold))
    if pred.diverged or truth.diverged:
        raise DivergenceError("rollout diverged for the requested initial condition")
    errs = l2_relative_errors(pred, truth)
    return ErrorReport(errs, errs, np.zeros_like(errs), 1, 0)


def evaluate_over_initial_conditions(
    model,
    system,
    signal,
    partition: Partition,
    ic_box,
    count,
    seed,
    scheme="recursive",
    substeps=10,
) -> ErrorReport:
    """Sample `count` initial conditions uniformly from `ic_box` ((n, 2) rows
    of [low, high]; degenerate rows pin a component), evaluate each, and
    aggregate per-component mean/std, excluding and counting diverged rollouts.
    """
    ic_box = np.asarray(ic_box, dtype=float)
    if ic_box.shape != (system.state_dim, 2):
        raise ShapeError(f"ic_box must have shape ({system.state_dim}, 2)")
    rng = np.random.default_rng(seed)
    ics = rng.uniform(ic_box[:, 0], ic_box[:, 1], size=(count, system.state_dim))
    threshold = 10.0 * float(np.abs(system.state_space).max())

    per_traj = []
    diverged = 0
    for x0 in ics:
        truth = simulate_truth(system, x0, signal, partition, substeps)
        pred = run_scheme(RolloutRequest(model, x0, partition, signal, scheme, threshold))
        if pred.diverged or truth.diverged or pred.times.size != partition.times.size:
            diverged += 1
            continue
        per_traj.append(l2_relative_errors(pred, truth))
    if not per_traj:
        raise DivergenceError("all rollouts diverged; nothing to aggregate")
    errs = np.stack(per_traj)
    return ErrorReport(errs.mean(axis=0), errs.mean(axis=0), errs.std(axis=0),
                       count, diverged)
