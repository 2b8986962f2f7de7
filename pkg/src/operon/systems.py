"""Benchmark ODE systems, input signals, time partitions, and the RK-4
reference integrator used for dataset labels and truth trajectories.

Vector fields broadcast over leading axes: ``f(x, u)`` accepts ``x`` of shape
(..., state_dim) and scalar or (...,)-shaped ``u``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DataFormatError, DivergenceError, ShapeError

GRAVITY = 9.81  # m/s^2

BLOWUP_NORM = 1e6  # truth simulation aborts past this magnitude


@dataclass
class OdeSystem:
    """A named vector field dx/dt = f(x, u) with sampling boxes.

    ``state_space`` is an (n, 2) array of [low, high] rows; ``input_space``
    is a (low, high) pair for the scalar input.
    """

    name: str
    state_dim: int
    f: callable
    state_space: np.ndarray
    input_space: tuple


def lorenz63() -> OdeSystem:
    """Chaotic three-state system; autonomous (the input is ignored)."""
    sigma, rho, beta = 10.0, 28.0, 8.0 / 3.0

    def f(x, u):
        del u
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        return np.stack(
            [sigma * (x2 - x1), x1 * (rho - x3) - x2, x1 * x2 - beta * x3], axis=-1
        )

    box = np.array([[-17.0, 20.0], [-23.0, 28.0], [0.0, 50.0]])
    return OdeSystem("lorenz63", 3, f, box, (0.0, 0.0))


def predator_prey() -> OdeSystem:
    """Lotka-Volterra dynamics with the input added to the prey equation."""

    def f(x, u):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x1 - x1 * x2 + u, -x2 + x1 * x2], axis=-1)

    box = np.array([[0.0, 5.0], [0.0, 5.0]])
    return OdeSystem("predator_prey", 2, f, box, (0.0, 5.0))


def pendulum() -> OdeSystem:
    """Torque-driven pendulum, state (angle, angular velocity).

    Mass 1 kg, length 1 m, inertia about the midpoint ml^2/12, friction 0.01.
    """
    m, length, b = 1.0, 1.0, 0.01
    inertia = m * length**2 / 12.0
    denom = 0.25 * m * length**2 + inertia

    def f(x, u):
        theta, omega = x[..., 0], x[..., 1]
        alpha = (u - b * omega - 0.5 * m * length * GRAVITY * np.sin(theta)) / denom
        return np.stack([omega, alpha], axis=-1)

    box = np.array([[-np.pi, np.pi], [-8.0, 8.0]])
    return OdeSystem("pendulum", 2, f, box, (-2.0, 2.0))


def cart_pole() -> OdeSystem:
    """Cart-pole with friction, state (angle, angular velocity, position, velocity).

    Pole length 0.5 m, pole and cart mass 0.5 kg each, friction 0.01. The
    input is the horizontal force on the cart.
    """
    length, m_p, m_c, b = 0.5, 0.5, 0.5, 0.01
    m_tot = m_c + m_p

    def f(x, u):
        theta, omega, _, vel = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
        sin_t, cos_t = np.sin(theta), np.cos(theta)
        alpha = (GRAVITY * sin_t + cos_t * ((-u - m_p * length * omega**2 * sin_t) / m_tot)) / (
            length * (4.0 / 3.0 - m_p * cos_t**2 / m_tot)
        )
        accel = (u - b * vel + m_p * length * (omega**2 * sin_t - alpha * cos_t)) / m_tot
        return np.stack([omega, alpha, np.broadcast_to(vel, np.shape(theta)), accel], axis=-1)

    box = np.array([[-2 * np.pi, 2 * np.pi], [-np.pi, np.pi], [-2.0, 2.0], [-1.0, 1.0]])
    return OdeSystem("cart_pole", 4, f, box, (-5.0, 5.0))


# --- input signals ---------------------------------------------------------

_EXPR_GLOBALS = {"__builtins__": {}}
_EXPR_NAMES = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp,
    "log": math.log, "sqrt": math.sqrt, "abs": abs, "pi": math.pi, "e": math.e,
}


@dataclass
class InputSignal:
    """A pure, evaluable input u(t, x).

    Kinds: ``constant`` (value), ``ramp`` (t/100), ``time_expr`` (expression in
    t), ``linear_feedback`` (gain * x[component]), and the non-serializable
    ``time_function`` / ``state_feedback`` wrapping arbitrary callables.
    """

    kind: str
    value: float = 0.0
    expr: str | None = None
    gain: float = 0.0
    component: int = 0
    fn: callable | None = None
    _code: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind == "time_expr":
            self._code = compile(self.expr, "<signal>", "eval")

    def __call__(self, t, x):
        if self.kind == "constant":
            return self.value
        if self.kind == "ramp":
            return t / 100.0
        if self.kind == "time_expr":
            return float(eval(self._code, _EXPR_GLOBALS, {**_EXPR_NAMES, "t": t}))
        if self.kind == "linear_feedback":
            return self.gain * float(x[self.component])
        if self.kind == "time_function":
            return float(self.fn(t))
        if self.kind == "state_feedback":
            return float(self.fn(x))
        raise ConfigurationError(f"unknown signal kind {self.kind!r}")

    @classmethod
    def constant(cls, value):
        return cls("constant", value=float(value))

    @classmethod
    def ramp(cls):
        return cls("ramp")

    @classmethod
    def time_expr(cls, expr):
        return cls("time_expr", expr=expr)

    @classmethod
    def linear_feedback(cls, gain, component=0):
        return cls("linear_feedback", gain=float(gain), component=int(component))

    @classmethod
    def time_function(cls, fn):
        return cls("time_function", fn=fn)

    @classmethod
    def state_feedback(cls, fn):
        return cls("state_feedback", fn=fn)

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "ramp":
            return {"kind": "ramp"}
        if self.kind == "time_expr":
            return {"kind": "time_expr", "expr": self.expr}
        if self.kind == "linear_feedback":
            return {"kind": "linear_feedback", "gain": self.gain, "component": self.component}
        raise ConfigurationError(f"signal kind {self.kind!r} is not serializable")

    @classmethod
    def from_spec(cls, spec: dict) -> "InputSignal":
        kind = spec.get("kind")
        if kind == "constant":
            return cls.constant(spec["value"])
        if kind == "ramp":
            return cls.ramp()
        if kind == "time_expr":
            return cls.time_expr(spec["expr"])
        if kind == "linear_feedback":
            return cls.linear_feedback(spec["gain"], spec.get("component", 0))
        raise ConfigurationError(f"unknown signal spec {spec!r}")


# --- partitions and trajectories -------------------------------------------


@dataclass
class Partition:
    """A strictly increasing time grid t_0 < ... < t_M, possibly irregular."""

    times: np.ndarray
    h_max: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1:
            raise ConfigurationError("partition needs a 1-D array of at least one time")
        steps = np.diff(self.times)
        if np.any(steps <= 0):
            raise ConfigurationError("partition times must be strictly increasing")
        if self.h_max is not None and steps.size and steps.max() > self.h_max + 1e-12:
            raise ConfigurationError(f"partition step exceeds configured h_max={self.h_max}")

    @classmethod
    def uniform(cls, start, stop, step, h_max=None):
        n = int(round((stop - start) / step))
        if n < 1 or abs(start + n * step - stop) > 1e-9 * max(1.0, abs(stop)):
            raise ConfigurationError(f"[{start}, {stop}] is not a whole number of steps {step}")
        return cls(start + step * np.arange(n + 1), h_max=h_max)

    @property
    def steps(self):
        return np.diff(self.times)

    def __len__(self):
        return self.times.size


@dataclass
class Trajectory:
    """Time-stamped states; the unit of prediction and evaluation."""

    times: np.ndarray
    states: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise ShapeError("states must be (len(times), state_dim)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("trajectory times must be strictly increasing")

    @property
    def state_dim(self):
        return self.states.shape[1]


# --- integration ------------------------------------------------------------


def rk4_step(system: OdeSystem, state, u, h):
    """One classical 4-stage Runge-Kutta step with the input held constant."""
    if h <= 0:
        raise ConfigurationError("rk4_step requires h > 0")
    x = np.asarray(state, dtype=float)
    k1 = system.f(x, u)
    k2 = system.f(x + 0.5 * h * k1, u)
    k3 = system.f(x + 0.5 * h * k2, u)
    k4 = system.f(x + h * k3, u)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite RK-4 stage")
    return out


def integrate_interval(system, state, signal, t0, h, substeps):
    """Advance one partition interval with `substeps` RK-4 sub-steps.

    The signal is re-evaluated at each sub-step start: time signals at the
    sub-step time, feedback signals at the current sub-state.
    """
    x = np.asarray(state, dtype=float)
    sub = h / substeps
    for j in range(substeps):
        u = signal(t0 + j * sub, x)
        x = rk4_step(system, x, u, sub)
    return x


def simulate_truth(system, x0, signal, partition: Partition, substeps=10) -> Trajectory:
    """Reference trajectory on the partition nodes.

    Returns a truncated, flagged trajectory if the state blows up
    (norm > 1e6 or non-finite).
    """
    if substeps < 1:
        raise ConfigurationError("substeps must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (system.state_dim,):
        raise ShapeError(f"x0 must have shape ({system.state_dim},)")
    lo, hi = system.state_space[:, 0], system.state_space[:, 1]
    if np.any(x0 < lo) or np.any(x0 > hi):
        warnings.warn(f"initial state {x0} outside {system.name} sampling box", stacklevel=2)

    times = partition.times
    states = [x0]
    x = x0
    diverged = False
    for n in range(times.size - 1):
        try:
            x = integrate_interval(system, x, signal, times[n], times[n + 1] - times[n], substeps)
        except DivergenceError:
            diverged = True
            break
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_NORM:
            diverged = True
            break
        states.append(x)
    return Trajectory(times[: len(states)], np.stack(states), diverged=diverged)


# --- trajectory CSV ----------------------------------------------------------


def trajectory_to_csv(traj: Trajectory, path, scheme=None):
    """Write `t,x0,x1,...` rows at 17 significant digits.

    Prediction files carry a `# scheme: ...` metadata line so truth and
    prediction files stay column-wise diffable.
    """
    n = traj.state_dim
    lines = []
    if scheme is not None:
        lines.append(f"# scheme: {scheme}")
    if traj.diverged:
        lines.append("# diverged: true")
    lines.append("t," + ",".join(f"x{i}" for i in range(n)))
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join(f"{v:.17g}" for v in (t, *row)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def trajectory_from_csv(path):
    """Read a trajectory CSV; returns (Trajectory, metadata dict)."""
    meta = {}
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
                continue
            if header is None:
                header = line.split(",")
                if header[0] != "t":
                    raise DataFormatError(f"unexpected trajectory header {header!r}")
                continue
            rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise DataFormatError(f"no trajectory data in {path}")
    data = np.asarray(rows)
    return (
        Trajectory(data[:, 0], data[:, 1:], diverged=meta.get("diverged") == "true"),
        meta,
    )
