"""Minimal dense-network kernel.

Parameter containers, forward evaluation, reverse-mode gradients (for
training), forward-mode directional derivatives (for step-size sensitivities),
and Adam with exponential learning-rate decay.

Two architectures are supported:

* ``plain``    -- standard MLP, hidden layers activated, final layer affine.
* ``modified`` -- gated MLP with two input encoders U, V. Each hidden layer
  produces a gate Z and the next hidden state is (1 - Z) * U + Z * V; the
  final layer is affine. All hidden layers must share one width.

All functions are pure: parameters are treated as immutable values, so shared
parameters are safe to read from concurrent callers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigurationError, DivergenceError, ShapeError

ACTIVATIONS = ("tanh", "relu", "sine")
ARCHITECTURES = ("plain", "modified")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _act(name, a):
    if name == "tanh":
        return np.tanh(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "sine":
        return np.sin(a)
    raise ConfigurationError(f"unknown activation {name!r}")


def _dact(name, a, post):
    # derivative w.r.t. the preactivation; `post` is _act(name, a)
    if name == "tanh":
        return 1.0 - post * post
    if name == "relu":
        return (a > 0.0).astype(a.dtype)
    if name == "sine":
        return np.cos(a)
    raise ConfigurationError(f"unknown activation {name!r}")


@dataclass
class DenseParams:
    """Weights/biases of one dense network plus its architecture tags.

    ``weights[k]`` has shape (out_k, in_k) and ``biases[k]`` shape (out_k,).
    For the modified architecture, ``encoder_weights`` holds [W_u, W_v] of
    shape (hidden_width, input_width) and ``encoder_biases`` [b_u, b_v].
    """

    weights: list
    biases: list
    activation: str = "tanh"
    architecture: str = "plain"
    encoder_weights: list | None = None
    encoder_biases: list | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"unknown architecture {self.architecture!r}")
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeError("weights and biases must be nonempty, equal-length lists")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k > 0 and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(
                    f"layer {k}: in-width {w.shape[1]} != previous out-width "
                    f"{self.weights[k - 1].shape[0]}"
                )
        if self.architecture == "modified":
            if self.encoder_weights is None or self.encoder_biases is None:
                raise ShapeError("modified architecture requires U/V encoder layers")
            if len(self.weights) < 2:
                raise ShapeError("modified architecture needs at least one hidden layer")
            width = self.weights[0].shape[0]
            for w in self.weights[:-1]:
                if w.shape[0] != width:
                    raise ShapeError("modified architecture: hidden layers must share one width")
            for w, b in zip(self.encoder_weights, self.encoder_biases):
                if w.shape != (width, self.input_width) or b.shape != (width,):
                    raise ShapeError("encoder layers must map input width to hidden width")

    @property
    def input_width(self):
        return self.weights[0].shape[1]

    @property
    def output_width(self):
        return self.weights[-1].shape[0]

    @property
    def layer_widths(self):
        return [self.input_width] + [w.shape[0] for w in self.weights]

    def num_params(self):
        n = sum(w.size + b.size for w, b in zip(self.weights, self.biases))
        if self.encoder_weights is not None:
            n += sum(w.size + b.size for w, b in zip(self.encoder_weights, self.encoder_biases))
        return n

    def arrays(self):
        """All parameter arrays in a fixed order (views, not copies)."""
        out = list(self.weights) + list(self.biases)
        if self.encoder_weights is not None:
            out += list(self.encoder_weights) + list(self.encoder_biases)
        return out


def map_params(fn, *params: DenseParams) -> DenseParams:
    """Apply ``fn`` elementwise across corresponding arrays of the arguments.

    Returns a new DenseParams with the first argument's tags.
    """
    p0 = params[0]
    nw = len(p0.weights)
    weights = [fn(*(p.weights[k] for p in params)) for k in range(nw)]
    biases = [fn(*(p.biases[k] for p in params)) for k in range(nw)]
    enc_w = enc_b = None
    if p0.encoder_weights is not None:
        enc_w = [fn(*(p.encoder_weights[k] for p in params)) for k in range(2)]
        enc_b = [fn(*(p.encoder_biases[k] for p in params)) for k in range(2)]
    return DenseParams(weights, biases, p0.activation, p0.architecture, enc_w, enc_b, p0.seed)


def zeros_like_params(params: DenseParams) -> DenseParams:
    return map_params(np.zeros_like, params)


def init_dense(layer_widths, activation="tanh", architecture="plain", seed=0) -> DenseParams:
    """Glorot-uniform weights, zero biases; fully deterministic per seed."""
    widths = list(layer_widths)
    if len(widths) < 2:
        raise ConfigurationError("need at least input and output widths")
    if any(int(w) <= 0 for w in widths):
        raise ConfigurationError(f"layer widths must be positive, got {widths}")
    if architecture not in ARCHITECTURES:
        raise ConfigurationError(f"unknown architecture {architecture!r}")
    if architecture == "modified":
        if len(widths) < 3:
            raise ConfigurationError("modified architecture needs at least one hidden layer")
        hidden = widths[1:-1]
        if any(w != hidden[0] for w in hidden):
            raise ConfigurationError("modified architecture: hidden widths must be equal")

    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    weights = [glorot(widths[k + 1], widths[k]) for k in range(len(widths) - 1)]
    biases = [np.zeros(widths[k + 1]) for k in range(len(widths) - 1)]
    enc_w = enc_b = None
    if architecture == "modified":
        enc_w = [glorot(widths[1], widths[0]), glorot(widths[1], widths[0])]
        enc_b = [np.zeros(widths[1]), np.zeros(widths[1])]
    return DenseParams(weights, biases, activation, architecture, enc_w, enc_b, int(seed))


def _as_batch(x, width, what):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{what} must have width {width}, got shape {x.shape}")
    return x, single


def _forward_cached(params: DenseParams, X):
    """Batched forward pass keeping everything the backward pass needs."""
    act = params.activation
    cache = {"hs": [X], "pre": [], "post": []}
    if params.architecture == "modified":
        a_u = X @ params.encoder_weights[0].T
        a_u += params.encoder_biases[0]
        a_v = X @ params.encoder_weights[1].T
        a_v += params.encoder_biases[1]
        u = _act(act, a_u)
        v = _act(act, a_v)
        vu = v - u  # gate direction, shared by every hidden layer
        cache.update(a_u=a_u, u=u, a_v=a_v, v=v, vu=vu)
        h = X
        for w, b in zip(params.weights[:-1], params.biases[:-1]):
            a = h @ w.T
            a += b
            z = _act(act, a)
            h = z * vu
            h += u  # (1 - z) * u + z * v
            cache["pre"].append(a)
            cache["post"].append(z)
            cache["hs"].append(h)
    else:
        h = X
        for w, b in zip(params.weights[:-1], params.biases[:-1]):
            a = h @ w.T
            a += b
            h = _act(act, a)
            cache["pre"].append(a)
            cache["post"].append(h)
            cache["hs"].append(h)
    out = h @ params.weights[-1].T
    out += params.biases[-1]
    return out, cache


def _backward_cached(params: DenseParams, cache, cotangent):
    """Gradients of sum_i <cotangent_i, out_i> w.r.t. parameters and input."""
    act = params.activation
    hs, pre, post = cache["hs"], cache["pre"], cache["post"]
    g = cotangent
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.weights)
    grad_w[-1] = g.T @ hs[-1]
    grad_b[-1] = g.sum(axis=0)
    dh = g @ params.weights[-1]

    if params.architecture == "modified":
        u, v, vu = cache["u"], cache["v"], cache["vu"]
        du = np.zeros_like(u)
        dv = np.zeros_like(v)
        for k in range(len(params.weights) - 2, -1, -1):
            z = post[k]
            dz = dh * vu
            dhz = dh * z
            du += dh
            du -= dhz
            dv += dhz
            da = dz
            da *= _dact(act, pre[k], z)
            grad_w[k] = da.T @ hs[k]
            grad_b[k] = da.sum(axis=0)
            dh = da @ params.weights[k]
        dx = dh
        da_u = du * _dact(act, cache["a_u"], u)
        da_v = dv * _dact(act, cache["a_v"], v)
        enc_w = [da_u.T @ hs[0], da_v.T @ hs[0]]
        enc_b = [da_u.sum(axis=0), da_v.sum(axis=0)]
        dx = dx + da_u @ params.encoder_weights[0] + da_v @ params.encoder_weights[1]
        grads = DenseParams(grad_w, grad_b, act, "modified", enc_w, enc_b)
    else:
        for k in range(len(params.weights) - 2, -1, -1):
            da = dh * _dact(act, pre[k], post[k])
            grad_w[k] = da.T @ hs[k]
            grad_b[k] = da.sum(axis=0)
            dh = da @ params.weights[k]
        dx = dh
        grads = DenseParams(grad_w, grad_b, act, "plain")
    return grads, dx


def dense_forward(params: DenseParams, x):
    """Evaluate the network on a vector (or on rows of a 2-D batch)."""
    X, single = _as_batch(x, params.input_width, "input")
    out, _ = _forward_cached(params, X)
    return out[0] if single else out


def dense_backward(params: DenseParams, x, output_cotangent):
    """Exact reverse-mode gradients of <cotangent, output>.

    Returns (parameter gradients as a DenseParams-shaped container, gradient
    w.r.t. the input). For batched inputs the parameter gradients are summed
    over rows.
    """
    X, single = _as_batch(x, params.input_width, "input")
    G, gsingle = _as_batch(output_cotangent, params.output_width, "cotangent")
    if G.shape[0] != X.shape[0]:
        raise ShapeError("input and cotangent batch sizes disagree")
    _, cache = _forward_cached(params, X)
    grads, dx = _backward_cached(params, cache, G)
    return grads, (dx[0] if single and gsingle else dx)


def dense_jvp(params: DenseParams, x, input_tangent):
    """Forward-mode directional derivative.

    Returns (output, J @ tangent). The output is computed by the same code
    path as dense_forward, so the primal values are bitwise identical.
    """
    X, single = _as_batch(x, params.input_width, "input")
    T, _ = _as_batch(input_tangent, params.input_width, "tangent")
    if T.shape[0] != X.shape[0]:
        raise ShapeError("input and tangent batch sizes disagree")
    act = params.activation

    if params.architecture == "modified":
        a_u = X @ params.encoder_weights[0].T + params.encoder_biases[0]
        a_v = X @ params.encoder_weights[1].T + params.encoder_biases[1]
        u = _act(act, a_u)
        v = _act(act, a_v)
        vu = v - u
        tu = _dact(act, a_u, u) * (T @ params.encoder_weights[0].T)
        tv = _dact(act, a_v, v) * (T @ params.encoder_weights[1].T)
        tvu = tv - tu
        h, th = X, T
        for w, b in zip(params.weights[:-1], params.biases[:-1]):
            a = h @ w.T + b
            z = _act(act, a)
            tz = _dact(act, a, z) * (th @ w.T)
            h = z * vu
            h += u
            th = tz * vu
            th += tu
            th += z * tvu  # (1 - z) tu + z tv + tz (v - u)
    else:
        h, th = X, T
        for w, b in zip(params.weights[:-1], params.biases[:-1]):
            a = h @ w.T + b
            post = _act(act, a)
            th = _dact(act, a, post) * (th @ w.T)
            h = post
    out = h @ params.weights[-1].T + params.biases[-1]
    tout = th @ params.weights[-1].T
    return (out[0], tout[0]) if single else (out, tout)


# --- Adam ---------------------------------------------------------------


@dataclass
class AdamState:
    """Adam moments (shape-congruent with the tracked parameters) plus the
    learning-rate schedule: lr(epoch) = base_lr * decay_rate^(epoch // decay_every)."""

    first_moment: DenseParams
    second_moment: DenseParams
    step_count: int
    base_lr: float
    decay_rate: float
    decay_every: int

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ConfigurationError("base_lr must be positive")
        if not (0.0 < self.decay_rate <= 1.0):
            raise ConfigurationError("decay_rate must be in (0, 1]")
        if self.decay_every <= 0:
            raise ConfigurationError("decay_every must be a positive epoch count")


def init_adam(params, base_lr=1e-3, decay_rate=0.9, decay_every=2000) -> AdamState:
    return AdamState(
        zeros_like_params(params), zeros_like_params(params), 0, base_lr, decay_rate, decay_every
    )


def effective_lr(state: AdamState, epoch: int) -> float:
    return state.base_lr * state.decay_rate ** (epoch // state.decay_every)


def adam_step(params: DenseParams, gradients: DenseParams, state: AdamState, epoch: int):
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8).

    Rejects non-finite gradients rather than poisoning the moments.
    Returns (new params, new state); inputs are left untouched.
    """
    for g in gradients.arrays():
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient entries; update rejected")
    lr = effective_lr(state, epoch)
    t = state.step_count + 1
    m = map_params(lambda mo, g: ADAM_BETA1 * mo + (1 - ADAM_BETA1) * g,
                   state.first_moment, gradients)
    v = map_params(lambda vo, g: ADAM_BETA2 * vo + (1 - ADAM_BETA2) * g * g,
                   state.second_moment, gradients)
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    new_params = map_params(
        lambda p, mo, vo: p - lr * (mo / c1) / (np.sqrt(vo / c2) + ADAM_EPS), params, m, v
    )
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


# --- serialization --------------------------------------------------------


def params_to_dict(params: DenseParams) -> dict:
    doc = {
        "layer_shapes": [list(w.shape) for w in params.weights],
        "weights": [w.reshape(-1).tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "activation": params.activation,
        "architecture": params.architecture,
        "seed": params.seed,
    }
    if params.encoder_weights is not None:
        doc["encoder_shapes"] = [list(w.shape) for w in params.encoder_weights]
        doc["encoder_weights"] = [w.reshape(-1).tolist() for w in params.encoder_weights]
        doc["encoder_biases"] = [b.tolist() for b in params.encoder_biases]
    return doc


def params_from_dict(doc: dict) -> DenseParams:
    try:
        weights = [
            np.asarray(flat, dtype=float).reshape(shape)
            for flat, shape in zip(doc["weights"], doc["layer_shapes"])
        ]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        enc_w = enc_b = None
        if "encoder_weights" in doc:
            enc_w = [
                np.asarray(flat, dtype=float).reshape(shape)
                for flat, shape in zip(doc["encoder_weights"], doc["encoder_shapes"])
            ]
            enc_b = [np.asarray(b, dtype=float) for b in doc["encoder_biases"]]
        return DenseParams(
            weights, biases, doc["activation"], doc["architecture"], enc_w, enc_b, doc.get("seed")
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed dense-parameter document: {exc}") from exc


def params_to_json(params: DenseParams) -> str:
    # json emits shortest round-trip decimals, so the round trip is value-exact
    return json.dumps(params_to_dict(params))


def params_from_json(text: str) -> DenseParams:
    return params_from_dict(json.loads(text))
