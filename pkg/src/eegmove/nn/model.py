"""Stacked LSTM with attention pooling and a sigmoid output unit.

Data flow for a batch ``X`` of shape (batch, steps, features)::

    X -> dropout D0 -> LSTM_1 -> D1 -> LSTM_2 -> D2 -> LSTM_3 -> D3
      -> attention over the steps -> dense -> sigmoid

Gate weights act on the concatenation ``[h_{t-1}, x_t]`` (hidden first).
Dropout is inverted and applied between layers only, never inside the
recurrence.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .. import seeding
from .tape import Tape

GATES = ("i", "f", "c", "o")
BCE_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 297
    hidden: int = 256
    depth: int = 3
    n_steps: int = 7
    dropout: tuple[float, ...] = (0.0, 0.2, 0.1, 0.2)
    l2: float = 0.001
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    attention: str = "scalar"
    attention_dim: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "dropout", tuple(float(d) for d in self.dropout))
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if len(self.dropout) != self.depth + 1:
            raise ValueError(f"need {self.depth + 1} dropout rates (input + one per layer)")
        if not all(0.0 <= d < 1.0 for d in self.dropout):
            raise ValueError("dropout rates must lie in [0, 1)")
        if self.attention not in ("scalar", "vector"):
            raise ValueError("attention must be 'scalar' or 'vector'")
        if self.attention == "vector" and self.attention_dim < 1:
            raise ValueError("vector attention needs attention_dim >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @classmethod
    def cross_subject(cls, **overrides) -> "ModelConfig":
        """Cross-subject training defaults."""
        return cls(**{"dropout": (0.0, 0.2, 0.1, 0.2), "batch_size": 32, "epochs": 100, **overrides})

    @classmethod
    def intra_subject(cls, **overrides) -> "ModelConfig":
        """Intra-subject training defaults."""
        return cls(**{"dropout": (0.7, 0.2, 0.1, 0.1), "batch_size": 2, "epochs": 10, **overrides})

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dropout"] = list(self.dropout)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: (tuple(v) if k == "dropout" else v) for k, v in d.items() if k in known})


@dataclass
class LstmLayerParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.concatenate([self.W_i, self.W_f, self.W_c, self.W_o]),
            np.concatenate([self.b_i, self.b_f, self.b_c, self.b_o]),
        )


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Parameter names and shapes in checkpoint order."""
    H = config.hidden
    shapes = []
    for layer in range(config.depth):
        fan = H + (config.input_dim if layer == 0 else H)
        shapes += [(f"lstm{layer}.W_{g}", (H, fan)) for g in GATES]
        shapes += [(f"lstm{layer}.b_{g}", (H,)) for g in GATES]
    if config.attention == "scalar":
        shapes += [("attn.W_s", (H,)), ("attn.b_s", ())]
    else:
        A = config.attention_dim
        shapes += [("attn.W_s", (A, H)), ("attn.b_s", (A,)), ("attn.u", (A,))]
    shapes += [("dense.w", (H,)), ("dense.b", ())]
    return shapes


def lstm_weight_names(config: ModelConfig) -> list[str]:
    return [f"lstm{layer}.W_{g}" for layer in range(config.depth) for g in GATES]


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        expected = param_shapes(config)
        if [n for n, _ in expected] != list(params):
            raise ValueError("parameter names/order do not match the configuration")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ValueError(f"{name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = params
        self.version = 0

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in param_shapes(self.config))

    def layer(self, index: int) -> LstmLayerParams:
        p = self.params
        return LstmLayerParams(
            *(p[f"lstm{index}.W_{g}"] for g in GATES), *(p[f"lstm{index}.b_{g}"] for g in GATES)
        )

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> Model:
    """Glorot-uniform weights, zero biases except the forget gate (1.0)."""
    if rng is None:
        rng = seeding.rng(config.seed, seeding.INIT, 0)
    dtype = np.dtype(config.dtype)
    params = {}
    for name, shape in param_shapes(config):
        kind = name.split(".")[1]
        if kind.startswith("b"):
            value = np.ones(shape) if kind == "b_f" else np.zeros(shape)
        else:
            fan_in = shape[-1] if len(shape) == 2 else shape[0]
            fan_out = shape[0] if len(shape) == 2 else 1
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            value = rng.uniform(-limit, limit, size=shape)
        params[name] = value.astype(dtype)
    return Model(config, params)


def lstm_cell_forward(x_t, h_prev, C_prev, p: LstmLayerParams):
    """One LSTM step; returns ``(h_t, C_t)``. Works on vectors or row batches."""
    W, b = p.stacked()
    h, c, _ = _cell(np.asarray(x_t), np.asarray(h_prev), np.asarray(C_prev), W, b)
    return h, c


def _cell(x, h_prev, c_prev, W, b):
    H = h_prev.shape[-1]
    hx = np.concatenate([h_prev, x], axis=-1)
    z = hx @ W.T + b
    i = expit(z[..., :H])
    f = expit(z[..., H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = expit(z[..., 3 * H :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (hx, i, f, g, o, c_prev, tc)


def _cell_backward(dh, dc, cache, W):
    hx, i, f, g, o, c_prev, tc = cache
    dc = dc + dh * o * (1 - tc**2)
    dz = np.concatenate(
        [
            dc * g * i * (1 - i),
            dc * c_prev * f * (1 - f),
            dc * i * (1 - g**2),
            dh * tc * o * (1 - o),
        ],
        axis=-1,
    )
    return dz @ W, dc * f, dz.T @ hx, dz.sum(0)


def _softmax(u, axis=-1):
    e = np.exp(u - u.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def attention_forward(H, W_s, b_s, u_ctx=None):
    """Pool hidden states ``H`` (..., steps, hidden) into ``v`` with weights ``alpha``.

    Scalar form (``u_ctx`` is None): ``u_i = tanh(W_s . h_i + b_s)``.
    Vector form: ``u_i = u_ctx . tanh(W_s h_i + b_s)``.
    Returns ``(v, alpha)``.
    """
    H = np.asarray(H)
    if u_ctx is None:
        scores = np.tanh(H @ W_s + b_s)
    else:
        scores = np.tanh(H @ W_s.T + b_s) @ u_ctx
    alpha = _softmax(scores, axis=-1)
    return np.einsum("...t,...th->...h", alpha, H), alpha


class StaleCacheError(RuntimeError):
    pass


@dataclass
class Cache:
    tape: Tape
    model: Model
    version: int
    p: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        return self.tape.values["attn.alpha"]


def _dropout(tape: Tape, key: str, rate: float, train: bool, rng) -> str:
    if not train or rate == 0.0:
        return key
    x = tape.values[key]
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    out = f"{key}.drop"
    tape.put(out, x * mask)

    def back(t: Tape):
        t.adjoint(key)[...] += t.adjoint(out) * mask

    tape.record(f"dropout({key})", back)
    return out


def _lstm_layer(tape: Tape, layer: int, in_key: str, H: int) -> str:
    X = tape.values[in_key]
    B, T, _ = X.shape
    w_names = [f"lstm{layer}.W_{g}" for g in GATES]
    b_names = [f"lstm{layer}.b_{g}" for g in GATES]
    W = tape.put(f"lstm{layer}.W", np.concatenate([tape.values[n] for n in w_names]))
    b = tape.put(f"lstm{layer}.b", np.concatenate([tape.values[n] for n in b_names]))

    def unstack(t: Tape):
        dW, db = t.adjoint(f"lstm{layer}.W"), t.adjoint(f"lstm{layer}.b")
        for k, (wn, bn) in enumerate(zip(w_names, b_names)):
            t.adjoint(wn)[...] += dW[k * H : (k + 1) * H]
            t.adjoint(bn)[...] += db[k * H : (k + 1) * H]

    tape.record(f"lstm{layer}.stack", unstack)

    h_key, c_key = f"lstm{layer}.h", f"lstm{layer}.C"
    hs = tape.put(h_key, np.zeros((B, T, H), dtype=X.dtype))
    cs = tape.put(c_key, np.zeros((B, T, H), dtype=X.dtype))
    h = np.zeros((B, H), dtype=X.dtype)
    c = np.zeros((B, H), dtype=X.dtype)
    for step in range(T):
        h, c, cache = _cell(X[:, step], h, c, W, b)
        hs[:, step] = h
        cs[:, step] = c

        def back(t: Tape, step=step, cache=cache):
            dhx, dc_prev, dW, db = _cell_backward(t.adjoint(h_key)[:, step], t.adjoint(c_key)[:, step], cache, W)
            t.adjoint(f"lstm{layer}.W")[...] += dW
            t.adjoint(f"lstm{layer}.b")[...] += db
            t.adjoint(in_key)[:, step] += dhx[:, H:]
            if step > 0:
                t.adjoint(h_key)[:, step - 1] += dhx[:, :H]
                t.adjoint(c_key)[:, step - 1] += dc_prev

        tape.record(f"lstm{layer}.cell{step}", back)
    return h_key


def _attention(tape: Tape, in_key: str, vector: bool) -> str:
    Hs = tape.values[in_key]
    W_s, b_s = tape.values["attn.W_s"], tape.values["attn.b_s"]
    if vector:
        u_ctx = tape.values["attn.u"]
        s = np.tanh(Hs @ W_s.T + b_s)
        scores = s @ u_ctx
    else:
        scores = np.tanh(Hs @ W_s + b_s)
    alpha = tape.put("attn.alpha", _softmax(scores, axis=1))
    tape.put("attn.v", np.einsum("bt,bth->bh", alpha, Hs))

    def back(t: Tape):
        dv = t.adjoint("attn.v")
        dH = t.adjoint(in_key)
        dalpha = np.einsum("bth,bh->bt", Hs, dv)
        dH += alpha[..., None] * dv[:, None, :]
        dscore = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        if vector:
            t.adjoint("attn.u")[...] += np.einsum("bt,bta->a", dscore, s)
            dpre = dscore[..., None] * u_ctx * (1 - s**2)
            t.adjoint("attn.W_s")[...] += np.einsum("bta,bth->ah", dpre, Hs)
            t.adjoint("attn.b_s")[...] += dpre.sum(axis=(0, 1))
            dH += dpre @ W_s
        else:
            dpre = dscore * (1 - scores**2)
            t.adjoint("attn.W_s")[...] += np.einsum("bt,bth->h", dpre, Hs)
            t.adjoint("attn.b_s")[...] += dpre.sum()
            dH += dpre[..., None] * W_s

    tape.record("attention", back)
    return "attn.v"


def forward(model: Model, X, train: bool = False, rng: np.random.Generator | None = None):
    """Class-1 (Right) probabilities for a batch; returns ``(p, cache)``.

    ``X`` is (batch, steps, features) or a single (steps, features) segment.
    Dropout is only active with ``train=True`` and then requires ``rng``.
    """
    cfg = model.config
    X = np.asarray(X, dtype=model.dtype)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (cfg.n_steps, cfg.input_dim):
        raise ValueError(f"expected input (batch, {cfg.n_steps}, {cfg.input_dim}), got {X.shape}")
    if train and rng is None and any(cfg.dropout):
        raise ValueError("training-mode forward with dropout needs an rng")
    tape = Tape()
    for name, value in model.params.items():
        tape.put(name, value)
    tape.put("x", X)
    key = _dropout(tape, "x", cfg.dropout[0], train, rng)
    for layer in range(cfg.depth):
        key = _lstm_layer(tape, layer, key, cfg.hidden)
        key = _dropout(tape, key, cfg.dropout[layer + 1], train, rng)
    v_key = _attention(tape, key, cfg.attention == "vector")

    v, w, b = tape.values[v_key], tape.values["dense.w"], tape.values["dense.b"]
    tape.put("logit", v @ w + b)

    def dense_back(t: Tape):
        dz = t.adjoint("logit")
        t.adjoint("dense.w")[...] += v.T @ dz
        t.adjoint("dense.b")[...] += dz.sum()
        t.adjoint(v_key)[...] += dz[:, None] * w

    tape.record("dense", dense_back)
    p = expit(tape.values["logit"])
    return p, Cache(tape=tape, model=model, version=model.version, p=p)


def bce_loss(p, y, eps: float = BCE_EPS):
    """Mean binary cross-entropy with ``p`` clamped to [eps, 1 - eps]."""
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1 - eps)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def l2_penalty(model: Model) -> float:
    if not model.config.l2:
        return 0.0
    return model.config.l2 * float(sum(np.sum(model.params[n] ** 2) for n in lstm_weight_names(model.config)))


def objective(model: Model, p, y) -> float:
    """Training objective: mean BCE plus the L2 penalty on LSTM weight matrices."""
    return bce_loss(p, y) + l2_penalty(model)


def backward(cache: Cache, y) -> dict[str, np.ndarray]:
    """Gradients of :func:`objective` for the batch that produced ``cache``."""
    model = cache.model
    if cache.version != model.version:
        raise StaleCacheError("model parameters changed since this forward pass")
    y = np.asarray(y, dtype=model.dtype).reshape(-1)
    if y.shape != cache.p.shape:
        raise ValueError(f"labels {y.shape} do not match predictions {cache.p.shape}")
    adjoints = cache.tape.backward("logit", (cache.p - y) / len(y))
    grads = {name: adjoints[name] if name in adjoints else np.zeros_like(v) for name, v in model.params.items()}
    if model.config.l2:
        for name in lstm_weight_names(model.config):
            grads[name] = grads[name] + 2 * model.config.l2 * model.params[name]
    return grads
