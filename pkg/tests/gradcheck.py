"""Finite-difference gradient checks for the attention LSTM.

Numerical derivatives use the fourth-order five-point stencil; relative error
is ``|a - n| / max(|a|, |n|, 1e-8)`` so coordinates whose true gradient is
below the stencil's roundoff (~1e-13) are compared absolutely.
"""
import numpy as np

from eegmove.nn import ModelConfig, backward, forward, init_params, objective


def tiny_problem(attention="scalar", seed=0, batch=3, dropout=(0.1, 0.2, 0.1, 0.2), l2=0.01):
    cfg = ModelConfig(
        input_dim=5, hidden=8, depth=3, n_steps=7, dropout=dropout, l2=l2,
        attention=attention, attention_dim=4 if attention == "vector" else 0,
    )
    gen = np.random.default_rng(seed)
    model = init_params(cfg, gen)
    X = gen.standard_normal((batch, 7, 5))
    y = gen.integers(0, 2, batch).astype(float)
    return model, X, y


def loss_fn(model, X, y, mask_seed=123):
    # A freshly seeded rng per call reproduces the same dropout masks.
    p, cache = forward(model, X, train=True, rng=np.random.default_rng(mask_seed))
    return objective(model, p, y), cache


def rel_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def check(model, X, y, coords, h=1e-3):
    """Relative errors between analytic and numerical gradients at ``coords``.

    ``coords`` is a list of ``(param_name, flat_index)``.
    """
    _, cache = loss_fn(model, X, y)
    grads = backward(cache, y)
    errors = []
    for name, idx in coords:
        theta = model.params[name].reshape(-1)
        old = theta[idx]
        f = {}
        for k in (-2, -1, 1, 2):
            theta[idx] = old + k * h
            f[k], _ = loss_fn(model, X, y)
        theta[idx] = old
        numeric = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
        errors.append(rel_error(grads[name].reshape(-1)[idx], numeric))
    return np.array(errors)


def random_coords(model, n, gen):
    names = list(model.params)
    sizes = np.array([model.params[k].size for k in names])
    # Every tensor once, then size-weighted draws for the remainder.
    extra = gen.choice(len(names), max(n - len(names), 0), p=sizes / sizes.sum())
    picks = np.r_[np.arange(len(names)), extra]
    return [(names[i], int(gen.integers(model.params[names[i]].size))) for i in picks]
