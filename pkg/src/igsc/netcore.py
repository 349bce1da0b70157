"""Dense numeric kernels: affine maps, activations, softmax, and their
analytic derivative rules, plus a central finite-difference oracle used to
validate every gradient in the package.

All kernels work on float64 numpy arrays (stored datasets are float32 but
gradient checking needs the headroom) and are pure functions of their
inputs, so they are safe to call concurrently.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NumericError, ShapeError, UsageError


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def affine(x, weight, bias) -> np.ndarray:
    """weight @ x + bias for a single vector x."""
    x, w, b = as_f64(x), as_f64(weight), as_f64(bias)
    if x.ndim != 1 or w.ndim != 2 or b.ndim != 1:
        raise ShapeError(
            f"affine expects vector/matrix/vector, got x={x.shape}, "
            f"weight={w.shape}, bias={b.shape}"
        )
    if w.shape[1] != x.shape[0] or w.shape[0] != b.shape[0]:
        raise ShapeError(
            f"affine shape mismatch: weight={w.shape}, x={x.shape}, bias={b.shape}"
        )
    return w @ x + b


def affine_backward(g_out, x, weight):
    """Gradients of an affine map given the output gradient.

    Returns (g_x, g_weight, g_bias) for out = weight @ x + bias.
    """
    g, x, w = as_f64(g_out), as_f64(x), as_f64(weight)
    return w.T @ g, np.outer(g, x), g.copy()


def softmax(scores) -> np.ndarray:
    """Numerically stable softmax (max-shifted before exponentiation)."""
    s = as_f64(scores)
    if s.ndim != 1 or s.shape[0] < 1:
        raise ShapeError(f"softmax expects a non-empty vector, got shape {s.shape}")
    shifted = s - s.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(scores) -> np.ndarray:
    """Row-wise softmax for a 2-D score matrix."""
    s = as_f64(scores)
    if s.ndim != 2 or s.shape[1] < 1:
        raise ShapeError(f"softmax_rows expects a non-empty matrix, got shape {s.shape}")
    shifted = s - s.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(g_probs, probs) -> np.ndarray:
    """Pull an output gradient back through softmax.

    Works row-wise on 2-D inputs: g_s = p * (g_p - sum(g_p * p)).
    """
    g, p = as_f64(g_probs), as_f64(probs)
    inner = np.sum(g * p, axis=-1, keepdims=True)
    return p * (g - inner)


_ACTIVATIONS = {
    "tanh": np.tanh,
    "sigmoid": lambda v: 1.0 / (1.0 + np.exp(-v)),
    "relu": lambda v: np.maximum(v, 0.0),
}


def activation(values, kind: str) -> np.ndarray:
    """Elementwise nonlinearity: tanh, sigmoid, or relu."""
    if kind not in _ACTIVATIONS:
        raise UsageError(f"unknown activation kind {kind!r}")
    return _ACTIVATIONS[kind](as_f64(values))


def activation_backward(g_out, pre, post, kind: str) -> np.ndarray:
    """Pull a gradient back through an elementwise activation.

    `pre` is the activation input, `post` its output; tanh and sigmoid only
    need `post`, relu only needs `pre`.
    """
    g = as_f64(g_out)
    if kind == "tanh":
        return g * (1.0 - as_f64(post) ** 2)
    if kind == "sigmoid":
        p = as_f64(post)
        return g * p * (1.0 - p)
    if kind == "relu":
        return g * (as_f64(pre) > 0.0)
    raise UsageError(f"unknown activation kind {kind!r}")


def sigmoid(values) -> np.ndarray:
    return activation(values, "sigmoid")


def finite_diff_gradient(
    f: Callable[[np.ndarray], float], params, eps: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector.

    Independent of every analytic derivative in the package; used as the
    oracle that validates them.
    """
    if eps <= 0:
        raise UsageError(f"eps must be positive, got {eps}")
    p = as_f64(params).copy()
    grad = np.zeros_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + eps
        f_plus = float(f(p))
        p[i] = orig - eps
        f_minus = float(f(p))
        p[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError(
                f"finite_diff_gradient: non-finite objective at coordinate {i}"
            )
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad
