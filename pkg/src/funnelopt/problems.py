"""Differentiable test objectives with analytic gradients.

Every problem exposes loss(w, batch) and grad(w, batch) over named flat
parameter groups, and every analytic gradient in the repo is validated
against the central finite-difference oracle in this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import groups as gr
from .errors import DataError, DimensionError, InputError

__all__ = [
    "Batch",
    "Problem",
    "quadratic_problem",
    "rosenbrock_problem",
    "logistic_regression_problem",
    "finite_difference_grad",
]


@dataclass(frozen=True)
class Batch:
    """features [n, d]; labels [n] ints for classification, empty otherwise."""

    features: np.ndarray
    labels: np.ndarray

    @staticmethod
    def empty() -> "Batch":
        """Placeholder for objectives that ignore data."""
        return Batch(np.zeros((0, 0)), np.zeros(0, dtype=np.int64))


@dataclass(frozen=True)
class Problem:
    name: str
    shapes: dict
    loss: Callable[[dict, Batch], float] = field(repr=False)
    grad: Callable[[dict, Batch], dict] = field(repr=False)
    top1: Callable[[dict, Batch], float] | None = field(repr=False, default=None)


def quadratic_problem(A, b) -> Problem:
    """L(w) = 0.5 * w'Aw - b'w over one group 'w'; gradient Aw - b."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got shape {A.shape}")
    if b.shape != (A.shape[0],):
        raise DimensionError(f"b must have length {A.shape[0]}, got {b.shape}")
    if not np.allclose(A, A.T, atol=1e-12):
        raise InputError("A must be symmetric")

    def loss(w, batch):
        x = w["w"]
        return float(0.5 * x @ A @ x - b @ x)

    def grad(w, batch):
        return {"w": A @ w["w"] - b}

    return Problem("quadratic", {"w": A.shape[0]}, loss, grad)


def rosenbrock_problem(dim: int) -> Problem:
    """Chained Rosenbrock: sum_i 100*(w[i+1]-w[i]^2)^2 + (1-w[i])^2."""
    dim = int(dim)
    if dim < 2:
        raise DimensionError(f"rosenbrock needs dim >= 2, got {dim}")

    def loss(w, batch):
        x = w["w"]
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))

    def grad(w, batch):
        x = w["w"]
        g = np.zeros_like(x)
        diff = x[1:] - x[:-1] ** 2
        g[:-1] = -400.0 * x[:-1] * diff - 2.0 * (1.0 - x[:-1])
        g[1:] += 200.0 * diff
        return {"w": g}

    return Problem("rosenbrock", {"w": dim}, loss, grad)


def logistic_regression_problem(d: int, k: int) -> Problem:
    """Softmax cross-entropy, mean over the batch.

    Two groups: 'weights' is the [d, k] matrix stored flat, 'bias' is [k].
    Logits use a log-sum-exp formulation so the analytic gradient agrees
    with finite differences to 1e-6 even for large logits.
    """
    d, k = int(d), int(k)
    if d < 1 or k < 2:
        raise DimensionError(f"need d >= 1 features and k >= 2 classes, got ({d}, {k})")

    def unpack(w):
        return w["weights"].reshape(d, k), w["bias"]

    def check_batch(batch):
        x = np.asarray(batch.features, dtype=np.float64)
        y = np.asarray(batch.labels)
        if x.ndim != 2 or x.shape[1] != d:
            raise DimensionError(f"features must be [n, {d}], got {x.shape}")
        if y.shape != (x.shape[0],):
            raise DimensionError("labels must have one entry per example")
        if x.shape[0] < 1:
            raise DataError("batch must contain at least one example")
        if (y < 0).any() or (y >= k).any():
            raise DataError(f"labels must lie in [0, {k})")
        return x, y

    def logits_logprobs(w, x):
        W, c = unpack(w)
        z = x @ W + c
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
        return z, z - lse

    def loss(w, batch):
        x, y = check_batch(batch)
        _, logp = logits_logprobs(w, x)
        return float(-logp[np.arange(x.shape[0]), y].mean())

    def grad(w, batch):
        x, y = check_batch(batch)
        _, logp = logits_logprobs(w, x)
        probs = np.exp(logp)
        probs[np.arange(x.shape[0]), y] -= 1.0
        probs /= x.shape[0]
        return {"weights": (x.T @ probs).ravel(), "bias": probs.sum(axis=0)}

    def top1(w, batch):
        x, y = check_batch(batch)
        z, _ = logits_logprobs(w, x)
        return float((z.argmax(axis=1) == y).mean())

    return Problem("logistic", {"weights": d * k, "bias": k}, loss, grad, top1)


def finite_difference_grad(problem: Problem, w: dict, batch: Batch, h: float = 1e-6) -> dict:
    """Central differences (L(w+h*e_i) - L(w-h*e_i)) / (2h) per coordinate.

    Uses only problem.loss, never problem.grad, so it stays an independent
    oracle for the analytic gradients.
    """
    if not (h > 0.0):
        raise InputError(f"h must be > 0, got {h}")
    out = {}
    work = gr.clone(w)
    for name, vec in w.items():
        g = np.zeros_like(vec)
        for i in range(vec.shape[0]):
            orig = vec[i]
            work[name][i] = orig + h
            f_plus = problem.loss(work, batch)
            work[name][i] = orig - h
            f_minus = problem.loss(work, batch)
            work[name][i] = orig
            g[i] = (f_plus - f_minus) / (2.0 * h)
        out[name] = g
    return out
