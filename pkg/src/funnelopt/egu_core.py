"""Elementwise multiplicative-update kernels.

Unnormalized exponentiated-gradient (EGU) updates multiply each nonnegative
parameter by exp(-eta * gradient), which preserves nonnegativity and lets
parameters move through orders of magnitude quickly. This module holds the
two update kernels (the correct one and the log-parameter "incorrect" one
kept as a comparison baseline), the relative-entropy divergence that
motivates them, and the clamped exponential shared by every multiplicative
update in the package.

All arithmetic is float64: downstream oracle tests compare at 1e-12 .. 1e-14
tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InputError

__all__ = [
    "ExponentClamp",
    "DEFAULT_CLAMP",
    "clamped_exp",
    "egu_update",
    "incorrect_egu_update",
    "relative_entropy",
]


@dataclass(frozen=True)
class ExponentClamp:
    """Symmetric bound on exponents fed to exp.

    Clipping the exponent (rather than the output) keeps the update monotone
    in the gradient while preventing overflow; e^50 ~ 5e21 is far beyond any
    meaningful gain or scale.
    """

    max_abs_exponent: float = 50.0

    def __post_init__(self):
        if not (self.max_abs_exponent > 0.0):
            raise InputError("max_abs_exponent must be positive")


DEFAULT_CLAMP = ExponentClamp()


def clamped_exp(exponent, clamp: ExponentClamp = DEFAULT_CLAMP):
    """exp with the argument clipped to +/- clamp.max_abs_exponent."""
    c = clamp.max_abs_exponent
    return np.exp(np.clip(exponent, -c, c))


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InputError(f"{name} contains non-finite values")
    return arr


def _check_pair(theta, grad):
    theta = _as_vector(theta, "theta")
    grad = _as_vector(grad, "grad")
    if theta.shape != grad.shape:
        raise DimensionError(
            f"theta and grad lengths differ: {theta.shape[0]} vs {grad.shape[0]}"
        )
    if (theta < 0.0).any():
        raise InputError("theta must be elementwise nonnegative")
    return theta, grad


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not np.isfinite(eta) or eta < 0.0:
        raise InputError(f"eta must be finite and >= 0, got {eta}")
    return eta


def egu_update(theta, grad, eta, clamp: ExponentClamp = DEFAULT_CLAMP) -> np.ndarray:
    """Multiplicative update theta * exp(-eta * grad), elementwise.

    Strictly positive inputs stay strictly positive; the exponent is clipped
    to +/- clamp.max_abs_exponent before exponentiation.
    """
    theta, grad = _check_pair(theta, grad)
    eta = _check_eta(eta)
    out = theta * clamped_exp(-eta * grad, clamp)
    if not np.isfinite(out).all():
        raise InputError("egu_update overflowed to non-finite values")
    return out


def incorrect_egu_update(
    theta, grad, eta, clamp: ExponentClamp = DEFAULT_CLAMP
) -> np.ndarray:
    """The log-parameter variant theta * exp(-eta * theta * grad).

    This is gradient descent on log(theta) followed by exponentiation; it is
    kept only as a comparison baseline. Zero is a fixed point, and it
    coincides with egu_update exactly when theta is the all-ones vector.
    """
    theta, grad = _check_pair(theta, grad)
    eta = _check_eta(eta)
    out = theta * clamped_exp(-eta * theta * grad, clamp)
    if not np.isfinite(out).all():
        raise InputError("incorrect_egu_update overflowed to non-finite values")
    return out


def relative_entropy(u, v) -> float:
    """Unnormalized relative entropy sum_i u_i*log(u_i/v_i) - u_i + v_i.

    Nonnegative, zero iff u == v. Uses the convention 0*log(0) = 0; a zero
    in v paired with a positive u makes the divergence infinite and raises
    DomainError.
    """
    u = _as_vector(u, "u")
    v = _as_vector(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"u and v lengths differ: {u.shape[0]} vs {v.shape[0]}")
    if (u < 0.0).any() or (v < 0.0).any():
        raise InputError("relative_entropy requires nonnegative inputs")
    pos = u > 0.0
    if (v[pos] == 0.0).any():
        raise DomainError("v has a zero where u is positive: divergence is infinite")
    total = float(v.sum() - u.sum())
    if pos.any():
        total += float(np.sum(u[pos] * np.log(u[pos] / v[pos])))
    return total
