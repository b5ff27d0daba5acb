"""The funneled momentum meta-optimizer.

Wraps any internal optimizer's pre-conditioned gradient g_tilde in a
heavy-ball momentum update with two extra trained hyperparameters: a
nonnegative per-coordinate gain vector multiplying g_tilde, and a
nonnegative step-size scale multiplying the whole momentum step. Both are
trained by unnormalized exponentiated-gradient updates on their
hypergradients, so they stay positive and can sweep through orders of
magnitude.

One step, in this order (the order is observable and pinned by a golden
trace test):

    p    <- clip(p * exp(gamma_p * g (.) m_hat), clip_max)
    s    <- clip(s * exp(gamma_s * g . nu), clip_max)
    m    <- beta * m + (1 - beta) * g_tilde
    nu   <- mu * nu + eta * (p (.) g_tilde)
    w    <- w - s * nu

where m_hat is the zero-init bias-corrected m (m_hat := 0 on the very
first step) and (.) is the elementwise product. The normalized variants
replace g (.) m_hat by sign agreement and g . nu by cosine similarity so a
single (gamma_p, gamma_s) works across layers of very different gradient
norms. The multiplicative scale rule s * (1 + gamma_s * cos) of earlier
step-size adaptation work is the first-order Taylor approximation of the
normalized EGU rule; it is available as a comparison baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import groups as gr
from .egu_core import DEFAULT_CLAMP, ExponentClamp, clamped_exp, egu_update
from .errors import ConfigError, DimensionError, InputError

SCALE_SCOPES = ("per_group", "global")
VARIANTS = ("egu", "hypergrad_baseline")

GLOBAL_SCOPE_NAME = "global"

# Floor for the first-order baseline only: s*(1+x) can go nonpositive,
# whereas the exponential form never does.
HYPERGRAD_SCALE_FLOOR = 1e-12

# The exponential updates preserve positivity in exact arithmetic, but a long
# run of clamped negative exponents can underflow a gain or scale to exactly
# 0.0 in IEEE doubles, and zero is absorbing under multiplication. Flooring
# at the smallest normal double keeps the (0, clip_max] invariant without
# affecting any representable dynamics.
POSITIVITY_FLOOR = float(np.finfo(np.float64).tiny)

__all__ = [
    "FunnelConfig",
    "FunnelState",
    "funnel_init",
    "bias_corrected_ema",
    "gain_update",
    "scale_update",
    "hypergrad_scale_update",
    "funnel_step",
]


@dataclass(frozen=True)
class FunnelConfig:
    eta: float = 0.1            # base learning rate
    mu: float = 0.9             # heavy-ball momentum
    beta: float = 0.9           # pre-conditioned-gradient EMA decay
    gamma_p: float = 1e-4       # gain learning rate
    gamma_s: float = 1e-3       # scale learning rate
    normalized: bool = False
    clip_max: float = 1e3       # upper bound for gains and scales
    scale_scope: str = "per_group"
    variant: str = "egu"

    def __post_init__(self):
        if not (self.eta > 0.0) or not math.isfinite(self.eta):
            raise ConfigError(f"eta must be finite and > 0, got {self.eta}")
        if not (0.0 <= self.mu < 1.0):
            raise ConfigError(f"mu must lie in [0, 1), got {self.mu}")
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"beta must lie in [0, 1), got {self.beta}")
        if self.gamma_p < 0.0 or self.gamma_s < 0.0:
            raise ConfigError("gamma_p and gamma_s must be >= 0")
        if not (self.clip_max > 0.0):
            raise ConfigError(f"clip_max must be > 0, got {self.clip_max}")
        if self.scale_scope not in SCALE_SCOPES:
            raise ConfigError(f"scale_scope must be one of {SCALE_SCOPES}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")


@dataclass
class FunnelState:
    """Mutable per-run state; strictly serial, one owner.

    scales has one entry per group (scale_scope per_group) or the single
    key 'global'. Gains start at one and momentum/EMA at zero, which makes
    the very first step identical to a plain pre-conditioned gradient step.
    """

    step: int = 0
    momentum: dict = field(default_factory=dict)   # nu, per group
    grad_ema: dict = field(default_factory=dict)   # m, per group
    gains: dict = field(default_factory=dict)      # p, per group
    scales: dict = field(default_factory=dict)     # s, per scope entry


def funnel_init(config: FunnelConfig, shapes: dict) -> FunnelState:
    """State at t=0: momentum 0, EMA 0, gains 1, scales 1."""
    if not isinstance(config, FunnelConfig):
        raise ConfigError("config must be a FunnelConfig")
    momentum = gr.zeros_like_shapes(shapes)
    state = FunnelState(
        step=0,
        momentum=momentum,
        grad_ema=gr.zeros_like_shapes(shapes),
        gains={name: np.ones(int(size), dtype=np.float64) for name, size in shapes.items()},
    )
    if config.scale_scope == "per_group":
        state.scales = {name: 1.0 for name in shapes}
    else:
        state.scales = {GLOBAL_SCOPE_NAME: 1.0}
    return state


def bias_corrected_ema(m, beta: float, t_next: int) -> np.ndarray:
    """Remove the zero-initialization bias: m / (1 - beta**t_next).

    Valid for t_next >= 1; at t=0 the caller uses zero directly (the EMA is
    exactly zero there and the correction formula is 0/0).
    """
    if not (0.0 <= beta < 1.0):
        raise ConfigError(f"beta must lie in [0, 1), got {beta}")
    if t_next < 1:
        raise InputError(f"t_next must be >= 1, got {t_next}")
    m = np.asarray(m, dtype=np.float64)
    return m / (1.0 - beta ** int(t_next))


def _sign(x: np.ndarray) -> np.ndarray:
    # np.sign already maps 0 -> 0, the "no evidence, no change" convention.
    return np.sign(x)


def gain_update(
    p,
    g,
    m_hat,
    gamma_p: float,
    normalized: bool,
    clip_max: float,
    clamp: ExponentClamp = DEFAULT_CLAMP,
) -> np.ndarray:
    """One EGU step on the gains.

    Unnormalized exponent: gamma_p * g * m_hat (the negated hypergradient of
    the loss w.r.t. the gains). Normalized: gamma_p * sign(g) * sign(m_hat),
    which is invariant to any positive per-coordinate rescaling of g.
    Clipped above at clip_max; positivity is preserved by the exponential.
    """
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    m_hat = np.asarray(m_hat, dtype=np.float64)
    if p.shape != g.shape or p.shape != m_hat.shape:
        raise DimensionError(
            f"gain_update shapes differ: p {p.shape}, g {g.shape}, m_hat {m_hat.shape}"
        )
    if normalized:
        drive = _sign(g) * _sign(m_hat)
    else:
        drive = g * m_hat
    new_p = egu_update(p, -drive, gamma_p, clamp)
    return np.clip(new_p, POSITIVITY_FLOOR, clip_max)


def _cosine(g: np.ndarray, nu: np.ndarray) -> float:
    """Cosine of the angle between g and nu; 0 if either has zero norm."""
    norm_g = float(np.linalg.norm(g))
    norm_nu = float(np.linalg.norm(nu))
    if norm_g == 0.0 or norm_nu == 0.0:
        return 0.0
    return float(np.dot(g, nu)) / (norm_g * norm_nu)


def scale_update(
    s: float,
    g,
    nu,
    gamma_s: float,
    normalized: bool,
    clip_max: float,
    clamp: ExponentClamp = DEFAULT_CLAMP,
) -> float:
    """One EGU step on a step-size scale.

    Unnormalized exponent: gamma_s * (g . nu). Normalized: gamma_s * cosine
    of the angle between g and nu, which is invariant to positive rescaling
    of either vector; a zero norm means no evidence and leaves s unchanged.
    """
    g = np.asarray(g, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if g.shape != nu.shape:
        raise DimensionError(f"scale_update shapes differ: g {g.shape}, nu {nu.shape}")
    if normalized:
        drive = _cosine(g, nu)
    else:
        drive = float(np.dot(g, nu))
    new_s = float(s) * float(clamped_exp(gamma_s * drive, clamp))
    return min(max(new_s, POSITIVITY_FLOOR), clip_max)


def hypergrad_scale_update(
    s: float, g, nu, gamma_s: float, clip_max: float = 1e3
) -> float:
    """First-order baseline s * (1 + gamma_s * cos(g, nu)).

    The 1+x form can cross zero for gamma_s > 1, so the result is floored
    at a tiny positive value; clipped above at clip_max like the EGU form.
    """
    g = np.asarray(g, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if g.shape != nu.shape:
        raise DimensionError(
            f"hypergrad_scale_update shapes differ: g {g.shape}, nu {nu.shape}"
        )
    new_s = float(s) * (1.0 + gamma_s * _cosine(g, nu))
    return min(max(new_s, HYPERGRAD_SCALE_FLOOR), clip_max)


def _scope_items(config: FunnelConfig, g: dict, nu: dict):
    """(scope name, g vector, nu vector) per scale entry."""
    if config.scale_scope == "per_group":
        return [(name, g[name], nu[name]) for name in g]
    return [(GLOBAL_SCOPE_NAME, gr.concat(g), gr.concat(nu))]


def funnel_step(
    state: FunnelState,
    config: FunnelConfig,
    g: dict,
    g_tilde: dict,
    w: dict,
    clamp: ExponentClamp = DEFAULT_CLAMP,
):
    """Advance one step, mutating state and w in place.

    g and g_tilde are the raw and pre-conditioned gradients at the current
    w on the same batch. Gains are updated first (against the bias-corrected
    EMA of past pre-conditioned gradients), then the scale (against the
    previous momentum), then the EMA, momentum, and parameters. Non-finite
    or mis-shaped inputs refuse the step and leave everything unchanged.
    """
    gr.check_structure(state.momentum, g, "funnel_step g")
    gr.check_structure(state.momentum, g_tilde, "funnel_step g_tilde")
    gr.check_structure(state.momentum, w, "funnel_step w")
    gr.check_finite(g, "funnel_step g")
    gr.check_finite(g_tilde, "funnel_step g_tilde")
    gr.check_finite(w, "funnel_step w")

    t = state.step
    if t == 0:
        m_hat = {name: np.zeros_like(arr) for name, arr in state.grad_ema.items()}
    else:
        m_hat = {
            name: bias_corrected_ema(arr, config.beta, t)
            for name, arr in state.grad_ema.items()
        }

    new_gains = {
        name: gain_update(
            state.gains[name], g[name], m_hat[name],
            config.gamma_p, config.normalized, config.clip_max, clamp,
        )
        for name in g
    }

    new_scales = {}
    for scope, g_vec, nu_vec in _scope_items(config, g, state.momentum):
        if config.variant == "hypergrad_baseline":
            new_scales[scope] = hypergrad_scale_update(
                state.scales[scope], g_vec, nu_vec, config.gamma_s, config.clip_max
            )
        else:
            new_scales[scope] = scale_update(
                state.scales[scope], g_vec, nu_vec,
                config.gamma_s, config.normalized, config.clip_max, clamp,
            )

    state.gains = new_gains
    state.scales = new_scales
    for name in g:
        ema = state.grad_ema[name]
        ema *= config.beta
        ema += (1.0 - config.beta) * g_tilde[name]
        nu = state.momentum[name]
        nu *= config.mu
        nu += config.eta * (new_gains[name] * g_tilde[name])
        scope = name if config.scale_scope == "per_group" else GLOBAL_SCOPE_NAME
        w[name] -= new_scales[scope] * nu
    state.step = t + 1
    return state, w
