"""Internal optimizers: raw gradients in, pre-conditioned gradients out.

Each kind is a stateful transformer g -> g_tilde. The surrounding
meta-algorithm never sees the accumulators, only the transformed gradient,
so any kind can be swapped in without touching the meta update.

Conventions are pinned for bit-exact oracle tests: adagrad accumulates
before dividing, and epsilon sits outside the square root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import groups as gr
from .errors import ConfigError

KINDS = ("identity_sgd", "adagrad", "adagrad_ema", "rmsprop", "adam")

__all__ = ["KINDS", "PreconditionerKind", "PreconditionerState", "init_preconditioner", "precondition"]


@dataclass(frozen=True)
class PreconditionerKind:
    """Which transform to apply, plus its constants.

    second_moment_decay is rmsprop/adam's squared-gradient EMA decay,
    first_moment_decay is adam's gradient EMA decay, ema_decay is the decay
    of the EMA applied on top of adagrad's output for kind adagrad_ema.
    """

    tag: str = "identity_sgd"
    epsilon: float = 1e-8
    second_moment_decay: float = 0.999
    first_moment_decay: float = 0.9
    ema_decay: float = 0.9

    def __post_init__(self):
        if self.tag not in KINDS:
            raise ConfigError(f"unknown preconditioner kind '{self.tag}'")
        if not (self.epsilon > 0.0):
            raise ConfigError("epsilon must be > 0")
        for name in ("second_moment_decay", "first_moment_decay", "ema_decay"):
            value = getattr(self, name)
            if not (0.0 <= value < 1.0):
                raise ConfigError(f"{name} must lie in [0, 1), got {value}")


@dataclass
class PreconditionerState:
    """Per-group accumulators for one training run; mutated serially."""

    kind: PreconditionerKind
    shapes: dict = field(default_factory=dict)
    step: int = 0
    sq_sum: dict = field(default_factory=dict)      # adagrad / adagrad_ema
    second_moment: dict = field(default_factory=dict)  # rmsprop / adam
    first_moment: dict = field(default_factory=dict)   # adam
    output_ema: dict = field(default_factory=dict)      # adagrad_ema


def init_preconditioner(kind: PreconditionerKind, shapes: dict) -> PreconditionerState:
    """Zero accumulators matching the given group shapes, step counter 0."""
    gr.zeros_like_shapes(shapes)  # rejects an empty shape map
    state = PreconditionerState(kind=kind, shapes=dict(shapes))
    tag = kind.tag
    if tag in ("adagrad", "adagrad_ema"):
        state.sq_sum = gr.zeros_like_shapes(shapes)
    if tag == "adagrad_ema":
        state.output_ema = gr.zeros_like_shapes(shapes)
    if tag in ("rmsprop", "adam"):
        state.second_moment = gr.zeros_like_shapes(shapes)
    if tag == "adam":
        state.first_moment = gr.zeros_like_shapes(shapes)
    return state


def precondition(state: PreconditionerState, g: dict) -> dict:
    """Transform one gradient, mutating the accumulators in place."""
    kind = state.kind
    tag = kind.tag
    gr.check_shapes(state.shapes, g, "precondition")
    state.step += 1
    t = state.step

    if tag == "identity_sgd":
        return {name: arr.copy() for name, arr in g.items()}

    if tag in ("adagrad", "adagrad_ema"):
        out = {}
        for name, grad in g.items():
            acc = state.sq_sum[name]
            acc += grad * grad
            out[name] = grad / (np.sqrt(acc) + kind.epsilon)
        if tag == "adagrad":
            return out
        # EMA over the adagrad output, with zero-init bias correction.
        decay = kind.ema_decay
        corrected = {}
        for name, val in out.items():
            ema = state.output_ema[name]
            ema *= decay
            ema += (1.0 - decay) * val
            corrected[name] = ema / (1.0 - decay**t)
        return corrected

    if tag == "rmsprop":
        rho = kind.second_moment_decay
        out = {}
        for name, grad in g.items():
            v = state.second_moment[name]
            v *= rho
            v += (1.0 - rho) * grad * grad
            out[name] = grad / (np.sqrt(v) + kind.epsilon)
        return out

    # adam
    b1, b2 = kind.first_moment_decay, kind.second_moment_decay
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    out = {}
    for name, grad in g.items():
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * grad
        v *= b2
        v += (1.0 - b2) * grad * grad
        out[name] = (m / bc1) / (np.sqrt(v / bc2) + kind.epsilon)
    return out
