"""
Adaptive-Moment Optimizer
=========================

Standard bias-corrected first/second moment update:

    m <- b1 m + (1 - b1) g
    v <- b2 v + (1 - b2) g^2
    p <- p - lr * m_hat / (sqrt(v_hat) + eps)

The state is single-owner; `adam_step` updates parameters and state in
place and is deterministic given its inputs.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from core.layers import Tensor
from exceptions import StructuralError, WeightFormatError
from models import OptimizerConfig


logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Per-parameter moment accumulators plus the step counter."""
    config: OptimizerConfig
    step: int = 0
    first_moment: dict[str, Tensor] = field(default_factory=dict)
    second_moment: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def for_parameters(cls, params: dict[str, Tensor], config: OptimizerConfig) -> "OptimizerState":
        return cls(
            config=config,
            first_moment={name: np.zeros_like(p) for name, p in params.items()},
            second_moment={name: np.zeros_like(p) for name, p in params.items()},
        )


def adam_step(
    params: dict[str, Tensor],
    grads: dict[str, Tensor],
    state: OptimizerState,
) -> dict[str, Tensor]:
    """
    Apply one update to every parameter that has a gradient.

    Parameters are updated in place (the same arrays are returned), so
    networks holding references to them see the new values.
    """
    cfg = state.config
    state.step += 1
    t = state.step
    correction1 = 1.0 - cfg.beta1 ** t
    correction2 = 1.0 - cfg.beta2 ** t

    for name, grad in grads.items():
        param = params[name]
        if grad.shape != param.shape:
            raise StructuralError(f"gradient of {name}", param.shape, grad.shape)
        m = state.first_moment.setdefault(name, np.zeros_like(param))
        v = state.second_moment.setdefault(name, np.zeros_like(param))
        if m.shape != param.shape:
            raise StructuralError(f"moment of {name}", param.shape, m.shape)

        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * grad
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (grad * grad)

        m_hat = m / correction1
        v_hat = v / correction2
        param -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)).astype(param.dtype)

    return params


class Adam:
    """Convenience wrapper binding a parameter dict to its OptimizerState."""

    def __init__(self, params: dict[str, Tensor], config: OptimizerConfig):
        self.params = params
        self.state = OptimizerState.for_parameters(params, config)

    def step(self, grads: dict[str, Tensor]) -> None:
        adam_step(self.params, grads, self.state)

    def save(self, path: Union[str, Path]) -> None:
        """Write moments and step counter as a .npz archive."""
        arrays = {"__step__": np.asarray(self.state.step)}
        for name in self.params:
            arrays[f"m/{name}"] = self.state.first_moment[name]
            arrays[f"v/{name}"] = self.state.second_moment[name]
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        logger.debug(f"Saved optimizer state (step {self.state.step}) to {path}")

    def load(self, path: Union[str, Path]) -> None:
        with np.load(path) as archive:
            for name, param in self.params.items():
                for prefix, target in (("m", self.state.first_moment), ("v", self.state.second_moment)):
                    key = f"{prefix}/{name}"
                    if key not in archive:
                        raise WeightFormatError(name, "missing optimizer moment", str(path))
                    value = archive[key]
                    if value.shape != param.shape:
                        raise WeightFormatError(name, f"moment shape {value.shape} != {param.shape}", str(path))
                    target[name] = value.astype(param.dtype)
            self.state.step = int(archive["__step__"])
        logger.info(f"Restored optimizer state at step {self.state.step} from {path}")
