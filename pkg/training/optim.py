import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import torch

logger = logging.getLogger(__name__)


class NonFiniteGradientError(RuntimeError):
    def __init__(self, name: str):
        super().__init__(f"Non-finite gradient for parameter {name!r}; aborting")
        self.name = name


@dataclass
class AdamState:
    """First/second moment estimates per parameter and the global step."""
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, torch.Tensor]) -> "AdamState":
        return cls(
            m={name: torch.zeros_like(p) for name, p in params.items()},
            v={name: torch.zeros_like(p) for name, p in params.items()},
        )


@torch.no_grad()
def adam_step(params: Mapping[str, torch.Tensor], grads: Mapping[str, torch.Tensor],
              state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise NonFiniteGradientError(name)
        if params[name].shape != g.shape:
            raise ValueError(f"{name}: gradient shape {tuple(g.shape)} != parameter shape "
                             f"{tuple(params[name].shape)}")

    state.t += 1
    correction1 = 1.0 - beta1 ** state.t
    correction2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, torch.zeros_like(p))
        v = state.v.setdefault(name, torch.zeros_like(p))
        m.mul_(beta1).add_(g, alpha=1.0 - beta1)
        v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
        m_hat = m / correction1
        v_hat = v / correction2
        p.sub_(lr * m_hat / (v_hat.sqrt() + eps))
    return state
