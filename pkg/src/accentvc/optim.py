"""Parameter collection and the Adam update used by every trainer here.

A ``ParamStore`` owns Parameters in insertion order; that order is the
serialization order of checkpoints and must stay fixed.  ``adam_step``
applies the standard bias-corrected Adam recurrence; an optional name
predicate freezes everything else, which is how the alternating
generator/discriminator phases are implemented.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, leaf
from .errors import ConfigError, DomainError, StateError


def lr_schedule(epoch: int, base_lr: float = 1e-3, decay_rate: float = 0.7,
                decay_interval: int = 15) -> float:
    """Stepwise exponential decay: base_lr * decay_rate ** (epoch // interval)."""
    if epoch < 0:
        raise DomainError(f"epoch must be non-negative, got {epoch}")
    if decay_interval <= 0:
        raise ConfigError(f"decay_interval must be positive, got {decay_interval}")
    return base_lr * decay_rate ** (epoch // decay_interval)


class ParamStore:
    """Ordered, name-unique set of Parameters plus the Adam step counter."""

    def __init__(self):
        self._params: dict[str, Parameter] = {}
        self.step_count = 0

    def add(self, name: str, value) -> Parameter:
        if name in self._params:
            raise StateError(f"parameter {name!r} already registered")
        p = Parameter(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise StateError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def params(self) -> list[Parameter]:
        return list(self._params.values())

    def l(self, name: str):
        """Tape leaf for the named parameter (shorthand used by models)."""
        return leaf(self._params[name])

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def n_values(self) -> int:
        return sum(p.value.size for p in self._params.values())


def adam_step(store: ParamStore, lr: float, update: "callable | None" = None,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam step over the store.

    ``update`` is an optional predicate on parameter names; parameters it
    rejects keep their values and moments untouched (frozen).  The step
    counter advances once per call regardless, and every gradient in the
    store is cleared afterwards so stale gradients cannot leak into the
    next phase.
    """
    if lr <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for p in store.params():
        if update is not None and not update(p.name):
            continue
        p.m[...] = beta1 * p.m + (1.0 - beta1) * p.grad
        p.v[...] = beta2 * p.v + (1.0 - beta2) * p.grad * p.grad
        p.value[...] = p.value - lr * (p.m / bc1) / (np.sqrt(p.v / bc2) + eps)
    store.zero_grads()


def global_grad_norm(store: ParamStore, names=None) -> float:
    """L2 norm over the concatenated gradients (diagnostic, probes' stop rule)."""
    total = 0.0
    for p in store.params():
        if names is not None and p.name not in names:
            continue
        total += float((p.grad * p.grad).sum())
    return float(np.sqrt(total))
