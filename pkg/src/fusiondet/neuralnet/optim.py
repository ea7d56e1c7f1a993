"""SGD with momentum, weight decay and a stepwise learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InternalError


@dataclass
class SgdConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    # Ordered (iteration, learning_rate) steps; the last step at or before
    # the current iteration wins.
    schedule: list = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0")
        its = [it for it, _ in self.schedule]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ConfigurationError("schedule iterations must be strictly increasing")

    def lr_at(self, iteration):
        lr = self.learning_rate
        for it, value in self.schedule:
            if iteration >= it:
                lr = value
            else:
                break
        return lr


def sgd_step(params, velocities, config: SgdConfig, iteration: int):
    """One momentum-SGD update over named parameter tensors.

    v <- momentum*v - lr*(grad + weight_decay*param); param += v.
    A parameter whose gradient is exactly all-zero is left untouched
    (velocity included): no gradient path means no update, which also keeps
    weight decay from drifting heads that received no loss signal.
    """
    lr = config.lr_at(iteration)
    for name, p in params.items():
        if p.grad is None:
            raise InternalError(f"parameter {name} has no gradient")
        if not p.grad.any():
            continue
        v = velocities.get(name)
        if v is None:
            v = np.zeros_like(p.data)
            velocities[name] = v
        np.multiply(v, config.momentum, out=v)
        v -= lr * (p.grad + config.weight_decay * p.data)
        p.data += v
    return lr


class SgdOptimizer:
    """Stateful wrapper pairing a parameter dict with persistent velocities."""

    def __init__(self, params: dict, config: SgdConfig):
        self.params = params
        self.config = config
        self.velocities = {}

    def step(self, iteration):
        return sgd_step(self.params, self.velocities, self.config, iteration)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()
