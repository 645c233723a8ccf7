"""Parameter update rules for the flat encoder parameter vector."""

from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class OptimizerKind(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


class OptimizerConfig(BaseModel):
    """Optimizer choice; Adam moments are ignored by SGD."""
    kind: OptimizerKind = OptimizerKind.ADAM
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)

    model_config = ConfigDict(frozen=True)


class SGD:
    """Plain gradient descent."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.learning_rate * grad


class Adam:
    """Adam with bias-corrected moments."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def create_optimizer(config: OptimizerConfig, learning_rate: float):
    """Factory mirroring the config kind."""
    if config.kind is OptimizerKind.SGD:
        return SGD(learning_rate)
    return Adam(learning_rate, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
