"""SGD and Adam update rules over named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check(param, grad):
    if param.shape != grad.shape:
        raise ValueError(f"gradient shape {grad.shape} != parameter shape {param.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")


def sgd_step(param, grad, lr):
    """``param - lr * grad`` (new array)."""
    _check(param, grad)
    return param - lr * grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, param, **hyper) -> AdamState:
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64), **hyper)


def adam_step(param, grad, state: AdamState, lr=1e-3):
    """Bias-corrected Adam; returns ``(new_param, new_state)`` without mutating inputs."""
    _check(param, grad)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new = param - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m, v, t, state.beta1, state.beta2, state.eps)


class SGD:
    name = "sgd"

    def __init__(self, lr: float):
        self.lr = lr
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            params[name] = sgd_step(params[name], g, self.lr)
        self.t += 1

    def state_dict(self) -> dict:
        return {"t": self.t, "tensors": {}}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])


class Adam:
    """Adam over a dict of parameters; moments are created on first sight of a name."""

    name = "adam"

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.hyper = {"beta1": beta1, "beta2": beta2, "eps": eps}
        self.states: dict[str, AdamState] = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        for name, g in grads.items():
            state = self.states.get(name)
            if state is None:
                state = AdamState.zeros_like(params[name], t=self.t, **self.hyper)
            params[name], self.states[name] = adam_step(params[name], g, state, self.lr)
        self.t += 1

    def state_dict(self) -> dict:
        tensors = {}
        for name, s in self.states.items():
            tensors[f"{name}.m"] = s.m
            tensors[f"{name}.v"] = s.v
        return {"t": self.t, "tensors": tensors}

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        tensors = state["tensors"]
        names = {k.rsplit(".", 1)[0] for k in tensors}
        self.states = {
            n: AdamState(np.asarray(tensors[f"{n}.m"], dtype=np.float64),
                         np.asarray(tensors[f"{n}.v"], dtype=np.float64), self.t, **self.hyper)
            for n in sorted(names)
        }


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {name!r}")
