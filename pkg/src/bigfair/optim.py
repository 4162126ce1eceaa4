"""Adam with bias correction, over a named parameter dict."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor


class MissingGradientError(RuntimeError):
    pass


class Adam:
    """Standard Adam. Moments are kept per parameter name; step() applies
    one update to every parameter and clears the gradients afterwards.

    Parameters without a gradient are skipped, matching the usual framework
    convention: some tensors only join the graph on certain batches (the
    fallback vector for users with no history, for example). Pass
    strict=True to turn a missing gradient into an error instead, which is
    handy when checking that a forward pass wires everything up.
    """

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        strict: bool = False,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.strict = strict
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                if self.strict:
                    raise MissingGradientError(
                        f"parameter {name!r} has no gradient; "
                        "was it used in the recorded forward pass?"
                    )
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * update
            p.grad = None

    def state_summary(self) -> dict[str, float]:
        """Scalar diagnostics, mainly for the run manifest."""
        return {
            "t": self.t,
            "m_norm": math.sqrt(sum(float((m * m).sum()) for m in self.m.values())),
            "v_norm": math.sqrt(sum(float((v * v).sum()) for v in self.v.values())),
        }
