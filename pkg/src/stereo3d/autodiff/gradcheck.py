"""Finite-difference gradient checking.

Used by the test suite to validate every differentiable op against a
central-difference oracle at f64. The helper perturbs each input element
in turn, so keep the test tensors small.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, no_grad


def random_input(shape, seed, lo: float = -1.0, hi: float = 1.0) -> Tensor:
    """Seeded uniform tensor at f64 with requires_grad set."""
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(lo, hi, size=shape).astype(np.float64), requires_grad=True)


def check_gradients(fn, inputs, seed: int = 0, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps the input Tensors to an output Tensor of any shape; the
    check reduces it to a scalar L = sum(output * r) with r drawn from a
    seeded uniform so every output element influences L. Relative error is
    |analytic - cd| / max(|analytic|, |cd|, 1e-8) per element.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("gradient checks require f64 inputs")

    # distinct stream from random_input(seed): if r coincided with an input
    # drawn from the same seed, ops whose backward projects out components
    # of that input (batch norm) would see a degenerate near-zero gradient
    rng = np.random.default_rng([seed, 0x5EED])
    out = fn(*inputs)
    r = rng.uniform(-1.0, 1.0, size=out.shape)

    def scalar_loss():
        y = fn(*inputs)
        return float((y.data * r).sum())

    loss = ops.sum_(ops.mul(out, Tensor(r)))
    for t in inputs:
        t.zero_grad()
    loss.backward()

    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad
        data = t.data
        with no_grad():
            for idx in np.ndindex(*data.shape) if data.shape else [()]:
                orig = data[idx]
                data[idx] = orig + h
                lp = scalar_loss()
                data[idx] = orig - h
                lm = scalar_loss()
                data[idx] = orig
                cd = (lp - lm) / (2.0 * h)
                a = analytic[idx]
                if not (np.isfinite(a) and np.isfinite(cd)):
                    # python max() would swallow a NaN; fail loudly instead
                    return float("inf")
                rel = abs(a - cd) / max(abs(a), abs(cd), 1e-8)
                worst = max(worst, rel)
    return worst
