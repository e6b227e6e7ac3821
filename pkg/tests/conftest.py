"""Shared test helpers: the central finite-difference gradient oracle.

Analytic gradients from the tape are compared against float64 central
differences of an independently evaluated forward closure. The closure is
rebuilt from plain numpy arrays on every probe so no tape state leaks in.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from osadet.tensor import Tensor


def finite_difference(f: Callable[..., float], arrays: Sequence[np.ndarray], eps: float = 1e-4) -> list[np.ndarray]:
    """Central-difference gradients of scalar f(*arrays) w.r.t. every array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gf = a.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = f(*arrays)
            flat[j] = orig - eps
            fm = f(*arrays)
            flat[j] = orig
            gf[j] = (fp - fm) / (2.0 * eps)
        grads.append(g)
    return grads


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    # the floor keeps structurally-zero gradients (both sides ~ FD noise)
    # from dividing noise by noise
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(b)), 1e-6)
    return float(np.linalg.norm(a - b)) / denom


def grad_check(
    build: Callable[..., Tensor],
    arrays: Sequence[np.ndarray],
    seed: int = 0,
    eps: float = 1e-4,
    tol: float = 1e-3,
) -> None:
    """Assert tape gradients of sum(build(*xs) * R) match central differences.

    R is a fixed random projection so non-scalar outputs reduce to a scalar
    without losing per-element gradient information. Runs in float64.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    out_probe = build(*[Tensor(a.copy(), dtype=np.float64) for a in arrays])
    proj = np.random.default_rng(seed + 12345).standard_normal(out_probe.shape)

    xs = [Tensor(a.copy(), dtype=np.float64, requires_grad=True) for a in arrays]
    loss = (build(*xs) * Tensor(proj, dtype=np.float64)).sum()
    loss.backward()
    analytic = [x.grad if x.grad is not None else np.zeros_like(a) for x, a in zip(xs, arrays)]

    def f(*vals: np.ndarray) -> float:
        out = build(*[Tensor(v.copy(), dtype=np.float64) for v in vals])
        return float((out.data * proj).sum())

    numeric = finite_difference(f, arrays, eps=eps)
    for i, (an, nu) in enumerate(zip(analytic, numeric)):
        err = rel_error(an, nu)
        assert err <= tol, f"gradient mismatch on input {i}: rel error {err:.3e} > {tol}"
