"""Central finite-difference verification of analytic gradients.

Used by the test suite to check every hand-written backward pass
against a numeric derivative of the forward pass alone.
"""

from __future__ import annotations

import numpy as np


def fd_gradient(loss_fn, array: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """Central differences of `loss_fn()` w.r.t. every element of `array`.

    `array` is perturbed in place and restored; `loss_fn` must read it
    through the live reference.
    """
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        up = loss_fn()
        flat[i] = original - eps
        down = loss_fn()
        flat[i] = original
        flat_grad[i] = (up - down) / (2.0 * eps)
    return grad


def fd_gradients(
    loss_fn, arrays: dict[str, np.ndarray], eps: float = 1e-4
) -> dict[str, np.ndarray]:
    """Finite-difference gradients for a dict of live parameter arrays."""
    return {name: fd_gradient(loss_fn, arr, eps) for name, arr in arrays.items()}


def group_relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6
) -> float:
    """Norm-level relative error between two gradients of one tensor.

    ||a - n|| / max(||a||, ||n||, floor). The floor keeps structurally
    zero gradients (where both sides are roundoff noise) from dividing
    by ~0; absolute agreement at that scale is a match.
    """
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), floor)
    return diff / scale
