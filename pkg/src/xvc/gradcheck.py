"""Central finite-difference verification of backward rules."""
import numpy as np

from .errors import ContractError
from .tensor import Tensor, as_tensor


def analytic_grad(f, x):
    """Gradient of scalar ``f`` at ``x`` via the registered backward rules."""
    leaf = Tensor(as_tensor(x).data, requires_grad=True)
    loss = f(leaf)
    loss.backward()
    if leaf.grad is None:
        return np.zeros(leaf.shape)
    return leaf.grad


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f`` around ``x``, one coordinate at a time."""
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    base = np.array(as_tensor(x).data, dtype=np.float64)
    flat = base.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar(f(Tensor(base)))
        flat[i] = orig - eps
        fm = _scalar(f(Tensor(base)))
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return out.reshape(base.shape)


def _scalar(v):
    if isinstance(v, Tensor):
        return v.item()
    return float(np.asarray(v).reshape(()))


def finite_difference_check(f, x, eps=1e-5, surrogate=None):
    """Max over coordinates of |analytic - fd| / max(1, |fd|).

    ``surrogate`` replaces ``f`` on the finite-difference side; use it for
    straight-through ops, whose backward follows a smooth stand-in rather
    than the piecewise-constant forward.
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    ana = analytic_grad(f, x)
    num = numeric_grad(surrogate or f, x, eps)
    return float(np.max(np.abs(ana - num) / np.maximum(1.0, np.abs(num))))
