"""Built-in variable-coefficient test problem on the unit square.

Homogeneous Dirichlet problem -div(kappa grad u) = f with

    kappa(x1, x2) = 1 + (1 + x1)(1 + x2) + eps sin(10 pi x1) sin(5 pi x2),
    u(x1, x2)     = sin(3 pi x1) x2 (1 - x2) + eps sin(pi x1/eps) sin(pi x2/eps),

eps = 0.2, so the oscillatory term is 0.2 sin(5 pi x1) sin(5 pi x2) and u
vanishes on the whole boundary.  The source term is the hand-differentiated
-div(kappa grad u); all callables are numpy-vectorized in (x1, x2).
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

EPS = 0.2
_PI = np.pi


class Problem(NamedTuple):
    kappa: Callable
    f: Callable
    u_exact: Callable
    grad_u_exact: Callable


def _kappa(x1, x2):
    return 1.0 + (1.0 + x1) * (1.0 + x2) \
        + EPS * np.sin(10 * _PI * x1) * np.sin(5 * _PI * x2)


def _u(x1, x2):
    return np.sin(3 * _PI * x1) * x2 * (1.0 - x2) \
        + EPS * np.sin(5 * _PI * x1) * np.sin(5 * _PI * x2)


def _grad_u(x1, x2):
    d1 = 3 * _PI * np.cos(3 * _PI * x1) * x2 * (1.0 - x2) \
        + _PI * np.cos(5 * _PI * x1) * np.sin(5 * _PI * x2)
    d2 = np.sin(3 * _PI * x1) * (1.0 - 2.0 * x2) \
        + _PI * np.sin(5 * _PI * x1) * np.cos(5 * _PI * x2)
    return np.stack([d1, d2], axis=-1)


def _f(x1, x2):
    g = _grad_u(x1, x2)
    u11 = -9 * _PI ** 2 * np.sin(3 * _PI * x1) * x2 * (1.0 - x2) \
        - 5 * _PI ** 2 * np.sin(5 * _PI * x1) * np.sin(5 * _PI * x2)
    u22 = -2.0 * np.sin(3 * _PI * x1) \
        - 5 * _PI ** 2 * np.sin(5 * _PI * x1) * np.sin(5 * _PI * x2)
    k1 = (1.0 + x2) + 2 * _PI * np.cos(10 * _PI * x1) * np.sin(5 * _PI * x2)
    k2 = (1.0 + x1) + _PI * np.sin(10 * _PI * x1) * np.cos(5 * _PI * x2)
    return -(k1 * g[..., 0] + k2 * g[..., 1] + _kappa(x1, x2) * (u11 + u22))


def builtin_problem() -> Problem:
    """Coefficient, source, exact solution and its gradient for the test problem."""
    return Problem(kappa=_kappa, f=_f, u_exact=_u, grad_u_exact=_grad_u)
