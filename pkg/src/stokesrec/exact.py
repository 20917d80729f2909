"""Closed-form Stokes fields used for manufactured tests and benchmarks.

All callables take coordinate arrays ``(x, y)`` and broadcast: ``u`` and
``f`` return shape ``(2,) + shape``, ``p`` returns ``shape``, ``grad_u``
returns ``(2, 2) + shape`` with ``[i, j] = d u_i / d x_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ExactSolution:
    name: str
    u: Callable
    p: Callable
    f: Callable
    grad_u: Callable


def _zero2(x, y):
    return np.zeros((2,) + np.broadcast(x, y).shape)


def exponential_flow() -> ExactSolution:
    """Divergence-free flow with zero body force and linear pressure."""

    def u(x, y):
        return np.stack([np.exp(x) * np.cos(y),
                         -np.exp(x) * np.sin(y) + 2.0 * x * x])

    def p(x, y):
        return 2.0 * (2.0 * y - 1.0) + 0.0 * x

    def grad_u(x, y):
        ex = np.exp(x)
        return np.stack([
            np.stack([ex * np.cos(y), -ex * np.sin(y)]),
            np.stack([-ex * np.sin(y) + 4.0 * x, -ex * np.cos(y)]),
        ])

    return ExactSolution("exponential", u, p, _zero2, grad_u)


def taylor_vortex() -> ExactSolution:
    """Trigonometric cellular flow; the body force keeps it a Stokes solution."""
    pi = np.pi

    def u(x, y):
        return np.stack([-np.cos(pi * x) * np.sin(pi * y),
                         np.sin(pi * x) * np.cos(pi * y)])

    def p(x, y):
        return -np.cos(2 * pi * x) - np.cos(2 * pi * y)

    def f(x, y):
        return np.stack([
            -2 * pi * pi * np.cos(pi * x) * np.sin(pi * y)
            + 2 * pi * np.sin(2 * pi * x),
            2 * pi * pi * np.sin(pi * x) * np.cos(pi * y)
            + 2 * pi * np.sin(2 * pi * y),
        ])

    def grad_u(x, y):
        return np.stack([
            np.stack([pi * np.sin(pi * x) * np.sin(pi * y),
                      -pi * np.cos(pi * x) * np.cos(pi * y)]),
            np.stack([pi * np.cos(pi * x) * np.cos(pi * y),
                      -pi * np.sin(pi * x) * np.sin(pi * y)]),
        ])

    return ExactSolution("taylor", u, p, f, grad_u)


def rigid_motion(a: float = 0.0, b: float = 0.0, c: float = 0.0,
                 p_const: float = 0.0) -> ExactSolution:
    """Rigid velocity (a - c y, b + c x) with constant pressure.

    Strain and divergence vanish identically, so any Stokes recovery that
    reproduces its measurement functionals exactly must return it exactly.
    """

    def u(x, y):
        shape = np.broadcast(x, y).shape
        return np.stack([np.broadcast_to(a - c * y, shape),
                         np.broadcast_to(b + c * x, shape)])

    def p(x, y):
        return np.broadcast_to(float(p_const), np.broadcast(x, y).shape)

    def grad_u(x, y):
        shape = np.broadcast(x, y).shape
        g = np.zeros((2, 2) + shape)
        g[0, 1] = -c
        g[1, 0] = c
        return g

    return ExactSolution(f"rigid({a},{b},{c},{p_const})", u, p, _zero2, grad_u)


CASES = {
    "exponential": exponential_flow,
    "taylor": taylor_vortex,
}


def get_case(name: str) -> ExactSolution:
    try:
        return CASES[name]()
    except KeyError:
        raise ValueError(f"unknown exact solution {name!r},"
                         f" choose from {sorted(CASES)}") from None
