"""C-infinity cutoff profiles built from the exp(-1/t) mollifier.

``smoothstep(t)`` rises from 0 (t <= 0) to 1 (t >= 1)::

    f(t) = exp(-1/t) for t > 0, else 0
    smoothstep(t) = f(t) / (f(t) + f(1 - t))

Every cutoff in the package is an affine reparametrisation of it, so results
depend only on this one definition.
"""

from __future__ import annotations

import numpy as np


def _mollifier_parts(t):
    # f, f', f'' of exp(-1/t) on t > 0, evaluated in log form so tiny t
    # gives 0 rather than 0 * inf.
    t = np.asarray(t, dtype=float)
    pos = t > 0
    tt = np.where(pos, t, 1.0)
    lt = np.log(tt)
    e = -1.0 / tt
    f = np.where(pos, np.exp(e), 0.0)
    f1 = np.where(pos, np.exp(e - 2 * lt), 0.0)
    f2 = np.where(pos, np.exp(e - 4 * lt) - 2 * np.exp(e - 3 * lt), 0.0)
    return f, f1, f2


def smoothstep(t, deriv=0):
    """Smooth step and optionally its first two derivatives.

    Returns the value for ``deriv=0``, else a tuple ``(s, s', s'')``.
    """
    t = np.asarray(t, dtype=float)
    a, a1, a2 = _mollifier_parts(t)
    b, b1, b2 = _mollifier_parts(1.0 - t)
    # d/dt f(1-t) = -f'(1-t), d2/dt2 f(1-t) = f''(1-t)
    b1 = -b1
    den = a + b
    s = a / den
    if deriv == 0:
        return s
    num1 = a1 * b - a * b1
    s1 = num1 / den**2
    s2 = (a2 * b - a * b2) / den**2 - 2 * num1 * (a1 + b1) / den**3
    return s, s1, s2


def radial_cutoff(r, radius, deriv=0):
    """Profile equal to 1 for r <= radius/2 and 0 for r >= radius.

    With ``deriv=1`` returns ``(value, d/dr, d2/dr2)``.
    """
    r = np.asarray(r, dtype=float)
    t = 2.0 * (1.0 - r / radius)
    if deriv == 0:
        return smoothstep(t)
    s, s1, s2 = smoothstep(t, deriv=1)
    return s, -2.0 * s1 / radius, 4.0 * s2 / radius**2


def bump(u):
    """Normalised bump exp(1 - 1/(1-u^2)) on |u| < 1, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1
    w = 1.0 - np.where(inside, u, 0.0) ** 2
    return np.where(inside, np.exp(1.0 - 1.0 / w), 0.0)
