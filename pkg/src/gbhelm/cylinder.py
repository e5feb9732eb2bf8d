"""Hankel functions H0^(1), H1^(1) for complex argument with Re z > 0, Im z >= 0.

Ascending series (J and Y through harmonic numbers) for |z| < SWITCH and
the Hankel asymptotic expansion, truncated at its smallest term, beyond.
The switch sits at |z| = 12: the smallest asymptotic term there is about
e^{-2|z|} ~ 4e-11, while at |z| = 8 it would still be ~1e-7.  Off the real
axis the series cancels like e^{|z| + Im z}, so the switch moves inward to
|z| = 12 - Im z / 3, where the two error estimates balance.
"""

from __future__ import annotations

import numpy as np

SWITCH = 12.0
SERIES_TERMS = 48
ASYMPTOTIC_MAX_TERMS = 40
EULER_GAMMA = 0.57721566490153286061


def _series(z, nu):
    q = (z / 2) ** 2
    lg = np.log(z / 2) + EULER_GAMMA
    if nu == 0:
        term = np.ones_like(z)
        J = term.copy()
        tail = np.zeros_like(z)
        H = 0.0
        for m in range(1, SERIES_TERMS):
            term = -term * q / (m * m)
            H += 1.0 / m
            J = J + term
            tail = tail - H * term
        Y = (2 / np.pi) * (lg * J + tail)
        return J + 1j * Y
    term = z / 2
    J = term.copy()
    tail = term * 1.0  # (H_0 + H_1) = 1 for m = 0
    H = 0.0
    for m in range(1, SERIES_TERMS):
        term = -term * q / (m * (m + 1))
        Hm = H + 1.0 / m
        Hm1 = Hm + 1.0 / (m + 1)
        H = Hm
        J = J + term
        tail = tail + (Hm + Hm1) * term
    Y = -2 / (np.pi * z) + (2 / np.pi) * lg * J - tail / np.pi
    return J + 1j * Y


def _asym_coeffs(nu, K):
    mu = 4.0 * nu * nu
    c = [1.0 + 0j]
    for k in range(1, K):
        c.append(c[-1] * 1j * (mu - (2 * k - 1) ** 2) / (8.0 * k))
    return np.array(c)


def _terms_needed(nu, zmin):
    """Truncate where terms drop below 1e-17 or stop decreasing (at most ASYMPTOTIC_MAX_TERMS)."""
    c = np.abs(_asym_coeffs(nu, ASYMPTOTIC_MAX_TERMS)) / zmin ** np.arange(ASYMPTOTIC_MAX_TERMS)
    for k in range(1, ASYMPTOTIC_MAX_TERMS):
        if c[k] < 1e-17 or c[k] > c[k - 1]:
            return k
    return ASYMPTOTIC_MAX_TERMS


_BIN_EDGES = (0.0, 14.0, 18.0, 25.0, 40.0, 80.0, 200.0, np.inf)


def _asymptotic(z, nu):
    az = np.abs(z)
    total = np.empty(z.shape, dtype=complex)
    for lo, hi in zip(_BIN_EDGES[:-1], _BIN_EDGES[1:]):
        sel = (az >= lo) & (az < hi)
        if not np.any(sel):
            continue
        zmin = max(float(az[sel].min()), 1.0)
        c = _asym_coeffs(nu, _terms_needed(nu, zmin))
        w = 1.0 / z[sel]
        acc = np.full(w.shape, c[-1])
        for ck in c[-2::-1]:
            acc = acc * w + ck
        total[sel] = acc
    phase = z - nu * np.pi / 2 - np.pi / 4
    return np.sqrt(2 / (np.pi * z)) * np.exp(1j * phase) * total


def hankel1(nu: int, z):
    """H_nu^(1)(z) for nu in {0, 1}, elementwise."""
    if nu not in (0, 1):
        raise ValueError("only orders 0 and 1 are implemented")
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise ValueError("Hankel function is singular at z = 0")
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) < SWITCH - z.imag / 3
    if np.any(small):
        out[small] = _series(z[small], nu)
    if np.any(~small):
        out[~small] = _asymptotic(z[~small], nu)
    return out


def hankel1_series(nu, z):
    """Ascending-series branch only (for overlap checks)."""
    return _series(np.asarray(z, dtype=complex), nu)


def hankel1_asymptotic(nu, z):
    """Asymptotic branch only (for overlap checks)."""
    return _asymptotic(np.asarray(z, dtype=complex), nu)
