"""Independent reference solutions for constant media.

* Outgoing Green's kernels of Delta + k_alpha^2 in d = 2, 3 with
  k_alpha = sqrt(k^2 + i k alpha).
* Single-layer potentials u_E(x) = int_Sigma G(x - y) g(y) dA_y on the plane
  x1 = 0 by composite Gauss-Legendre panels, refined dyadically for targets
  close to the plane.
* The 3D oscillatory integral

      u(x, k) = (-2ik/4pi) int exp(ik|x - (0,y')| - k|y'|^2/2) / |x - (0,y')| dy'

  and its leading stationary-phase value (1 + i|x1|)^{-1} exp(ik|x1|).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cylinder import hankel1
from .errors import MediumNotConstant, OnSourcePlane, SingularPoint
from .superpose import Superposition, realized_source_density, tensor_rule

GAUSS_NODES = 8
TRUNC = 8.0  # truncation radius in units of k^{-1/2}
SUPPORT = 6.0  # effective support of a k-Gaussian footprint, units of k^{-1/2}


@dataclass(frozen=True)
class WaveParams:
    k: float
    alpha: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @property
    def k_alpha(self) -> complex:
        return complex(np.sqrt(complex(self.k**2, self.k * self.alpha)))


def _radius(x):
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(r == 0):
        raise SingularPoint("Green's kernel is singular at the origin")
    return r


def green_radial(d: int, wp: WaveParams, r):
    """G as a function of r = |x| > 0."""
    r = np.asarray(r, dtype=float)
    ka = wp.k_alpha
    if d == 3:
        return -np.exp(1j * ka * r) / (4 * np.pi * r)
    if d == 2:
        return -0.25j * hankel1(0, ka * r)
    raise ValueError("d must be 2 or 3")


def green_radial_dr(d: int, wp: WaveParams, r):
    """dG/dr."""
    r = np.asarray(r, dtype=float)
    ka = wp.k_alpha
    if d == 3:
        return green_radial(3, wp, r) * (1j * ka - 1 / r)
    if d == 2:
        return 0.25j * ka * hankel1(1, ka * r)
    raise ValueError("d must be 2 or 3")


def green_kernel(d: int, wp: WaveParams, x):
    """Outgoing fundamental solution, (Delta + k_alpha^2) G = delta."""
    return green_radial(d, wp, _radius(x))


@dataclass(frozen=True, eq=False)
class LayerSource:
    """Density g on a box of the plane x1 = 0 (tangential coordinates).

    ``density`` maps full points (N, d) with x1 = 0 to complex values.
    """

    density: object
    box: np.ndarray
    d: int
    k: float

    @classmethod
    def from_superposition(cls, sp: Superposition, eta=None):
        """Density realised by a beam superposition, on z_domain widened by 6 k^{-1/2}."""
        zs = sp.nodes
        pad = SUPPORT / np.sqrt(sp.k)
        if eta is not None:
            pad = min(pad, eta)
        box = np.stack([zs.min(0) - pad, zs.max(0) + pad], axis=1)
        return cls(density=lambda Y: realized_source_density(sp, Y), box=box, d=sp.d, k=sp.k)

    @classmethod
    def example5(cls, k):
        """2ik exp(-k|y'|^2/2) on the plane in 3D."""
        L = TRUNC / np.sqrt(k)

        def g(Y):
            return 2j * k * np.exp(-0.5 * k * np.sum(Y[:, 1:] ** 2, axis=1))

        return cls(density=g, box=np.array([[-L, L], [-L, L]]), d=3, k=float(k))

    def scaled(self, c):
        return LayerSource(density=lambda Y: c * self.density(Y), box=self.box, d=self.d, k=self.k)


def _levels(x1, base, max_level=12):
    t = np.abs(x1)
    with np.errstate(divide="ignore"):
        lev = np.ceil(np.log2(2 * base / np.maximum(t, 1e-300)))
    return np.clip(lev, 0, max_level).astype(int)


def layer_potential(src: LayerSource, wp: WaveParams, X, n=GAUSS_NODES, chunk=2_000_000):
    """int G(x - y) g(y) dA_y for targets X (N, d) off the plane."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any(X[:, 0] == 0):
        raise OnSourcePlane("targets must lie off the plane x1 = 0")
    lam = 2 * np.pi / wp.k
    base = min(lam / 2, float(np.min(np.diff(src.box, axis=1))))
    lev = _levels(X[:, 0], base)
    out = np.zeros(X.shape[0], dtype=complex)
    for L in np.unique(lev):
        tgt = np.flatnonzero(lev == L)
        nodes, w = tensor_rule(src.box, base / 2**L, n)
        Y = np.concatenate([np.zeros((len(nodes), 1)), nodes], axis=1)
        gw = src.density(Y) * w
        live = gw != 0
        Y, gw = Y[live], gw[live]
        step = max(1, chunk // max(1, len(Y)))
        for a in range(0, len(tgt), step):
            idx = tgt[a:a + step]
            r = np.linalg.norm(X[idx, None, :] - Y[None, :, :], axis=2)
            out[idx] = green_radial(src.d, wp, r) @ gw
    return out


def _lattice_factor(x1, k, h, max_q=64):
    """Smallest power-of-two refinement q making trapezoid error ~ e^{-36} on row x1.

    With node spacing h/q the trapezoid error of the analytic integrand is
    about exp(-k|x1|(2 pi q/(h k) - 1 - |x1|/2)), since the nearest
    singularity sits at distance |x1| from the real line.
    """
    a = abs(x1)
    q = 1
    while q < max_q and k * a * (2 * np.pi * q / (h * k) - 1 - a / 2) < 36:
        q *= 2
    return q


def layer_potential_grid_2d(src: LayerSource, wp: WaveParams, x1_axis, x2_axis):
    """Single-layer potential on a 2D tensor grid, one FFT convolution per row.

    The density is sampled on a lattice commensurate with the uniform x2
    axis (spacing h/q, q chosen per row), so G(x1, x2 - y) only needs to be
    evaluated on the 1D lattice of differences.  Returns shape (n1, n2).
    """
    from scipy.signal import fftconvolve

    if src.d != 2:
        raise ValueError("grid layer potential is two-dimensional")
    x1_axis = np.asarray(x1_axis, dtype=float)
    x2_axis = np.asarray(x2_axis, dtype=float)
    if np.any(x1_axis == 0):
        raise OnSourcePlane("grid rows must avoid x1 = 0")
    h = x2_axis[1] - x2_axis[0]
    if np.max(np.abs(np.diff(x2_axis) - h)) > 1e-12 * abs(h):
        raise ValueError("x2 axis must be uniform")
    lo, hi = src.box[0]
    qs = np.array([_lattice_factor(x1, wp.k, h) for x1 in x1_axis])
    out = np.zeros((len(x1_axis), len(x2_axis)), dtype=complex)
    for q in np.unique(qs):
        hy = h / q
        j0 = int(np.floor((lo - x2_axis[0]) / hy))
        ny = int(np.ceil((hi - x2_axis[0]) / hy)) - j0 + 1
        y = x2_axis[0] + (j0 + np.arange(ny)) * hy
        g = src.density(np.column_stack([np.zeros(ny), y])) * hy
        m_min = -(j0 + ny - 1)
        m = m_min + np.arange((len(x2_axis) - 1) * q - j0 - m_min + 1)
        idx = np.arange(len(x2_axis)) * q - j0 - m_min
        for r in np.flatnonzero(qs == q):
            G = green_radial(2, wp, np.sqrt(x1_axis[r] ** 2 + (m * hy) ** 2))
            out[r] = fftconvolve(G, g)[idx]
    return out


def exact_constant_medium_solution(src: LayerSource, wp: WaveParams, x, medium=None):
    """Outgoing solution of (Delta + k_alpha^2) u = g delta(x1) (constant medium only)."""
    if medium is not None and not medium.is_constant:
        raise MediumNotConstant("the layer-potential reference needs n = 1")
    single = np.ndim(x) == 1
    out = layer_potential(src, wp, x)
    return out[0] if single else out


def example5_quadrature(x, k: float, n=GAUSS_NODES):
    """The 3D oscillatory integral by tensor Gauss quadrature over |y'_i| <= 8 k^{-1/2}."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ValueError("x must be a point in 3D")
    if x[0] == 0:
        raise OnSourcePlane("x1 must be nonzero")
    if not k > 0:
        raise ValueError("k must be positive")
    L = TRUNC / np.sqrt(k)
    width = min(np.pi / k, L)
    nodes, w = tensor_rule([(-L, L), (-L, L)], width, n)
    r = np.sqrt(x[0] ** 2 + np.sum((x[1:] - nodes) ** 2, axis=1))
    integrand = np.exp(1j * k * r - 0.5 * k * np.sum(nodes**2, axis=1)) / r
    return complex(-2j * k / (4 * np.pi) * np.sum(w * integrand))


def example5_tail_bound(x1):
    """Bound on the part of the integral outside |y'| <= 8 k^{-1/2}: e^{-32}/|x1|."""
    return np.exp(-TRUNC**2 / 2) / abs(x1)


def example5_stationary_phase(x1: float, k: float) -> complex:
    """Leading stationary-phase term (2pi/k) det(...)^{-1/2} (-2ik/4pi) e^{ik|x1|}/|x1|."""
    if x1 == 0:
        raise OnSourcePlane("x1 must be nonzero")
    a = abs(x1)
    return (2 * np.pi / k) / (-1j / a + 1) * (-2j * k / (4 * np.pi)) * np.exp(1j * k * a) / a
