"""Superposition of beam pairs over the source plane.

    u(x) = (k/2pi)^((d-1)/2) sum_j w_j h(z_j) u_GB(x; z_j)

with u_GB = u+ on x1 >= 0 and u- on x1 < 0, on a tensor grid of composite
Gauss-Legendre panels over z_domain.  Panel width defaults to
(2 pi/k)^(1/2)/2 so neighbouring beams overlap.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .beam import beam_field, residual_field
from .medium import MediumModel
from .source import SourceSpec, build_beam_pairs, source_amplitude


def gauss_panels(a, b, width, n):
    """Composite Gauss-Legendre nodes/weights on [a, b] with panels of length <= width."""
    npan = max(1, int(np.ceil((b - a) / width - 1e-12)))
    t, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, npan + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * w).ravel()


def tensor_rule(box, width, n):
    rules = [gauss_panels(a, b, width, n) for a, b in box]
    nodes = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), -1).reshape(-1, len(box))
    weights = np.prod(np.stack(np.meshgrid(*[r[1] for r in rules], indexing="ij"), -1), -1).ravel()
    return nodes, weights


@dataclass(frozen=True, eq=False)
class Superposition:
    pairs: list
    weights: np.ndarray
    h_vals: np.ndarray
    k: float
    d: int
    nodes: np.ndarray = None

    @property
    def prefactor(self):
        return (self.k / (2 * np.pi)) ** ((self.d - 1) / 2)

    def coefficients(self):
        return self.prefactor * self.weights * self.h_vals


def assemble(m: MediumModel, spec: SourceSpec, n_quad: int, alpha=0.0, k=None, eta=None,
             step=1e-3, panel_width=None) -> Superposition:
    """Beam pairs on the composite Gauss grid of z_domain (nodes with h = 0 dropped)."""
    if n_quad < 1:
        raise ValueError("n_quad must be >= 1")
    k = spec.k if k is None else k
    if k is None or not k > 0:
        raise ValueError("a positive k is required")
    if spec.dim != m.dim:
        raise ValueError("source and medium dimensions differ")
    width = np.sqrt(2 * np.pi / k) / 2 if panel_width is None else panel_width
    nodes, w = tensor_rule(spec.z_domain, width, n_quad)
    hv = spec.h(nodes)
    keep = hv > 0
    pairs = build_beam_pairs(m, nodes[keep], alpha=alpha, eta=eta, step=step)
    return Superposition(pairs=pairs, weights=w[keep], h_vals=hv[keep], k=float(k), d=m.dim,
                         nodes=nodes[keep])


def _sum(sp: Superposition, X, fn):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.zeros(X.shape[0], dtype=complex)
    front = X[:, 0] >= 0
    for c, pair in zip(sp.coefficients(), sp.pairs):
        if np.any(front):
            out[front] += c * fn(pair.forward, X[front], sp.k)
        if not np.all(front):
            out[~front] += c * fn(pair.backward, X[~front], sp.k)
    return out


def eval_superposition(sp: Superposition, x):
    """Superposed field at x (a point or an (N, d) array)."""
    single = np.ndim(x) == 1
    out = _sum(sp, x, beam_field)
    return out[0] if single else out


def eval_superposition_residual(sp: Superposition, x):
    """Superposed residual f = sum of the members' f_GB with the same weights."""
    single = np.ndim(x) == 1
    out = _sum(sp, x, residual_field)
    return out[0] if single else out


def realized_source_density(sp: Superposition, Y):
    """Single-layer density on the plane at points Y (x1 = 0) produced by the superposition."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    out = np.zeros(Y.shape[0], dtype=complex)
    for c, pair in zip(sp.coefficients(), sp.pairs):
        fw = pair.forward
        near = np.linalg.norm(Y - pair.z, axis=1) < fw.eta
        if np.any(near):
            out[near] += c * source_amplitude(pair, Y[near], sp.k)
    return out


def write_field(points, values, k, bounds, shape, header_lines=()):
    """Portable text grid: header lines then rows 'x1 .. xd Re(u) Im(u)'."""
    points = np.asarray(points, dtype=float)
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    d = points.shape[1]
    buf.write(f"# dim {d}\n")
    buf.write("# bounds " + " ".join(f"{a:.12g} {b:.12g}" for a, b in bounds) + "\n")
    buf.write("# shape " + " ".join(str(int(s)) for s in shape) + "\n")
    buf.write(f"# k {k:.12g}\n")
    for x, u in zip(points, values):
        buf.write(" ".join(f"{v:.12e}" for v in x) + f" {u.real:.15e} {u.imag:.15e}\n")
    return buf.getvalue()


def read_field(text):
    """Inverse of :func:`write_field`; returns (points, values, meta)."""
    meta = {}
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] in ("dim", "bounds", "shape", "k"):
                meta[parts[0]] = [float(v) for v in parts[1:]]
        elif line.strip():
            rows.append([float(v) for v in line.split()])
    arr = np.array(rows).reshape(-1, int(meta["dim"][0]) + 2)
    return arr[:, :-2], arr[:, -2] + 1j * arr[:, -1], meta
