"""Beam pairs launched from the plane x1 = 0 and the surface source they realise.

A pair consists of a forward beam (p0 = n(z) e1, used on x1 >= 0) and a
backward beam (p0 = -n(z) e1, used on x1 < 0) launched from the same point
z of the plane.  Both start with

    M0 = S0 + iP,   S0 = (b p0^T + p0 b^T)/|p0|^2 - (p0.b) p0 p0^T/|p0|^4,

b = grad n^2(z)/2 and P the projector onto p0^perp, so the tangential block
of M0 is iI on the plane and the two phases agree there to second order.
The jump of the normal derivative across the plane is the realised
single-layer density g0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beam import BeamData, _local, _project_many, build_beams, default_s_span
from .errors import OutsideTube
from .medium import MediumModel
from .smooth import bump, radial_cutoff


@dataclass(frozen=True)
class BumpWeight:
    """h(z) = exp(1 - 1/(1 - |z - c|^2/r^2)) on |z - c| < r."""

    radius: float
    center: tuple = None

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        c = np.zeros(z.shape[-1]) if self.center is None else np.asarray(self.center, dtype=float)
        return bump(np.linalg.norm(z - c, axis=-1) / self.radius)


@dataclass(frozen=True)
class SourceSpec:
    """Weight h on a box of the plane x1 = 0 (tangential coordinates)."""

    z_domain: np.ndarray
    h: BumpWeight
    k: float = None

    def __post_init__(self):
        box = np.asarray(self.z_domain, dtype=float).reshape(-1, 2)
        if np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("z_domain intervals must have positive length")
        object.__setattr__(self, "z_domain", box)
        c = np.zeros(box.shape[0]) if self.h.center is None else np.asarray(self.h.center, float)
        if c.shape != (box.shape[0],):
            raise ValueError("h center dimension does not match z_domain")
        if np.any(c - self.h.radius < box[:, 0] - 1e-12) or np.any(c + self.h.radius > box[:, 1] + 1e-12):
            raise ValueError("support of h must lie inside z_domain")
        if self.k is not None and not self.k > 0:
            raise ValueError("k must be positive")

    @property
    def dim(self):
        return self.z_domain.shape[0] + 1

    @classmethod
    def from_dict(cls, d):
        h = d["h"]
        if h.get("kind", "bump") != "bump":
            raise ValueError(f"unsupported weight kind {h.get('kind')!r}")
        center = h.get("center")
        return cls(z_domain=np.asarray(d["z_domain"], dtype=float),
                   h=BumpWeight(radius=float(h["radius"]),
                                center=None if center is None else tuple(np.atleast_1d(center))),
                   k=d.get("k"))

    def to_dict(self):
        box = self.z_domain
        h = {"kind": "bump", "radius": self.h.radius}
        if self.h.center is not None:
            h["center"] = list(self.h.center)
        return {"z_domain": box[0].tolist() if len(box) == 1 else box.tolist(), "h": h, "k": self.k}


@dataclass(frozen=True, eq=False)
class BeamPair:
    forward: BeamData
    backward: BeamData
    z: np.ndarray

    def side_beam(self, x):
        return self.forward if x[0] >= 0 else self.backward


def plane_point(z, d):
    """Accept a tangential (d-1)-vector or a full point with x1 = 0."""
    z = np.asarray(z, dtype=float)
    if z.shape == (d - 1,):
        return np.concatenate([[0.0], z])
    if z.shape == (d,):
        if z[0] != 0:
            raise ValueError("source point must lie on the plane x1 = 0")
        return z
    raise ValueError("bad source point shape")


def initial_hessian(m: MediumModel, z, p0):
    """M0 = S0 + iP for a beam launched from z with momentum p0."""
    p0 = np.asarray(p0, dtype=float)
    _, g, _ = m.derivatives(np.asarray(z, dtype=float))
    b = g / 2
    pp = p0 @ p0
    S0 = (np.outer(b, p0) + np.outer(p0, b)) / pp - (p0 @ b) * np.outer(p0, p0) / pp**2
    P = np.eye(len(p0)) - np.outer(p0, p0) / pp
    return S0 + 1j * P


def build_beam_pairs(m: MediumModel, zs, alpha=0.0, eta=None, step=1e-3, s_span=None):
    """Beam pairs for many source points at once (one shared integration)."""
    d = m.dim
    Z = np.array([plane_point(z, d) for z in np.atleast_2d(zs)])
    e1 = np.eye(d)[0]
    n = np.sqrt(m.n2(Z))
    p0 = np.concatenate([n[:, None] * e1, -n[:, None] * e1])
    x0 = np.concatenate([Z, Z])
    M0 = np.array([initial_hessian(m, x, p) for x, p in zip(x0, p0)])
    eta = 0.3 * m.R if eta is None else eta
    if s_span is None:
        s_span = default_s_span(m, x0, p0, eta)
    beams = build_beams(m, x0, p0, M0, alpha=alpha, s_span=s_span, step=step, eta=eta,
                        zs=x0)
    N = len(Z)
    return [BeamPair(forward=beams[j], backward=beams[N + j], z=Z[j]) for j in range(N)]


def build_beam_pair(m: MediumModel, z, spec: SourceSpec = None, alpha=0.0, eta=None,
                    step=1e-3, s_span=None) -> BeamPair:
    """Matched forward/backward beams launched from z on the plane."""
    if spec is not None:
        zt = plane_point(z, m.dim)[1:]
        box = spec.z_domain
        if np.any(zt < box[:, 0]) or np.any(zt > box[:, 1]):
            raise ValueError("z lies outside z_domain")
    return build_beam_pairs(m, [z], alpha=alpha, eta=eta, step=step, s_span=s_span)[0]


def _normal_derivative(beam: BeamData, X, k):
    """d/dx1 of a rho exp(ik phi) at points X (all inside the tube); also returns the value."""
    inside, s = _project_many(beam, X)
    if not np.all(inside):
        raise OutsideTube("source point outside a beam tube")
    loc = _local(beam, X, s, grads=True)
    r = np.linalg.norm(loc["y"], axis=1)
    rho, rho1, _ = radial_cutoff(r, beam.eta, deriv=1)
    rs = np.where(r > 0, r, 1.0)
    a = loc["a"]
    grad_arho = rho[:, None] * loc["grad_a"] + (a * rho1 / rs)[:, None] * loc["y"]
    e = np.exp(1j * k * loc["phi"])
    du = e * (1j * k * loc["grad_phi"][:, 0] * a * rho + grad_arho[:, 0])
    return du, e * a * rho


def source_amplitude(pair: BeamPair, X, k: float):
    """Vectorised g0 = d_nu u+ - d_nu u- on points X of the plane."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if np.any(X[:, 0] != 0):
        raise ValueError("source amplitude is defined on the plane x1 = 0")
    dp, _ = _normal_derivative(pair.forward, X, k)
    dm, _ = _normal_derivative(pair.backward, X, k)
    return dp - dm


def eval_source_amplitude(pair: BeamPair, x, k: float) -> complex:
    """Jump of the normal derivative across the plane at x.

    Each side contributes exp(ik phi)[ik d_nu phi (A rho) + d_nu (A rho)], so
    where the phases and amplitudes match this is
    [ik(d_nu phi+ - d_nu phi-) A + (d_nu A+ - d_nu A-)] exp(ik phi+).
    """
    if not k > 0:
        raise ValueError("k must be positive")
    return complex(source_amplitude(pair, np.asarray(x, dtype=float)[None], k)[0])


def jump_mismatch(pair: BeamPair, X):
    """(|phi+ - phi-|, |A+ - A-|) at points X of the plane; k-independent."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = []
    for beam in (pair.forward, pair.backward):
        inside, s = _project_many(beam, X)
        if not np.all(inside):
            raise OutsideTube("point outside a beam tube")
        out.append(_local(beam, X, s))
    return np.abs(out[0]["phi"] - out[1]["phi"]), np.abs(out[0]["a"] - out[1]["a"])
