"""First-order Gaussian beams along a single ray.

In the tube |x - x(s)| < eta around the central ray the beam is

    u(x) = A0(s) exp(ik phi(x)) rho_eta(|y|),
    phi(x) = S(s) + p(s).y + y.M(s)y / 2,    y = x - x(s),

where s = s(x) is the foot of the perpendicular from x to the ray.  The
amplitude comes from the frame determinant,

    A0(s) = (det B(0) / det B(s))^(1/2) exp(-alpha int_0^s n^2),

continued along the ray so the root never jumps branch.  Gradients of s, phi
and A0 are exact (implicit function theorem); Laplacians are central
differences of those gradients.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import AmbiguousProjection, BadInitialHessian, OutsideTube
from .medium import MediumModel
from .raytrace import Bicharacteristic, VariationalFrame, exit_parameter, trace_batch
from .smooth import radial_cutoff

log = logging.getLogger(__name__)

HESS_TOL = 1e-10
FD_STEP = 1e-5
NEWTON_ITERS = 8
PRUNE = 60.0  # points with k Im(phi) above this carry a factor below e^-60 and are skipped


@dataclass(frozen=True, eq=False)
class BeamData:
    ray: Bicharacteristic
    frame: VariationalFrame
    S: np.ndarray
    A0: np.ndarray
    alpha: float
    eta: float
    reach: float = np.inf
    _root: np.ndarray = field(default=None, repr=False)
    _tree: cKDTree = field(default=None, repr=False)

    @property
    def s_grid(self):
        return self.ray.s_grid

    @property
    def M(self):
        return self.frame.M

    @property
    def dim(self):
        return self.ray.dim

    def amplitude(self, s, deriv=False):
        """A0 at arbitrary s (branch-continued); with ``deriv`` also dA0/ds."""
        B, B1, _, _ = self.frame.interp(s)
        det0 = self.frame.detB[self.ray.i0]
        w = np.sqrt(det0 / np.linalg.det(B))
        i = np.clip(np.rint((np.asarray(s) - self.s_grid[0]) / self.ray.step).astype(int),
                    0, len(self.s_grid) - 1)
        ref = self._root[i]
        w = np.where((w * np.conj(ref)).real < 0, -w, w)
        S = self.ray.phase(s)
        a = w * np.exp(-0.5 * self.alpha * S)
        if not deriv:
            return a
        trBiB1 = np.trace(np.linalg.solve(B, B1), axis1=-2, axis2=-1)
        return a, a * (-0.5 * trBiB1 - 0.5 * self.alpha * self.ray.phase(s, 1))

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        d = self.dim
        idx = [(i, j) for i in range(d) for j in range(d)]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "S"] + [f"{part}M{i+1}{j+1}" for i, j in idx for part in ("Re", "Im")]
                   + ["ReA0", "ImA0"])
        M = self.M
        for n, s in enumerate(self.s_grid):
            row = [f"{s:.10g}", f"{self.S[n]:.15e}"]
            for i, j in idx:
                row += [f"{M[n, i, j].real:.15e}", f"{M[n, i, j].imag:.15e}"]
            row += [f"{self.A0[n].real:.15e}", f"{self.A0[n].imag:.15e}"]
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class BeamValue:
    value: complex
    phase: complex
    amplitude: complex
    s_proj: float
    transverse: np.ndarray


def check_initial_hessian(m: MediumModel, x0, p0, M0, tol=HESS_TOL):
    """Raise BadInitialHessian unless M0 is symmetric, compatible and Im-positive."""
    M0 = np.asarray(M0, dtype=complex)
    d = m.dim
    if M0.shape != (d, d):
        raise BadInitialHessian("M0 has the wrong shape")
    if np.max(np.abs(M0 - M0.T)) > tol:
        raise BadInitialHessian("M0 is not symmetric")
    _, g, _ = m.derivatives(np.asarray(x0, dtype=float))
    if np.max(np.abs(M0 @ (2 * np.asarray(p0)) - g)) > tol:
        raise BadInitialHessian("M0 x'(0) != p'(0)")
    q = _perp_basis(np.asarray(p0, dtype=float))
    lam = np.linalg.eigvalsh(q.T @ M0.imag @ q)
    if lam.min() <= tol:
        raise BadInitialHessian(f"Im M0 not positive on the normal space (min eig {lam.min():.3e})")


def _perp_basis(v):
    """Orthonormal basis (columns) of the complement of v."""
    d = v.shape[0]
    q, _ = np.linalg.qr(np.column_stack([v, np.eye(d)]))
    return q[:, 1:d]


def _track_sqrt(vals, i0):
    """Square roots of ``vals`` continued outward from index i0 (where root ~ 1)."""
    r = np.sqrt(vals)
    for i in range(i0 + 1, len(r)):
        if (r[i] * np.conj(r[i - 1])).real < 0:
            r[i] = -r[i]
    for i in range(i0 - 1, -1, -1):
        if (r[i] * np.conj(r[i + 1])).real < 0:
            r[i] = -r[i]
    return r


def _reach(ray: Bicharacteristic, eta):
    """Lower estimate for the radius of a tube that projects uniquely onto the ray."""
    T = 2 * ray.p
    A = 2 * ray.grad_n2
    sp = np.linalg.norm(T, axis=1)
    # curvature |T x A| / |T|^3 in any dimension via the Gram determinant
    cross2 = np.sum(T * T, 1) * np.sum(A * A, 1) - np.sum(T * A, 1) ** 2
    kappa = np.sqrt(np.maximum(cross2, 0.0)) / sp**3
    reach = 1.0 / kappa.max() if kappa.max() > 0 else np.inf
    stride = max(1, int(eta / (10 * sp.max() * ray.step)))
    idx = np.arange(0, len(ray.s_grid), stride)
    pts = ray.x[idx]
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    pairs = cKDTree(pts).query_pairs(2 * eta, output_type="ndarray")
    if len(pairs):
        far = np.abs(arc[pairs[:, 0]] - arc[pairs[:, 1]]) > np.pi * eta
        if np.any(far):
            chord = np.linalg.norm(pts[pairs[far, 0]] - pts[pairs[far, 1]], axis=1)
            reach = min(reach, 0.5 * chord.min())
    return reach


def default_s_span(m: MediumModel, x0, p0, eta):
    """(-eta, s_exit) where every ray has left |x| <= 5R + eta for good."""
    s_exit = exit_parameter(m, x0, p0, 5 * m.R + eta)
    return (-eta, float(np.max(s_exit)))


def build_beams(m: MediumModel, x0s, p0s, M0s, alpha=0.0, s_span=None, step=1e-3, eta=None,
                zs=None, auto_shrink=True):
    """Build one first-order beam per row of (x0s, p0s, M0s) with shared s grid."""
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    p0s = np.atleast_2d(np.asarray(p0s, dtype=float))
    M0s = np.asarray(M0s, dtype=complex).reshape(-1, m.dim, m.dim)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    eta = 0.3 * m.R if eta is None else float(eta)
    if not eta > 0:
        raise ValueError("eta must be positive")
    for x0, p0, M0 in zip(x0s, p0s, M0s):
        check_initial_hessian(m, x0, p0, M0)
    if s_span is None:
        s_span = default_s_span(m, x0s, p0s, eta)
    N = x0s.shape[0]
    B0 = np.broadcast_to(np.eye(m.dim, dtype=complex), (N, m.dim, m.dim))
    s_grid, h, x, p, S, B, C = trace_batch(m, x0s, p0s, s_span, step, B0=B0, C0=M0s)
    beams = []
    for j in range(N):
        z = x0s[j] if zs is None else zs[j]
        ray = Bicharacteristic.from_nodes(m, s_grid, h, x[:, j], p[:, j], S[:, j], z=z)
        frame = VariationalFrame(s_grid=s_grid, B=B[:, j], C=C[:, j], hess_n2=ray.hess_n2)
        det = frame.detB
        root = _track_sqrt(det[ray.i0] / det, ray.i0)
        A0 = root * np.exp(-0.5 * alpha * ray.S)
        eta_j = eta
        reach = _reach(ray, eta_j)
        while auto_shrink and reach <= eta_j:
            eta_j /= 2
            log.warning("tube radius halved to %.4g (reach %.4g)", eta_j, reach)
            reach = _reach(ray, eta_j)
        beams.append(BeamData(ray=ray, frame=frame, S=ray.S, A0=A0, alpha=float(alpha),
                              eta=eta_j, reach=reach, _root=root, _tree=cKDTree(ray.x)))
    return beams


def build_first_order_beam(m: MediumModel, x0, p0, M0, alpha=0.0, s_span=None, step=1e-3,
                           eta=None) -> BeamData:
    """Beam launched from (x0, p0) with initial Hessian M0 (B0 = I, C0 = M0)."""
    return build_beams(m, [x0], [p0], [M0], alpha=alpha, s_span=s_span, step=step, eta=eta)[0]


# --- projection -------------------------------------------------------------

def _newton(ray, X, s):
    lo, hi = ray.s_grid[0], ray.s_grid[-1]
    for _ in range(NEWTON_ITERS):
        Xs, T, A = ray.position_derivs(s, 2)
        y = X - Xs
        F = np.sum(y * T, axis=-1)
        dF = -np.sum(T * T, axis=-1) + np.sum(y * A, axis=-1)
        s = np.clip(s - F / dF, lo, hi)
    return s


def project_to_ray(beam: BeamData, x):
    """Foot parameter s of the perpendicular from x to the ray, or None if outside.

    Every local minimum of the node distances within the tube is refined by
    Newton's method on (x - x(s)).x'(s) = 0; the closest one wins.
    """
    ray = beam.ray
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(ray.x - x, axis=1)
    slack = beam.eta + 2 * np.max(np.abs(ray.p)) * ray.step * 2
    loc = np.flatnonzero((d <= slack)
                         & (d <= np.r_[np.inf, d[:-1]]) & (d <= np.r_[d[1:], np.inf]))
    cands = []
    h = ray.step
    for i in loc:
        s = float(_newton(ray, x, np.array(ray.s_grid[i])))
        y = x - ray.position(s)
        T = ray.position(s, 1)
        dist = float(np.linalg.norm(y))
        interior = ray.s_grid[0] < s < ray.s_grid[-1]
        if interior and dist <= beam.eta and abs(y @ T) <= 1e-9 * (1 + dist):
            if not any(abs(s - c[0]) < 4 * h for c in cands):
                cands.append((s, dist))
    if not cands:
        return None
    cands.sort(key=lambda c: c[1])
    if len(cands) > 1 and cands[1][1] - cands[0][1] < 1e-8:
        raise AmbiguousProjection(f"two closest points at s={cands[0][0]:.6g}, {cands[1][0]:.6g}; "
                                  "shrink eta")
    return cands[0][0]


def _project_many(beam: BeamData, X):
    """Vectorised projection; returns (inside mask, s) for points X of shape (N, d)."""
    ray = beam.ray
    n = X.shape[0]
    s = np.full(n, np.nan)
    if beam.reach <= beam.eta:
        for j in range(n):
            r = project_to_ray(beam, X[j])
            if r is not None:
                s[j] = r
        return np.isfinite(s), s
    dmin, i = beam._tree.query(X, distance_upper_bound=beam.eta + 4 * ray.step * np.abs(ray.p).max() + 1e-12)
    near = np.isfinite(dmin)
    if np.any(near):
        sn = _newton(ray, X[near], ray.s_grid[i[near]])
        y = X[near] - ray.position(sn)
        ok = ((np.linalg.norm(y, axis=1) < beam.eta)
              & (sn > ray.s_grid[0]) & (sn < ray.s_grid[-1]))
        idx = np.flatnonzero(near)[ok]
        s[idx] = sn[ok]
    return np.isfinite(s), s


# --- evaluation -------------------------------------------------------------

def _local(beam: BeamData, X, s, grads=False):
    """Phase, amplitude and (optionally) their exact gradients at points X with feet s."""
    ray = beam.ray
    Xs, T, A = ray.position_derivs(s, 2)
    y = X - Xs
    P, P1 = ray.momentum_derivs(s, 1)
    S, S1 = ray.phase_derivs(s, 1)
    M, M1 = beam.frame.hessian(s)
    My = np.einsum("nij,nj->ni", M, y)
    phi = S + np.sum(P * y, 1) + 0.5 * np.sum(y * My, 1)
    out = {"y": y, "phi": phi}
    if not grads:
        out["a"] = beam.amplitude(s)
        return out
    a, a1 = beam.amplitude(s, deriv=True)
    D = np.sum(T * T, 1) - np.sum(y * A, 1)
    gs = T / D[:, None]
    dphids = (S1 - np.sum(P * T, 1) + np.sum(P1 * y, 1)
              - np.sum(My * T, 1) + 0.5 * np.einsum("ni,nij,nj->n", y, M1, y))
    out.update(a=a, grad_phi=dphids[:, None] * gs + P + My, grad_a=a1[:, None] * gs, grad_s=gs)
    return out


def _as_points(beam, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != beam.dim:
        raise ValueError("point dimension does not match the beam")
    return X, single


def _live(beam: BeamData, X, k):
    """Projection plus Gaussian pruning: (mask of points worth evaluating, feet s)."""
    inside, s = _project_many(beam, X)
    if np.any(inside):
        idx = np.flatnonzero(inside)
        y = X[idx] - beam.ray.position(s[idx])
        M, _ = beam.frame.hessian(s[idx])
        dead = 0.5 * k * np.einsum("ni,nij,nj->n", y, M.imag, y) > PRUNE
        inside[idx[dead]] = False
    return inside, s


def beam_field(beam: BeamData, x, k: float):
    """Complex beam values at points x of shape (N, d); zero outside the tube."""
    if not k > 0:
        raise ValueError("k must be positive")
    X, single = _as_points(beam, x)
    out = np.zeros(X.shape[0], dtype=complex)
    inside, s = _live(beam, X, k)
    if np.any(inside):
        loc = _local(beam, X[inside], s[inside])
        rho = radial_cutoff(np.linalg.norm(loc["y"], axis=1), beam.eta)
        out[inside] = loc["a"] * np.exp(1j * k * loc["phi"]) * rho
    return out[0] if single else out


def eval_beam(beam: BeamData, x, k: float) -> BeamValue:
    """Beam value, phase and amplitude at a single point x."""
    if not k > 0:
        raise ValueError("k must be positive")
    x = np.asarray(x, dtype=float)
    s = project_to_ray(beam, x)
    if s is None:
        return BeamValue(value=0j, phase=np.nan + 0j, amplitude=0j, s_proj=np.nan,
                         transverse=np.full(beam.dim, np.nan))
    loc = _local(beam, x[None], np.array([s]))
    y = loc["y"][0]
    rho = float(radial_cutoff(np.linalg.norm(y), beam.eta))
    a, phi = complex(loc["a"][0]), complex(loc["phi"][0])
    return BeamValue(value=a * np.exp(1j * k * phi) * rho, phase=phi, amplitude=a,
                     s_proj=float(s), transverse=y)


def _derivs(beam, X, s, fd_step=FD_STEP):
    """Exact gradients plus finite-difference Laplacians of phi and a."""
    base = _local(beam, X, s, grads=True)
    d = beam.dim
    lap_phi = np.zeros(X.shape[0], dtype=complex)
    lap_a = np.zeros(X.shape[0], dtype=complex)
    for j in range(d):
        e = np.zeros(d)
        e[j] = fd_step
        ds = fd_step * base["grad_s"][:, j]
        gp = _local(beam, X + e, _newton(beam.ray, X + e, s + ds), grads=True)
        gm = _local(beam, X - e, _newton(beam.ray, X - e, s - ds), grads=True)
        lap_phi += (gp["grad_phi"][:, j] - gm["grad_phi"][:, j]) / (2 * fd_step)
        lap_a += (gp["grad_a"][:, j] - gm["grad_a"][:, j]) / (2 * fd_step)
    base["lap_phi"] = lap_phi
    base["lap_a"] = lap_a
    return base


def residual_coefficients_many(beam: BeamData, X, s=None):
    """Vectorised (c_-2, c_-1, c_0) at points inside the tube."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if s is None:
        inside, s = _project_many(beam, X)
        if not np.all(inside):
            raise OutsideTube("residual coefficients requested outside the tube")
    m = beam.ray.medium
    loc = _derivs(beam, X, s)
    n2 = m.n2(X)
    a, gphi = loc["a"], loc["grad_phi"]
    E = n2 - np.sum(gphi * gphi, 1)
    cm2 = E * a
    cm1 = 1j * (beam.alpha * n2 * a + a * loc["lap_phi"] + 2 * np.sum(loc["grad_a"] * gphi, 1))
    c0 = loc["lap_a"]
    return cm2, cm1, c0, loc


def residual_coefficients(beam: BeamData, x):
    """c_-2, c_-1, c_0 of L_n(a exp(ik phi)) = exp(ik phi)(k^2 c_-2 + k c_-1 + c_0)."""
    x = np.asarray(x, dtype=float)
    s = project_to_ray(beam, x)
    if s is None:
        raise OutsideTube("point is outside the beam tube")
    cm2, cm1, c0, _ = residual_coefficients_many(beam, x[None], np.array([s]))
    return {"c_minus2": complex(cm2[0]), "c_minus1": complex(cm1[0]), "c_0": complex(c0[0])}


def residual_field(beam: BeamData, x, k: float):
    """f_GB at points x (N, d); zero outside the tube."""
    if not k > 0:
        raise ValueError("k must be positive")
    X, single = _as_points(beam, x)
    out = np.zeros(X.shape[0], dtype=complex)
    inside, s = _live(beam, X, k)
    if np.any(inside):
        cm2, cm1, c0, loc = residual_coefficients_many(beam, X[inside], s[inside])
        rho = radial_cutoff(np.linalg.norm(loc["y"], axis=1), beam.eta)
        out[inside] = np.exp(1j * k * loc["phi"]) * (k * k * cm2 + k * cm1 + c0) * rho
    return out[0] if single else out


def eval_residual_field(beam: BeamData, x, k: float) -> complex:
    """f_GB at a single point (0 outside the tube)."""
    x = np.asarray(x, dtype=float)
    if not k > 0:
        raise ValueError("k must be positive")
    s = project_to_ray(beam, x)
    if s is None:
        return 0j
    cm2, cm1, c0, loc = residual_coefficients_many(beam, x[None], np.array([s]))
    rho = float(radial_cutoff(np.linalg.norm(loc["y"][0]), beam.eta))
    return complex(np.exp(1j * k * loc["phi"][0]) * (k * k * cm2[0] + k * cm1[0] + c0[0]) * rho)


def helmholtz_fd(beam: BeamData, x, k: float, h=None):
    """Fourth-order finite-difference L_n applied to the evaluated beam at x."""
    x = np.asarray(x, dtype=float)
    h = (2 * np.pi / k) / 200 if h is None else h
    m = beam.ray.medium
    d = beam.dim
    offs = [np.zeros(d)]
    for j in range(d):
        for c in (-2, -1, 1, 2):
            e = np.zeros(d)
            e[j] = c * h
            offs.append(e)
    vals = beam_field(beam, x + np.array(offs), k)
    u0 = vals[0]
    lap = 0j
    for j in range(d):
        um2, um1, up1, up2 = vals[1 + 4 * j: 5 + 4 * j]
        lap += (-um2 + 16 * um1 - 30 * u0 + 16 * up1 - up2) / (12 * h * h)
    return lap + (1j * beam.alpha * k + k * k) * m.n2(x) * u0
