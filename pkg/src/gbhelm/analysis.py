"""Grids, norms, slope fits and empirical probes.

Random sampling uses numpy's counter-based Philox generator with the fixed
seed ``SEED`` unless told otherwise, so every probe is reproducible.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .beam import BeamData, _local, _perp_basis, _project_many, residual_coefficients_many
from .errors import DegenerateFit, EmptyOverlap, ResolutionGuard, TrajectoryFailure
from .medium import MediumModel
from .raytrace import Bicharacteristic, trace_batch
from .smooth import radial_cutoff
from .source import SourceSpec, plane_point
from .superpose import gauss_panels

SEED = 20240607
POINTS_PER_WAVELENGTH = 10


def rng(seed=SEED):
    return np.random.Generator(np.random.Philox(seed))


# --- grids and norms --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centred uniform tensor grid over [-radius, radius]^d, masked to the ball."""

    points: np.ndarray
    spacing: float
    shape: tuple
    radius: float
    bounds: tuple

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def axis(self):
        n = self.shape[0]
        return -self.radius + self.spacing * (np.arange(n) + 0.5)

    @property
    def mask(self):
        """Boolean mask of the ball within the full tensor grid, shape ``shape``."""
        ax = self.axis
        full = np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), -1)
        return np.linalg.norm(full, axis=-1) < self.radius


def ball_grid(d, radius, k=None, points_per_wavelength=POINTS_PER_WAVELENGTH, spacing=None):
    if spacing is None:
        if k is None:
            raise ValueError("give k or spacing")
        spacing = (2 * np.pi / k) / points_per_wavelength
    n = int(np.ceil(2 * radius / spacing))
    n += n % 2  # even count: no cell centre on the plane x1 = 0
    spacing = 2 * radius / n
    ax = -radius + spacing * (np.arange(n) + 0.5)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), -1).reshape(-1, d)
    pts = pts[np.linalg.norm(pts, axis=1) < radius]
    return Grid(points=pts, spacing=spacing, shape=(n,) * d, radius=float(radius),
                bounds=tuple((-radius, radius) for _ in range(d)))


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray
    k: float = None

    def __post_init__(self):
        if self.k is not None and self.grid.spacing > (2 * np.pi / self.k) / POINTS_PER_WAVELENGTH * (1 + 1e-9):
            raise ResolutionGuard(f"spacing {self.grid.spacing:.4g} exceeds a tenth of the wavelength")


def l2_norm_ball(f: Field, radius: float) -> float:
    """Midpoint-rule L2 norm over grid cells with |x| < radius."""
    if radius > f.grid.radius * (1 + 1e-12):
        raise ValueError("radius exceeds the grid")
    if f.k is not None and f.grid.spacing > (2 * np.pi / f.k) / POINTS_PER_WAVELENGTH * (1 + 1e-9):
        raise ResolutionGuard("grid too coarse for k")
    inside = np.linalg.norm(f.grid.points, axis=1) < radius
    v = np.abs(np.asarray(f.values)[inside]) ** 2
    return float(np.sqrt(np.sum(v) * f.grid.spacing ** f.grid.dim))


# --- slope fits -------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    k_list: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    r2: float

    def to_json(self):
        return json.dumps({"k": [float(v) for v in self.k_list], "err": [float(v) for v in self.errors],
                           "slope": self.slope, "r2": self.r2, "intercept": self.intercept}, indent=2)

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "err"])
        for k, e in zip(self.k_list, self.errors):
            w.writerow([f"{k:.10g}", f"{e:.15e}"])
        return buf.getvalue()


def fit_slope(ks, errs) -> ConvergenceReport:
    """Least-squares line through (log k, log err)."""
    ks = np.asarray(ks, dtype=float)
    errs = np.asarray(errs, dtype=float)
    if ks.shape != errs.shape or ks.size < 3:
        raise DegenerateFit("need at least 3 (k, err) pairs")
    if np.any(errs <= 0) or np.any(~np.isfinite(errs)):
        raise DegenerateFit("errors must be positive and finite")
    if np.any(np.diff(ks) <= 0) or np.any(ks <= 0):
        raise DegenerateFit("k values must be positive and strictly increasing")
    lx, ly = np.log(ks), np.log(errs)
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    ss = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else 1.0
    return ConvergenceReport(k_list=ks, errors=errs, slope=float(slope), intercept=float(intercept),
                             r2=float(min(max(r2, 0.0), 1.0)))


# --- tube-coordinate integration ---------------------------------------------

def _tube_nodes(beam: BeamData, k, radius, ds, width):
    """Quadrature nodes x = X(s) + y, y normal to the ray, with Jacobian weights."""
    ray = beam.ray
    s0, s1 = ray.s_grid[0], ray.s_grid[-1]
    ns = int(np.ceil((s1 - s0) / ds))
    s = s0 + (s1 - s0) * (np.arange(ns) + 0.5) / ns
    ws = (s1 - s0) / ns
    d = beam.dim
    eta = beam.eta
    T = ray.position(s, 1)
    X = ray.position(s)
    that = T / np.linalg.norm(T, axis=1)[:, None]
    p = ray.momentum(s)
    pdot = ray.momentum(s, 1)
    pn = np.linalg.norm(p, axis=1)
    tdot = (pdot - that * np.sum(that * pdot, 1)[:, None]) / pn[:, None]
    frames = np.array([_perp_basis(t) for t in that])  # (ns, d, d-1)
    if d == 2:
        t, wt = gauss_panels(-eta, eta, width, 8)
        coords = t[:, None]
        wy = wt
    else:
        r, wr = gauss_panels(0.0, eta, width, 8)
        nth = max(16, int(np.ceil(2 * np.pi * eta / width)) * 4)
        th = 2 * np.pi * np.arange(nth) / nth
        rr, tt = np.meshgrid(r, th, indexing="ij")
        coords = np.stack([rr * np.cos(tt), rr * np.sin(tt)], -1).reshape(-1, 2)
        wy = (np.outer(wr * r, np.full(nth, 2 * np.pi / nth))).ravel()
    Y = np.einsum("sij,qj->sqi", frames, coords)  # (ns, nq, d)
    J = np.linalg.norm(T, axis=1)[:, None] - np.einsum("sqi,si->sq", Y, tdot)
    pts = X[:, None, :] + Y
    w = ws * wy[None, :] * J
    S = np.broadcast_to(s[:, None], J.shape)
    keep = np.linalg.norm(pts, axis=2) < radius
    return pts[keep], S[keep], Y[keep], w[keep]


def tube_l2_norm(beam: BeamData, k: float, kind="residual", radius=None, ds=0.01, width=None,
                 prune=60.0):
    """L2 norm over |x| < radius of the beam (kind='field') or its residual f_GB.

    Integrates in tube coordinates; both integrands live in the tube, and
    |.|^2 has no oscillation so the cost does not grow with k along s.
    """
    radius = 5 * beam.ray.medium.R if radius is None else radius
    width = 0.5 / np.sqrt(k) if width is None else width
    X, s, Y, w = _tube_nodes(beam, k, radius, ds, min(width, beam.eta))
    M, _ = beam.frame.hessian(s)
    imphi = 0.5 * np.einsum("ni,nij,nj->n", Y, M.imag, Y)
    live = k * imphi < prune
    X, s, Y, w = X[live], s[live], Y[live], w[live]
    rho = radial_cutoff(np.linalg.norm(Y, axis=1), beam.eta)
    if kind == "field":
        loc = _local(beam, X, s)
        vals = loc["a"] * np.exp(1j * k * loc["phi"]) * rho
    elif kind == "residual":
        cm2, cm1, c0, loc = residual_coefficients_many(beam, X, s)
        vals = np.exp(1j * k * loc["phi"]) * (k * k * cm2 + k * cm1 + c0) * rho
    else:
        raise ValueError("kind must be 'field' or 'residual'")
    return float(np.sqrt(np.sum(np.abs(vals) ** 2 * w)))


def tube_mass(beam: BeamData, k: float, delta: float, radius=None, ds=0.01):
    """int over the tube of exp(-(delta k/4)|x - gamma|^2) dx."""
    radius = 5 * beam.ray.medium.R if radius is None else radius
    width = min(0.5 / np.sqrt(delta * k / 4), beam.eta)
    X, s, Y, w = _tube_nodes(beam, k, radius, ds, width)
    return float(np.sum(np.exp(-0.25 * delta * k * np.sum(Y * Y, 1)) * w))


def expest_holds(p, a, s, slack=1e-12):
    """Elementwise check of s^p e^{-a s^2} <= (p/e)^{p/2} a^{-p/2} e^{-a s^2/2}."""
    a = np.asarray(a, dtype=float)
    s = np.asarray(s, dtype=float)
    lhs = np.abs(s) ** p * np.exp(-a * s * s)
    rhs = (p / np.e) ** (p / 2) * a ** (-p / 2) * np.exp(-a * s * s / 2)
    return lhs <= rhs * (1 + slack) + 1e-300


# --- probes ------------------------------------------------------------------

def _tube_samples(beam: BeamData, n, gen, radius=None, shrink=1.0):
    """Uniform-in-(s, y) samples of the tube (y normal to the ray, |y| < shrink*eta)."""
    ray = beam.ray
    radius = 5 * ray.medium.R if radius is None else radius
    s = gen.uniform(ray.s_grid[0] + ray.step, ray.s_grid[-1] - ray.step, size=n)
    T = ray.position(s, 1)
    that = T / np.linalg.norm(T, axis=1)[:, None]
    v = gen.standard_normal((n, beam.dim))
    v -= that * np.sum(v * that, 1)[:, None]
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = shrink * beam.eta * gen.uniform(0, 1, size=n) ** (1 / (beam.dim - 1))
    X = ray.position(s) + r[:, None] * v
    keep = np.linalg.norm(X, axis=1) < radius
    return X[keep]


def phase_positivity_probe(beam: BeamData, samples=10_000, seed=SEED, radius=None):
    """Fitted delta = min Im phi / |x - gamma|^2 over random tube samples."""
    gen = rng(seed)
    X = _tube_samples(beam, samples, gen, radius)
    inside, s = _project_many(beam, X)
    X, s = X[inside], s[inside]
    loc = _local(beam, X, s)
    y2 = np.sum(loc["y"] ** 2, 1)
    ok = y2 > 1e-14
    ratio = loc["phi"].imag[ok] / y2[ok]
    j = int(np.argmin(ratio))
    return {"delta_hat": float(ratio[j]), "n": int(ok.sum()), "argmin": X[ok][j].tolist(),
            "seed": seed}


def taylor_vanishing_slopes(beam: BeamData, s_values, radii):
    """Log-log slopes of |c_-2| and |c_-1| against |y| (expected >= 3 and >= 1)."""
    ray = beam.ray
    out2, out1 = [], []
    for s in s_values:
        T = ray.position(np.array([s]), 1)[0]
        nrm = _perp_basis(T)[:, 0]
        X = ray.position(np.array([s]))[0] + np.asarray(radii)[:, None] * nrm
        cm2, cm1, _, _ = residual_coefficients_many(beam, X, np.full(len(radii), s))
        out2.append(np.polyfit(np.log(radii), np.log(np.abs(cm2)), 1)[0])
        out1.append(np.polyfit(np.log(radii), np.log(np.abs(cm1)), 1)[0])
    return float(np.min(out2)), float(np.min(out1))


def nonsqueezing_probe(m: MediumModel, spec: SourceSpec, pairs: int, S_rule, seed=SEED,
                       step=1e-3, lipschitz=None):
    """min/max of (|dp| + |dx|)/|z - z'| at s = S(z) over random pairs of source points.

    ``S_rule`` maps full source points (N, d) to parameters s; its Lipschitz
    constant is recorded if given.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    gen = rng(seed)
    box = spec.z_domain
    zt = gen.uniform(box[:, 0], box[:, 1], size=(2 * pairs, box.shape[0]))
    Z = np.array([plane_point(z, m.dim) for z in zt])
    S = np.asarray(S_rule(Z), dtype=float).reshape(-1)
    n = np.sqrt(m.n2(Z))
    p0 = n[:, None] * np.eye(m.dim)[0]
    smax = max(float(np.max(S)), 0.0) + 2 * step
    smin = min(float(np.min(S)), 0.0) - 2 * step
    try:
        s_grid, h, x, p, Sp, _, _ = trace_batch(m, Z, p0, (smin, smax), step)
    except Exception as exc:  # noqa: BLE001 - any integration failure is reported uniformly
        raise TrajectoryFailure(str(exc)) from exc
    xs = np.empty_like(Z)
    ps = np.empty_like(Z)
    for j in range(len(Z)):
        ray = Bicharacteristic.from_nodes(m, s_grid, h, x[:, j], p[:, j], Sp[:, j])
        xs[j] = ray.position(np.array([S[j]]))[0]
        ps[j] = ray.momentum(np.array([S[j]]))[0]
    a, b = np.arange(pairs), np.arange(pairs, 2 * pairs)
    dz = np.linalg.norm(Z[a] - Z[b], axis=1)
    num = np.linalg.norm(ps[a] - ps[b], axis=1) + np.linalg.norm(xs[a] - xs[b], axis=1)
    ratio = num / dz
    i, j = int(np.argmin(ratio)), int(np.argmax(ratio))
    return {"c1_hat": float(ratio[i]), "c2_hat": float(ratio[j]), "pairs": pairs, "seed": seed,
            "argmin": [Z[a[i]].tolist(), Z[b[i]].tolist()],
            "argmax": [Z[a[j]].tolist(), Z[b[j]].tolist()], "lipschitz": lipschitz}


def phase_separation_probe(beamA: BeamData, beamB: BeamData, samples=10_000, theta=0.1,
                           seed=SEED, radius=None):
    """Probe of Im psi >= delta(|x - gamma|^2 + |x - gamma'|^2), psi = phi_B - conj(phi_A).

    Also reports min |grad psi|/|z - z'| over samples whose feet satisfy
    |gamma - gamma'| < theta |z - z'| (``grad_bound_ok`` is vacuously true
    when that set is empty; ``n_restricted`` says how many there were).
    """
    gen = rng(seed)
    X = np.concatenate([_tube_samples(beamA, samples, gen, radius),
                        _tube_samples(beamB, samples, gen, radius)])
    inA, sA = _project_many(beamA, X)
    inB, sB = _project_many(beamB, X)
    both = inA & inB
    if not np.any(both):
        raise EmptyOverlap("sampled tubes do not intersect")
    X, sA, sB = X[both], sA[both], sB[both]
    la = _local(beamA, X, sA, grads=True)
    lb = _local(beamB, X, sB, grads=True)
    impsi = la["phi"].imag + lb["phi"].imag
    den = np.sum(la["y"] ** 2, 1) + np.sum(lb["y"] ** 2, 1)
    ok = den > 1e-14
    ratio = impsi[ok] / den[ok]
    j = int(np.argmin(ratio))
    out = {"delta_hat": float(ratio[j]), "n_overlap": int(both.sum()), "argmin": X[ok][j].tolist(),
           "seed": seed, "theta": theta}
    zA, zB = np.asarray(beamA.ray.z), np.asarray(beamB.ray.z)
    dz = float(np.linalg.norm(zA - zB))
    if dz == 0:
        out.update(grad_bound_ok=True, n_restricted=0, grad_ratio_min=None)
        return out
    gA = X - la["y"]
    gB = X - lb["y"]
    restricted = np.linalg.norm(gA - gB, axis=1) < theta * dz
    gpsi = lb["grad_phi"] - np.conj(la["grad_phi"])
    if np.any(restricted):
        gr = np.linalg.norm(gpsi[restricted], axis=1) / dz
        out.update(grad_bound_ok=bool(gr.min() > 0), n_restricted=int(restricted.sum()),
                   grad_ratio_min=float(gr.min()))
    else:
        out.update(grad_bound_ok=True, n_restricted=0, grad_ratio_min=None)
    out["grad_ratio_min_all"] = float(np.min(np.linalg.norm(gpsi, axis=1)) / dz)
    return out


# --- convergence drivers -------------------------------------------------------

def superposition_error(m: MediumModel, spec: SourceSpec, k: float, n_quad=8, eta=None,
                        step=1e-3, radius=None, points_per_wavelength=POINTS_PER_WAVELENGTH):
    """||u - u_E||_{L2(|x| < radius)} for a 2D constant medium, plus diagnostics.

    u_E is the outgoing layer potential of the density the superposition
    actually realises on the plane.
    """
    from .reference import LayerSource, WaveParams, layer_potential_grid_2d
    from .superpose import assemble, eval_superposition

    if m.dim != 2:
        raise ValueError("the gridded exact branch is two-dimensional")
    radius = m.R if radius is None else radius
    sp = assemble(m, spec, n_quad, k=k, eta=eta, step=step)
    grid = ball_grid(2, radius, k, points_per_wavelength)
    u = eval_superposition(sp, grid.points)
    src = LayerSource.from_superposition(sp)
    ax = grid.axis
    uE = layer_potential_grid_2d(src, WaveParams(k), ax, ax)[grid.mask]
    err = l2_norm_ball(Field(grid, u - uE, k), radius)
    ref = l2_norm_ball(Field(grid, uE, k), radius)
    return {"k": k, "err": err, "ref_norm": ref, "beams": len(sp.pairs), "points": len(grid.points),
            "spacing": grid.spacing}


def residual_indicator(m: MediumModel, spec: SourceSpec, k: float, n_quad=8, eta=None, step=1e-3,
                       points_per_wavelength=POINTS_PER_WAVELENGTH):
    """k^{-1} ||f||_{L2(|x| < 5R)} for the superposed residual on a grid."""
    from .superpose import assemble, eval_superposition_residual

    sp = assemble(m, spec, n_quad, k=k, eta=eta, step=step)
    grid = ball_grid(m.dim, 5 * m.R, k, points_per_wavelength)
    f = eval_superposition_residual(sp, grid.points)
    norm = l2_norm_ball(Field(grid, f, k), 5 * m.R)
    return {"k": k, "f_norm": norm, "indicator": norm / k, "beams": len(sp.pairs),
            "points": len(grid.points)}
