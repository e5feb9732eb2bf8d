"""Index-of-refraction models with exact derivatives of n^2.

A medium is n^2(x) = 1 + chi(|x|/R) * sum_i A_i exp(-|x - c_i|^2 / (2 sigma_i^2)),
where chi is the smooth cutoff of :func:`gbhelm.smooth.radial_cutoff` (equal to
1 on |x| <= R/2 and to 0 on |x| >= R).  Outside the ball of radius R the
medium is exactly homogeneous.

JSON schema::

    {"kind": "constant" | "gaussian_bump" | "multi_bump",
     "bumps": [{"A": float, "sigma": float, "center": [float, ...]}, ...],
     "R": float, "dim": 2 | 3}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import NonTrappingUncertain
from .smooth import radial_cutoff

KINDS = ("constant", "gaussian_bump", "multi_bump")


@dataclass(frozen=True)
class Bump:
    A: float
    sigma: float
    center: tuple

    def __post_init__(self):
        if not abs(self.A) < 1:
            raise ValueError(f"bump amplitude must satisfy |A| < 1, got {self.A}")
        if not self.sigma > 0:
            raise ValueError("bump width sigma must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class MediumEval:
    n: np.ndarray
    n2: np.ndarray
    grad_n2: np.ndarray
    hess_n2: np.ndarray


@dataclass(frozen=True)
class MediumModel:
    """Immutable analytic medium; see the module docstring for the formula."""

    kind: str = "constant"
    bumps: tuple = ()
    R: float = 1.0
    dim: int = 2
    _centers: np.ndarray = field(init=False, repr=False, compare=False)
    _amps: np.ndarray = field(init=False, repr=False, compare=False)
    _sig2: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown medium kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if not self.R > 0:
            raise ValueError("R must be positive")
        bumps = tuple(b if isinstance(b, Bump) else Bump(**b) for b in self.bumps)
        object.__setattr__(self, "bumps", bumps)
        if self.kind == "constant" and bumps:
            raise ValueError("constant medium takes no bumps")
        if self.kind == "gaussian_bump" and len(bumps) != 1:
            raise ValueError("gaussian_bump needs exactly one bump")
        if self.kind == "multi_bump" and not bumps:
            raise ValueError("multi_bump needs at least one bump")
        for b in bumps:
            if len(b.center) != self.dim:
                raise ValueError("bump center dimension does not match dim")
        if 1.0 + sum(min(b.A, 0.0) for b in bumps) <= 0.0:
            raise ValueError("negative bump amplitudes sum to <= -1; n^2 could vanish")
        object.__setattr__(self, "_centers", np.array([b.center for b in bumps]).reshape(-1, self.dim))
        object.__setattr__(self, "_amps", np.array([b.A for b in bumps], dtype=float))
        object.__setattr__(self, "_sig2", np.array([b.sigma**2 for b in bumps], dtype=float))

    @property
    def is_constant(self):
        return self.kind == "constant" or not np.any(self._amps)

    @property
    def n0(self):
        """Guaranteed lower bound on n(x)."""
        return float(np.sqrt(1.0 + sum(min(b.A, 0.0) for b in self.bumps)))

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], bumps=tuple(Bump(**b) for b in d.get("bumps", [])),
                   R=float(d["R"]), dim=int(d["dim"]))

    def to_dict(self):
        return {"kind": self.kind,
                "bumps": [{"A": b.A, "sigma": b.sigma, "center": list(b.center)} for b in self.bumps],
                "R": self.R, "dim": self.dim}

    def n2(self, x):
        """n^2 at points x of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        if self.is_constant:
            return out
        r = np.linalg.norm(x, axis=-1)
        chi = radial_cutoff(r, self.R)
        for c, a, s2 in zip(self._centers, self._amps, self._sig2):
            dx = x - c
            out = out + chi * a * np.exp(-np.sum(dx * dx, axis=-1) / (2 * s2))
        return out

    def derivatives(self, x, hessian=True):
        """Return (n^2, grad n^2, Hessian of n^2) at points x of shape (..., d)."""
        x = np.asarray(x, dtype=float)
        shp = x.shape[:-1]
        d = self.dim
        n2 = np.ones(shp)
        grad = np.zeros(shp + (d,))
        hess = np.zeros(shp + (d, d)) if hessian else None
        if self.is_constant:
            return n2, grad, hess
        r = np.linalg.norm(x, axis=-1)
        chi, chi1, chi2 = radial_cutoff(r, self.R, deriv=1)
        rs = np.where(r > 0, r, 1.0)
        xh = x / rs[..., None]
        # chi' vanishes for r < R/2, so the r -> 0 guard never matters
        gchi = chi1[..., None] * xh
        P = np.zeros(shp)
        gP = np.zeros(shp + (d,))
        hP = np.zeros(shp + (d, d)) if hessian else None
        eye = np.eye(d)
        for c, a, s2 in zip(self._centers, self._amps, self._sig2):
            dx = x - c
            g = a * np.exp(-np.sum(dx * dx, axis=-1) / (2 * s2))
            P = P + g
            gP = gP - (g / s2)[..., None] * dx
            if hessian:
                hP = hP + g[..., None, None] * (dx[..., :, None] * dx[..., None, :] / s2**2 - eye / s2)
        n2 = n2 + chi * P
        grad = chi[..., None] * gP + P[..., None] * gchi
        if hessian:
            xx = xh[..., :, None] * xh[..., None, :]
            hchi = chi2[..., None, None] * xx + (chi1 / rs)[..., None, None] * (eye - xx)
            hess = (chi[..., None, None] * hP
                    + gchi[..., :, None] * gP[..., None, :]
                    + gP[..., :, None] * gchi[..., None, :]
                    + P[..., None, None] * hchi)
        return n2, grad, hess


def eval_medium(m: MediumModel, x) -> MediumEval:
    """Evaluate n, n^2 and the exact gradient/Hessian of n^2 at x."""
    n2, g, h = m.derivatives(x)
    return MediumEval(n=np.sqrt(n2), n2=n2, grad_n2=g, hess_n2=h)


@dataclass
class EscapeReport:
    L: float
    ok: bool
    samples: int
    s_max: float
    step: float
    x0: np.ndarray
    p0: np.ndarray
    escape_s: np.ndarray

    def to_dict(self):
        return {"L": self.L, "ok": self.ok, "samples": self.samples, "s_max": self.s_max,
                "step": self.step, "x0": self.x0.tolist(), "p0": self.p0.tolist(),
                "escape_s": [None if not np.isfinite(v) else float(v) for v in self.escape_s]}


def sample_launch_data(m: MediumModel, samples: int):
    """Quasi-uniform (Halton) launch points in |x| < R with unit-energy directions.

    Momenta are scaled so that |p0| = n(x0), i.e. H = 0.
    """
    d = m.dim
    u = qmc.Halton(d=2 * d - 1, scramble=False).random(samples + 1)[1:]
    if d == 2:
        rad = m.R * np.sqrt(u[:, 0])
        th = 2 * np.pi * u[:, 1]
        x0 = np.stack([rad * np.cos(th), rad * np.sin(th)], axis=1)
        om = 2 * np.pi * u[:, 2]
        dirs = np.stack([np.cos(om), np.sin(om)], axis=1)
    else:
        x0 = m.R * np.cbrt(u[:, 0])[:, None] * _sphere(u[:, 1], u[:, 2])
        dirs = _sphere(u[:, 3], u[:, 4])
    x0 *= 1.0 - 1e-9
    n = np.sqrt(m.n2(x0))
    return x0, dirs * n[:, None]


def _sphere(a, b):
    cz = 2 * a - 1
    ph = 2 * np.pi * b
    sz = np.sqrt(1 - cz**2)
    return np.stack([sz * np.cos(ph), sz * np.sin(ph), cz], axis=1)


def certify_nontrapping(m: MediumModel, samples: int, s_max: float, step: float = 2e-3,
                        raise_on_failure: bool = True) -> EscapeReport:
    """Check numerically that sampled zero-energy rays from |x|<R reach |x|>2R.

    Reports the largest escape parameter L over the sample.  Raises
    NonTrappingUncertain (carrying the report) if a ray has not escaped by
    ``s_max``, unless ``raise_on_failure`` is False.
    """
    from .raytrace import rk4_flow  # local import: raytrace depends on medium

    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not s_max > 0:
        raise ValueError("s_max must be positive")
    x0, p0 = sample_launch_data(m, samples)
    escape = np.full(samples, np.inf)
    for s, x, _p in rk4_flow(m, x0, p0, step, int(np.ceil(s_max / step))):
        out = (np.linalg.norm(x, axis=1) > 2 * m.R) & ~np.isfinite(escape)
        escape[out] = s
        if np.all(np.isfinite(escape)):
            break
    ok = bool(np.all(np.isfinite(escape)))
    L = float(np.max(escape)) if ok else float("inf")
    report = EscapeReport(L=L, ok=ok, samples=samples, s_max=float(s_max), step=float(step),
                          x0=x0, p0=p0, escape_s=escape)
    if not ok and raise_on_failure:
        bad = int(np.sum(~np.isfinite(escape)))
        raise NonTrappingUncertain(f"{bad} of {samples} rays did not leave |x|<=2R by s={s_max}",
                                   report=report)
    return report
