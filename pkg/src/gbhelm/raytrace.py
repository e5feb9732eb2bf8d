"""Bicharacteristics of H(x, p) = |p|^2 - n^2(x) and the linearised (B, C) frame.

Hamilton's equations give

    x' = 2p,   p' = grad n^2(x),   S' = 2 n^2(x)

and the variational frame obeys B' = 2C, C' = D^2 n^2(x) B, so that
M = C B^{-1} solves the Riccati equation M' = D^2 n^2 - 2 M^2 without ever
integrating it directly.  Everything is advanced together with classical
fixed-step RK4 on a uniform s grid that contains s = 0.

Between nodes x, p and S are reconstructed by quintic Hermite interpolation
(values plus two exact derivatives from the ODE), B and C by cubic Hermite.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import NonTrappingUncertain, SingularFrame, StepTooLarge
from .medium import MediumModel

DRIFT_TOL = 1e-9
DET_MIN = 1e-12


def _rhs(m: MediumModel, x, p, B=None, C=None):
    n2, g, h = m.derivatives(x, hessian=B is not None)
    out = [2.0 * p, g, 2.0 * n2]
    if B is not None:
        out += [2.0 * C, h @ B]
    return out


def _rk4_step(m, h, state):
    k1 = _rhs(m, *_pick(state))
    k2 = _rhs(m, *_pick(_axpy(state, k1, h / 2)))
    k3 = _rhs(m, *_pick(_axpy(state, k2, h / 2)))
    k4 = _rhs(m, *_pick(_axpy(state, k3, h)))
    return [u + (h / 6) * (a + 2 * b + 2 * c + e) for u, a, b, c, e in zip(state, k1, k2, k3, k4)]


def _pick(state):
    # state is [x, p, S] or [x, p, S, B, C]; the RHS ignores S
    return (state[0], state[1]) if len(state) == 3 else (state[0], state[1], state[3], state[4])


def _axpy(state, k, a):
    return [u + a * v for u, v in zip(state, k)]


def rk4_flow(m: MediumModel, x0, p0, step: float, nsteps: int):
    """Yield ``(s, x, p)`` after each of ``nsteps`` RK4 steps for a batch of rays.

    ``x0`` and ``p0`` have shape (N, d).  A negative ``step`` integrates
    backwards.
    """
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    state = [x, p, np.zeros(x.shape[0])]
    for i in range(1, nsteps + 1):
        state = _rk4_step(m, step, state)
        yield i * step, state[0], state[1]


def hamiltonian(m: MediumModel, x, p):
    return np.sum(p * p, axis=-1) - m.n2(x)


def _march(m, state, h, nsteps):
    """Return node arrays of shape (nsteps+1, ...) for every state component."""
    hist = [[u] for u in state]
    for _ in range(nsteps):
        state = _rk4_step(m, h, state)
        for lst, u in zip(hist, state):
            lst.append(u)
    return [np.stack(lst) for lst in hist]


def trace_batch(m: MediumModel, x0, p0, s_span, step, B0=None, C0=None,
                tol=DRIFT_TOL, max_halvings=5):
    """Integrate a batch of rays (and optionally frames) on a common s grid.

    Returns ``(s_grid, step, x, p, S, B, C)`` with node axis first, ray axis
    second.  The step is halved until the Hamiltonian drift of every ray is
    within ``tol * (1 + |H0|)``; StepTooLarge is raised otherwise.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))
    s0, s1 = float(s_span[0]), float(s_span[1])
    if not (s0 <= 0.0 <= s1) or s1 - s0 <= 0:
        raise ValueError("s_span must be an interval containing 0")
    if not step > 0:
        raise ValueError("step must be positive")
    frame = B0 is not None
    N = x0.shape[0]
    H0 = hamiltonian(m, x0, p0)
    for _ in range(max_halvings + 1):
        nf = int(np.ceil(s1 / step - 1e-9))
        nb = int(np.ceil(-s0 / step - 1e-9))
        init = [x0, p0, np.zeros(N)]
        if frame:
            init += [np.asarray(B0, dtype=complex), np.asarray(C0, dtype=complex)]
        fwd = _march(m, init, step, nf)
        bwd = _march(m, init, -step, nb)
        arrs = [np.concatenate([b[:0:-1], f]) for f, b in zip(fwd, bwd)]
        H = hamiltonian(m, arrs[0], arrs[1])
        if np.all(np.abs(H - H0) <= tol * (1 + np.abs(H0))):
            break
        step /= 2
    else:
        raise StepTooLarge(f"Hamiltonian drift {np.max(np.abs(H - H0)):.3e} above tolerance "
                           f"after {max_halvings} step halvings")
    s_grid = step * np.arange(-nb, nf + 1)
    if frame:
        det = np.abs(np.linalg.det(arrs[3]))
        if np.any(det < DET_MIN):
            raise SingularFrame(f"|det B| reached {det.min():.3e}")
        return (s_grid, step, *arrs)
    return (s_grid, step, *arrs, None, None)


def exit_parameter(m: MediumModel, x0, p0, radius: float, step=2e-3, s_max=1e3):
    """Smallest s > 0 after which each ray stays outside |x| >= radius.

    Rays are integrated until they have left the support ball moving
    outward; from there the path is straight and the exit is solved exactly.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    p0 = np.atleast_2d(np.asarray(p0, dtype=float))

    def free_exit(x, p):
        # |x + 2 p t| = radius for the larger root t
        a = 4 * np.sum(p * p, axis=1)
        b = 4 * np.sum(x * p, axis=1)
        c = np.sum(x * x, axis=1) - radius**2
        return np.maximum((-b + np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))) / (2 * a), 0.0)

    if m.is_constant:
        return free_exit(x0, p0)
    out = np.full(x0.shape[0], np.nan)
    free = (np.linalg.norm(x0, axis=1) > m.R) & (np.sum(x0 * p0, axis=1) >= 0)
    out[free] = free_exit(x0[free], p0[free])
    for s, x, p in rk4_flow(m, x0, p0, step, int(np.ceil(s_max / step))):
        free = np.isnan(out) & (np.linalg.norm(x, axis=1) > m.R) & (np.sum(x * p, axis=1) >= 0)
        if np.any(free):
            out[free] = s + free_exit(x[free], p[free])
        if not np.any(np.isnan(out)):
            return out
    bad = int(np.sum(np.isnan(out)))
    raise NonTrappingUncertain(f"{bad} ray(s) did not leave the medium support before s={s_max}")


# --- Hermite interpolation --------------------------------------------------

_Q = np.array([
    [1, 0, 0, -10, 15, -6],
    [0, 1, 0, -6, 8, -3],
    [0, 0, 0.5, -1.5, 1.5, -0.5],
    [0, 0, 0, 0.5, -1, 0.5],
    [0, 0, 0, -4, 7, -3],
    [0, 0, 0, 10, -15, 6],
])
_C = np.array([
    [1, 0, -3, 2],
    [0, 1, -2, 1],
    [0, 0, -1, 1],
    [0, 0, 3, -2],
], dtype=float)


def quintic_table(f, f1, f2, h):
    """Monomial coefficients in t = (s - s_i)/h on every interval, shape (n-1, 6, ...)."""
    cols = np.stack([f[:-1], h * f1[:-1], h * h * f2[:-1], h * h * f2[1:], h * f1[1:], f[1:]])
    return np.einsum("jk,jn...->nk...", _Q, cols)


def cubic_table(f, f1, h):
    cols = np.stack([f[:-1], h * f1[:-1], h * f1[1:], f[1:]])
    return np.einsum("jk,jn...->nk...", _C, cols)


def _locate(s_grid, s):
    h = s_grid[1] - s_grid[0]
    i = np.clip(np.floor((s - s_grid[0]) / h).astype(int), 0, len(s_grid) - 2)
    return i, (s - s_grid[i]) / h, h


def horner(table, s_grid, s, upto=0):
    """Evaluate a piecewise polynomial table and its first ``upto`` s-derivatives."""
    s = np.asarray(s, dtype=float)
    shp = s.shape
    i, t, h = _locate(s_grid, s.reshape(-1))
    a = table[i]  # (N, K, ...)
    t = t.reshape(t.shape + (1,) * (a.ndim - 2))
    K = a.shape[1]
    out = []
    for dv in range(upto + 1):
        acc = np.zeros_like(a[:, 0])
        for kk in range(K - 1, dv - 1, -1):
            fac = 1.0
            for j in range(dv):
                fac *= kk - j
            acc = acc * t + fac * a[:, kk]
        out.append((acc / h**dv).reshape(shp + acc.shape[1:]))
    return out


@dataclass(frozen=True, eq=False)
class Bicharacteristic:
    """Sampled zero-energy ray with smooth interpolation between nodes."""

    s_grid: np.ndarray
    x: np.ndarray
    p: np.ndarray
    H0: float
    z: np.ndarray
    step: float
    medium: MediumModel
    S: np.ndarray
    n2: np.ndarray
    grad_n2: np.ndarray
    hess_n2: np.ndarray

    def __post_init__(self):
        h = self.step
        pdot2 = 2 * np.einsum("nij,nj->ni", self.hess_n2, self.p)
        s2 = 4 * np.sum(self.p * self.grad_n2, axis=1)
        object.__setattr__(self, "_tx", quintic_table(self.x, 2 * self.p, 2 * self.grad_n2, h))
        object.__setattr__(self, "_tp", quintic_table(self.p, self.grad_n2, pdot2, h))
        object.__setattr__(self, "_tS", quintic_table(self.S, 2 * self.n2, s2, h))

    @classmethod
    def from_nodes(cls, m, s_grid, step, x, p, S, z=None):
        n2, g, hs = m.derivatives(x)
        H0 = float(np.sum(p[np.argmin(np.abs(s_grid))] ** 2)
                   - n2[np.argmin(np.abs(s_grid))])
        z = x[np.argmin(np.abs(s_grid))] if z is None else np.asarray(z, dtype=float)
        return cls(s_grid=s_grid, x=x, p=p, H0=H0, z=z, step=step, medium=m,
                   S=S, n2=n2, grad_n2=g, hess_n2=hs)

    @property
    def dim(self):
        return self.x.shape[1]

    @property
    def H(self):
        return np.sum(self.p**2, axis=1) - self.n2

    @property
    def i0(self):
        return int(np.argmin(np.abs(self.s_grid)))

    def position(self, s, deriv=0):
        return horner(self._tx, self.s_grid, s, deriv)[deriv]

    def position_derivs(self, s, upto=2):
        """[x, x', x''][:upto+1] at s in one pass."""
        return horner(self._tx, self.s_grid, s, upto)

    def momentum(self, s, deriv=0):
        return horner(self._tp, self.s_grid, s, deriv)[deriv]

    def momentum_derivs(self, s, upto=1):
        return horner(self._tp, self.s_grid, s, upto)

    def phase(self, s, deriv=0):
        return horner(self._tS, self.s_grid, s, deriv)[deriv]

    def phase_derivs(self, s, upto=1):
        return horner(self._tS, self.s_grid, s, upto)

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        d = self.dim
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s"] + [f"x{i+1}" for i in range(d)] + [f"p{i+1}" for i in range(d)] + ["H", "H_drift"])
        for s, x, p, H in zip(self.s_grid, self.x, self.p, self.H):
            w.writerow([f"{s:.10g}"] + [f"{v:.15e}" for v in x] + [f"{v:.15e}" for v in p]
                       + [f"{H:.6e}", f"{H - self.H0:.6e}"])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class VariationalFrame:
    """Linearised flow (B, C) along a ray; M = C B^{-1}."""

    s_grid: np.ndarray
    B: np.ndarray
    C: np.ndarray
    hess_n2: np.ndarray

    @property
    def M(self):
        return np.linalg.solve(np.swapaxes(self.B, -1, -2), np.swapaxes(self.C, -1, -2)).swapaxes(-1, -2)

    @property
    def detB(self):
        return np.linalg.det(self.B)

    def __post_init__(self):
        h = self.s_grid[1] - self.s_grid[0]
        object.__setattr__(self, "_tB", cubic_table(self.B, 2 * self.C, h))
        object.__setattr__(self, "_tC", cubic_table(self.C, self.hess_n2 @ self.B, h))

    def interp(self, s):
        """Return B, B', C, C' at parameters s by cubic Hermite interpolation."""
        B, B1 = horner(self._tB, self.s_grid, s, 1)
        C, C1 = horner(self._tC, self.s_grid, s, 1)
        return B, B1, C, C1

    def hessian(self, s):
        """Return M(s) and dM/ds from the interpolated frame."""
        B, B1, C, C1 = self.interp(s)
        Bi = np.linalg.inv(B)
        M = C @ Bi
        return M, (C1 - M @ B1) @ Bi


def integrate_bicharacteristic(m: MediumModel, x0, p0, s_span, step, z=None,
                               tol=DRIFT_TOL) -> Bicharacteristic:
    """RK4 ray through (x0, p0), refined by step halving until H drift <= tol(1+|H0|)."""
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if x0.shape != (m.dim,) or p0.shape != (m.dim,):
        raise ValueError("x0 and p0 must be vectors of the medium dimension")
    H0 = float(p0 @ p0 - m.n2(x0))
    if abs(H0) > 1e-8 * (1 + float(p0 @ p0)):
        raise ValueError(f"initial data must have |p0| = n(x0); H0 = {H0:.3e}")
    s_grid, h, x, p, S, _, _ = trace_batch(m, x0[None], p0[None], s_span, step, tol=tol)
    return Bicharacteristic.from_nodes(m, s_grid, h, x[:, 0], p[:, 0], S[:, 0],
                                       z=x0 if z is None else z)


def integrate_variational(m: MediumModel, ray: Bicharacteristic, B0, C0) -> VariationalFrame:
    """Solve B' = 2C, C' = D^2 n^2 B along ``ray`` with the ray's own step."""
    B0 = np.asarray(B0, dtype=complex)
    C0 = np.asarray(C0, dtype=complex)
    if abs(np.linalg.det(B0)) < DET_MIN:
        raise SingularFrame("B0 is singular")
    i0 = ray.i0
    span = (ray.s_grid[0], ray.s_grid[-1])
    s_grid, h, x, p, S, B, C = trace_batch(m, ray.x[i0][None], ray.p[i0][None], span, ray.step,
                                           B0=B0[None], C0=C0[None], tol=np.inf, max_halvings=0)
    return VariationalFrame(s_grid=s_grid, B=B[:, 0], C=C[:, 0], hess_n2=ray.hess_n2)
