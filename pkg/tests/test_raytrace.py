from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from gbhelm.errors import NonTrappingUncertain, SingularFrame, StepTooLarge
from gbhelm.raytrace import (
    exit_parameter,
    horner,
    integrate_bicharacteristic,
    integrate_variational,
    quintic_table,
    trace_batch,
)
from gbhelm.source import initial_hessian

P3 = np.diag([0.0, 1.0, 1.0])


def unit_launch(m, x0, theta):
    d = m.dim
    e = np.array([np.cos(theta), np.sin(theta)] + [0.0] * (d - 2))
    return np.asarray(x0, float), np.sqrt(m.n2(np.asarray(x0, float))) * e


def test_straight_ray_constant_medium(const3):
    ray = integrate_bicharacteristic(const3, np.zeros(3), np.array([1.0, 0, 0]), (-1, 1), 1e-2)
    assert np.allclose(ray.x, np.outer(2 * ray.s_grid, [1, 0, 0]), atol=1e-14)
    assert np.allclose(ray.p, [1, 0, 0], atol=1e-15)
    assert np.allclose(ray.S, 2 * ray.s_grid, atol=1e-13)


def test_bump_hamiltonian_drift(bump2):
    x0, p0 = unit_launch(bump2, [-0.5, 0.15], 0.1)
    ray = integrate_bicharacteristic(bump2, x0, p0, (0, 2), 1e-3)
    assert np.max(np.abs(ray.H - ray.H0)) < 1e-9


def test_time_reversal(bump2):
    x0, p0 = unit_launch(bump2, [-0.3, 0.2], -0.4)
    a = integrate_bicharacteristic(bump2, x0, p0, (-1, 1), 1e-3)
    b = integrate_bicharacteristic(bump2, x0, -p0, (-1, 1), 1e-3)
    assert np.allclose(a.x[::-1], b.x, atol=1e-12)
    assert np.allclose(a.p[::-1], -b.p, atol=1e-12)


def test_straight_outside_support(bump2):
    x0, p0 = unit_launch(bump2, [-0.2, 0.1], 0.3)
    ray = integrate_bicharacteristic(bump2, x0, p0, (0, 3), 1e-3)
    out = np.flatnonzero(np.linalg.norm(ray.x, axis=1) > bump2.R)
    j = out[out > np.argmax(np.linalg.norm(ray.x, axis=1) > bump2.R)]
    j = j[j > j[0] + 5]
    assert np.allclose(ray.p[j], ray.p[j[0]], atol=1e-14)
    pred = ray.x[j[0]] + 2 * ray.p[j[0]] * (ray.s_grid[j] - ray.s_grid[j[0]])[:, None]
    assert np.allclose(ray.x[j], pred, atol=1e-12)


def test_five_example_frame(const3):
    ray = integrate_bicharacteristic(const3, np.zeros(3), np.array([1.0, 0, 0]), (-1, 1), 1e-2)
    fr = integrate_variational(const3, ray, np.eye(3), 1j * P3)
    s = fr.s_grid
    assert np.allclose(fr.C, 1j * P3, atol=1e-14)
    assert np.allclose(fr.B, np.eye(3) + 2j * s[:, None, None] * P3, atol=1e-13)
    assert np.allclose(fr.M, 1j * P3 / (1 + 2j * s[:, None, None]), atol=1e-13)


def test_flat_initial_hessian_stays_flat(const2):
    ray = integrate_bicharacteristic(const2, np.zeros(2), np.array([1.0, 0]), (-1, 1), 1e-2)
    fr = integrate_variational(const2, ray, np.eye(2), np.zeros((2, 2)))
    assert np.max(np.abs(fr.M)) == 0


def riccati(m, ray, M0, s_end):
    d = m.dim

    def rhs(s, v):
        M = v.reshape(d, d)  # complex
        x = ray.position(np.array([s]))[0]
        _, _, H = m.derivatives(x)
        return (H - 2 * M @ M).ravel()

    return solve_ivp(rhs, (0, s_end), M0.ravel().astype(complex), method="DOP853",
                     rtol=1e-12, atol=1e-13, dense_output=True)


def test_frame_matches_direct_riccati(bump2):
    x0, p0 = unit_launch(bump2, [-0.6, 0.05], 0.0)
    M0 = initial_hessian(bump2, x0, p0)
    ray = integrate_bicharacteristic(bump2, x0, p0, (-1, 1), 1e-3)
    fr = integrate_variational(bump2, ray, np.eye(2), M0)
    for s_end in (1.0, -1.0):
        sol = riccati(bump2, ray, M0, s_end)
        ss = np.linspace(0, s_end, 21)
        Mr = sol.sol(ss).T.reshape(-1, 2, 2)
        Mf, _ = fr.hessian(ss)
        assert np.max(np.abs(Mr - Mf)) < 1e-6


@settings(max_examples=8, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.4, 0.4))
def test_propagated_invariants(bump2, y0, theta):
    x0, p0 = unit_launch(bump2, [-0.6, y0], theta)
    M0 = initial_hessian(bump2, x0, p0)
    ray = integrate_bicharacteristic(bump2, x0, p0, (-0.5, 2), 1e-3)
    fr = integrate_variational(bump2, ray, np.eye(2), M0)
    M = fr.M
    assert np.max(np.abs(M - np.swapaxes(M, 1, 2))) <= 1e-8
    xdot = 2 * ray.p
    assert np.max(np.abs(np.einsum("nij,nj->ni", M, xdot) - ray.grad_n2)) <= 1e-8
    nrm = np.stack([-xdot[:, 1], xdot[:, 0]], 1) / np.linalg.norm(xdot, axis=1)[:, None]
    assert np.min(np.einsum("ni,nij,nj->n", nrm, M.imag, nrm)) > 0
    W = np.swapaxes(fr.B, 1, 2) @ fr.C - np.swapaxes(fr.C, 1, 2) @ fr.B
    assert np.max(np.abs(W)) <= 1e-8


def test_dense_output_matches_fine_trace(bump2):
    x0, p0 = unit_launch(bump2, [-0.5, 0.2], 0.2)
    coarse = integrate_bicharacteristic(bump2, x0, p0, (0, 1), 1e-2)
    fine = integrate_bicharacteristic(bump2, x0, p0, (0, 1), 1e-3)
    mid = fine.s_grid[5:-5:10] + 5e-4  # between coarse nodes
    err = np.max(np.abs(coarse.position(mid) - fine.position(mid)))
    assert err < 1e-8


def test_quintic_table_reproduces_quintics():
    h = 0.1
    s = h * np.arange(-3, 8)
    c = np.array([0.3, -1.2, 0.7, 2.0, -0.5, 0.25])
    f = np.polyval(c[::-1], s)
    f1 = np.polyval(np.polyder(c[::-1]), s)
    f2 = np.polyval(np.polyder(c[::-1], 2), s)
    tab = quintic_table(f, f1, f2, h)
    q = np.linspace(s[0], s[-1], 37)
    v, v1 = horner(tab, s, q, 1)
    assert np.allclose(v, np.polyval(c[::-1], q), atol=1e-12)
    assert np.allclose(v1, np.polyval(np.polyder(c[::-1]), q), atol=1e-11)


def test_initial_data_off_shell_rejected(bump2):
    with pytest.raises(ValueError):
        integrate_bicharacteristic(bump2, np.zeros(2), np.array([1.0, 0]), (0, 1), 1e-3)


def test_step_too_large(bump2):
    x0, p0 = unit_launch(bump2, [-0.5, 0.1], 0.0)
    with pytest.raises(StepTooLarge):
        trace_batch(bump2, x0[None], p0[None], (0, 2), 0.2, tol=1e-15, max_halvings=0)


def test_singular_frame(const2):
    ray = integrate_bicharacteristic(const2, np.zeros(2), np.array([1.0, 0]), (0, 1), 1e-2)
    with pytest.raises(SingularFrame):
        integrate_variational(const2, ray, np.zeros((2, 2)), np.eye(2))
    # real B0 = I, C0 = -P/2 focuses: B = I - sP vanishes on e2 at s = 1
    ray2 = integrate_bicharacteristic(const2, np.zeros(2), np.array([1.0, 0]), (0, 2), 1e-2)
    with pytest.raises(SingularFrame):
        integrate_variational(const2, ray2, np.eye(2), -0.5 * np.diag([0.0, 1.0]))


def test_exit_parameter_constant(const2):
    x0 = np.array([[0.0, 0.0], [0.5, 0.0]])
    p0 = np.array([[1.0, 0.0], [0.0, 1.0]])
    L = exit_parameter(const2, x0, p0, 5.0)
    assert np.allclose(L, [2.5, np.sqrt(25 - 0.25) / 2])


def test_exit_parameter_reports_trapping(bump2):
    x0, p0 = unit_launch(bump2, [0.0, 0.0], 0.0)
    with pytest.raises(NonTrappingUncertain):
        exit_parameter(bump2, x0[None], p0[None], 5.0, s_max=0.05)


def test_csv_columns(bump2):
    x0, p0 = unit_launch(bump2, [-0.5, 0.1], 0.0)
    ray = integrate_bicharacteristic(bump2, x0, p0, (0, 0.1), 1e-2)
    lines = ray.to_csv(["hello"]).splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "s,x1,x2,p1,p2,H,H_drift"
    assert len(lines) == 2 + len(ray.s_grid)
