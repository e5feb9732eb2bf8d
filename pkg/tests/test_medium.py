from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbhelm.errors import NonTrappingUncertain
from gbhelm.medium import Bump, MediumModel, certify_nontrapping, eval_medium, sample_launch_data
from gbhelm.smooth import radial_cutoff, smoothstep


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_constant_medium_is_flat(const2):
    ev = eval_medium(const2, np.array([0.3, -0.2]))
    assert ev.n == 1 and ev.n2 == 1
    assert np.all(ev.grad_n2 == 0) and np.all(ev.hess_n2 == 0)


def test_bump_value_at_centre(bump2):
    ev = eval_medium(bump2, np.zeros(2))
    assert ev.n2 == pytest.approx(1.5, abs=1e-15)
    assert ev.n == pytest.approx(np.sqrt(1.5), abs=1e-15)
    assert np.all(ev.grad_n2 == 0)


def test_bump_gradient_matches_central_differences(bump2):
    x = np.array([0.1, 0.0])
    g = eval_medium(bump2, x).grad_n2
    fd = fd_grad(lambda y: float(bump2.n2(y)), x)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(g)) < 1e-6


def test_derivatives_on_cutoff_band_match_fd(bump3):
    gen = np.random.default_rng(3)
    for _ in range(100):
        x = gen.uniform(-1.1, 1.1, 3)
        _, g, H = bump3.derivatives(x)
        fd_g = fd_grad(lambda y: float(bump3.n2(y)), x)
        fd_H = np.array([fd_grad(lambda y: bump3.derivatives(y)[1][i], x) for i in range(3)])
        assert np.max(np.abs(g - fd_g)) < 1e-8
        assert np.max(np.abs(H - fd_H)) < 1e-7


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0001, 5.0), st.floats(0, 2 * np.pi), st.floats(0, np.pi))
def test_homogeneous_outside_support(r, th, ph):
    m = MediumModel(kind="multi_bump", bumps=(Bump(0.4, 0.2, (0.3, 0, 0)), Bump(-0.3, 0.3, (-0.2, 0.1, 0))),
                    R=1.0, dim=3)
    x = r * np.array([np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)])
    n2, g, H = m.derivatives(x)
    assert n2 == 1.0 and np.all(g == 0) and np.all(H == 0)


def test_lower_bound_n0(bump2):
    m = MediumModel(kind="gaussian_bump", bumps=(Bump(-0.9, 0.2, (0, 0)),), R=1.0, dim=2)
    ax = np.linspace(-1, 1, 201)
    n = np.sqrt(m.n2(np.stack(np.meshgrid(ax, ax), -1).reshape(-1, 2)))
    assert m.n0 > 0
    assert n.min() >= m.n0 - 1e-12


@pytest.mark.parametrize("bad", [
    dict(kind="gaussian_bump", bumps=(), R=1.0, dim=2),
    dict(kind="constant", bumps=(Bump(0.1, 0.2, (0, 0)),), R=1.0, dim=2),
    dict(kind="nope", R=1.0, dim=2),
    dict(kind="constant", R=-1.0, dim=2),
    dict(kind="constant", R=1.0, dim=4),
])
def test_invalid_models_rejected(bad):
    with pytest.raises(ValueError):
        MediumModel(**bad)


def test_bump_amplitude_bound():
    with pytest.raises(ValueError):
        Bump(1.0, 0.2, (0, 0))


def test_round_trip_dict(bump2):
    assert MediumModel.from_dict(bump2.to_dict()) == bump2


def test_cutoff_profile():
    r = np.array([0.0, 0.5, 0.75, 1.0, 1.5])
    v, _, _ = radial_cutoff(r, 1.0, deriv=2)
    assert v[0] == 1 and v[1] == 1 and v[3] == 0 and v[4] == 0
    assert 0 < v[2] < 1
    t = np.linspace(-0.5, 1.5, 41)
    assert np.all(np.diff(smoothstep(t)) >= 0)


def test_constant_escape_bound(const2):
    rep = certify_nontrapping(const2, 50, 10.0, step=1e-3)
    assert rep.ok and rep.L <= 1.5 * const2.R


def test_bump_nontrapping(bump2):
    rep = certify_nontrapping(bump2, 200, 20.0)
    assert rep.ok and np.isfinite(rep.L)


def test_short_s_max_raises(bump2):
    with pytest.raises(NonTrappingUncertain) as info:
        certify_nontrapping(bump2, 20, 0.1)
    assert info.value.report is not None and not info.value.report.ok


def test_launch_data_on_zero_energy_shell(bump3):
    x0, p0 = sample_launch_data(bump3, 64)
    assert np.all(np.linalg.norm(x0, axis=1) < bump3.R)
    assert np.allclose(np.sum(p0 * p0, 1), bump3.n2(x0), atol=1e-13)
