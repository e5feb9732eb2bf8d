from __future__ import annotations

import numpy as np
import pytest

from gbhelm.beam import beam_field
from gbhelm.medium import Bump, MediumModel
from gbhelm.source import (
    BumpWeight,
    SourceSpec,
    build_beam_pair,
    eval_source_amplitude,
    initial_hessian,
    jump_mismatch,
    source_amplitude,
)

E1 = np.array([1.0, 0.0])


@pytest.fixture(scope="module")
def offset_bump():
    return MediumModel(kind="gaussian_bump", bumps=(Bump(0.5, 0.25, (0.1, 0.05)),), R=1.0, dim=2)


def test_constant_medium_hessian_and_mirror(const2):
    pair = build_beam_pair(const2, [0.1], eta=0.3)
    P = np.diag([0.0, 1.0])
    assert np.allclose(pair.forward.M[pair.forward.ray.i0], 1j * P, atol=1e-15)
    assert np.allclose(pair.backward.M[pair.backward.ray.i0], 1j * P, atol=1e-15)
    X = np.column_stack([np.linspace(0.05, 1.5, 20), 0.1 + np.linspace(-0.1, 0.1, 20)])
    mirror = X * np.array([-1.0, 1.0])
    assert np.allclose(beam_field(pair.forward, X, 30.0), beam_field(pair.backward, mirror, 30.0), atol=1e-12)


def test_tangential_block(offset_bump):
    for z in ([0.0, -0.3], [0.0, 0.2]):
        z = np.array(z)
        p0 = np.sqrt(offset_bump.n2(z)) * E1
        for p in (p0, -p0):
            M0 = initial_hessian(offset_bump, z, p)
            P = np.eye(2) - np.outer(p, p) / (p @ p)
            assert np.allclose(P @ M0 @ P, 1j * P, atol=1e-15)


def test_compatibility_with_gradient(offset_bump):
    z = np.array([0.0, 0.2])
    _, g, _ = offset_bump.derivatives(z)
    assert np.linalg.norm(g) > 0.1
    p0 = np.sqrt(offset_bump.n2(z)) * E1
    M0 = initial_hessian(offset_bump, z, p0)
    assert np.max(np.abs(M0 @ p0 - g / 2)) < 1e-12


@pytest.mark.parametrize("alpha", [0.0, 0.5])
@pytest.mark.parametrize("k", [10.0, 100.0])
def test_density_at_launch_point(offset_bump, alpha, k):
    z = [0.2]
    pair = build_beam_pair(offset_bump, z, alpha=alpha, eta=0.3)
    n2 = float(offset_bump.n2(np.array([0.0, 0.2])))
    n = np.sqrt(n2)
    g0 = eval_source_amplitude(pair, [0.0, 0.2], k)
    # 2ikn plus the k-independent amplitude jump -(i(d-1) + alpha n^2)/n
    assert abs(g0 - (2j * k * n - (1j + alpha * n2) / n)) < 1e-10 * k


def test_leading_coefficient_purely_imaginary(offset_bump):
    pair = build_beam_pair(offset_bump, [0.2], eta=0.3)
    n = np.sqrt(float(offset_bump.n2(np.array([0.0, 0.2]))))
    lead = eval_source_amplitude(pair, [0.0, 0.2], 1e6) / 1e6
    assert abs(lead.real) < 1e-5 and lead.imag == pytest.approx(2 * n, rel=1e-6)


def test_five_density(const3):
    pair = build_beam_pair(const3, [0.0, 0.0], eta=0.3)
    k = 400.0
    for r in (0.08, 0.04, 0.02, 0.01, 0.0):
        y = np.array([0.0, r, 0.0])
        g0 = eval_source_amplitude(pair, y, k)
        ratio = abs(g0 / (2j * k * np.exp(-k * r * r / 2)) - 1)
        # 1 + O(|y'|), plus the O(1/k) amplitude jump (exactly 1/k at y' = 0 for d = 3)
        assert ratio <= r + 1.0 / k + 1e-12
    assert ratio == pytest.approx(1.0 / k, rel=1e-9)


def test_gaussian_family_consistency(offset_bump):
    pair = build_beam_pair(offset_bump, [0.2], eta=0.3)
    z = np.array([0.0, 0.2])
    n = np.sqrt(float(offset_bump.n2(z)))
    k = 50.0
    errs = []
    for r in (0.04, 0.02, 0.01, 0.005):
        x = z + np.array([0.0, r])
        g = eval_source_amplitude(pair, x, k)
        errs.append(abs(g * np.exp(k * r * r / 2) / (1j * k) - 2 * n))
    assert errs[-1] < errs[0] and errs[-1] < 0.05


def test_phases_match_on_plane(offset_bump):
    pair = build_beam_pair(offset_bump, [0.2], eta=0.3)
    r = np.geomspace(1e-3, 1e-1, 7)
    X = np.column_stack([np.zeros(7), 0.2 + r])
    dphi, da = jump_mismatch(pair, X)
    assert np.all(dphi <= 1e-14 + r**3)
    assert np.all(da <= 1e-13)


def test_density_needs_plane_points(const2):
    pair = build_beam_pair(const2, [0.0], eta=0.3)
    with pytest.raises(ValueError):
        source_amplitude(pair, np.array([[0.1, 0.0]]), 10.0)


def test_spec_validation_and_round_trip():
    spec = SourceSpec.from_dict({"z_domain": [-0.4, 0.4], "h": {"kind": "bump", "radius": 0.4}, "k": 20})
    assert spec.dim == 2
    again = SourceSpec.from_dict(spec.to_dict())
    assert np.array_equal(again.z_domain, spec.z_domain) and again.h == spec.h and again.k == 20
    with pytest.raises(ValueError):
        SourceSpec(z_domain=[-0.4, 0.4], h=BumpWeight(0.5))
    with pytest.raises(ValueError):
        SourceSpec(z_domain=[0.4, -0.4], h=BumpWeight(0.1))
    with pytest.raises(ValueError):
        SourceSpec.from_dict({"z_domain": [-1, 1], "h": {"kind": "box", "radius": 0.4}})


def test_pair_outside_domain_rejected(const2):
    spec = SourceSpec(z_domain=[-0.4, 0.4], h=BumpWeight(0.4))
    with pytest.raises(ValueError):
        build_beam_pair(const2, [0.5], spec=spec)


def test_bump_weight_profile():
    h = BumpWeight(0.4)
    z = np.array([[0.0], [0.2], [0.4], [0.5]])
    v = h(z)
    assert v[0] == pytest.approx(1.0) and 0 < v[1] < 1 and v[2] == 0 and v[3] == 0
