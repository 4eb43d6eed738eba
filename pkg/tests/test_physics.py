import numpy as np
import pytest

from tangent_plane_llg import (AppliedFieldConfig, PiConfig, SIParameters,
                               applied_field_mumag4, mumag4_parameters,
                               mumag5_spin_velocity, nondimensionalize,
                               pi_apply)
from tangent_plane_llg.physics import (MU0, FieldConfigError,
                                       nodal_directional_derivative,
                                       pi_bound_constant)

from conftest import random_unit_field


def test_mumag4_nondimensional_values():
    out = nondimensionalize(mumag4_parameters())
    assert out["ell_ex2"] == pytest.approx(32.3283, abs=1e-3)
    assert out["k"] == pytest.approx(0.017688, abs=1e-5)
    assert out["h"] == pytest.approx(5.0, abs=1e-12)


def test_scale_consistency_doubling_L():
    base = mumag4_parameters()
    doubled = SIParameters(A=base.A, Ms=base.Ms, mu0=base.mu0, gamma0=base.gamma0,
                           L=2 * base.L, dt_phys=base.dt_phys, dx_phys=base.dx_phys)
    assert nondimensionalize(doubled)["ell_ex2"] * 4 == pytest.approx(
        nondimensionalize(base)["ell_ex2"], rel=1e-15)


def test_si_parameters_validated():
    with pytest.raises(FieldConfigError):
        SIParameters(A=0.0, Ms=1, mu0=1, gamma0=1, L=1, dt_phys=1, dx_phys=1)


def test_applied_field_mumag4_value():
    f = applied_field_mumag4()
    assert abs(f[0] + 28250) <= 0.001 * 28250
    assert abs(f[1] + 5013.4) <= 0.001 * 5013.4
    assert f[2] == 0.0


def test_applied_field_mumag4_linearity():
    assert np.array_equal(applied_field_mumag4((0, 0, 0)), np.zeros(3))
    plus = applied_field_mumag4((1.0, -2.0, 3.0))
    minus = applied_field_mumag4((-1.0, 2.0, -3.0))
    assert np.array_equal(plus, -minus)


def test_mumag5_spin_velocity():
    u = mumag5_spin_velocity()
    expected = 72.17 / (2.21e5 * 8.0e5 * 1e-9)
    assert abs(u[0] - expected) <= 1e-6 * expected
    assert u[1] == 0.0 and u[2] == 0.0


def test_pi_zero(cube2):
    m = random_unit_field(cube2.N, seed=50)
    out = pi_apply(PiConfig(kind="zero"), cube2, m)
    assert np.array_equal(out, np.zeros_like(m))


def test_pi_uniaxial_aligned(cube2):
    m = np.tile([0.0, 0.0, 1.0], (cube2.N, 1))
    cfg = PiConfig(kind="uniaxial", axis=(0.0, 0.0, 1.0), strength=1.0)
    out = pi_apply(cfg, cube2, m)
    assert np.abs(out - m).max() <= 1e-15


def test_pi_uniaxial_projection(cube2):
    m = random_unit_field(cube2.N, seed=51)
    cfg = PiConfig(kind="uniaxial", axis=(1.0, 0.0, 0.0), strength=2.5)
    out = pi_apply(cfg, cube2, m)
    assert np.abs(out[:, 1:]).max() == 0.0
    assert np.abs(out[:, 0] - 2.5 * m[:, 0]).max() <= 1e-15


def test_uniaxial_axis_must_be_unit():
    with pytest.raises(FieldConfigError):
        PiConfig(kind="uniaxial", axis=(1.0, 1.0, 0.0), strength=1.0)


def test_zhang_li_constant_field_vanishes(cube2):
    m = np.tile([1.0, 0.0, 0.0], (cube2.N, 1))
    cfg = PiConfig(kind="zhang_li", u=(0.4, 0.0, 0.0), beta_zl=0.05)
    out = pi_apply(cfg, cube2, m)
    assert np.abs(out).max() <= 1e-14


def test_zhang_li_linear_field_exact(cube2):
    # m = (0, x1, 0): (u.grad) m = u1 * e2 on every element, so the nodal
    # recovery reproduces it exactly
    m = np.zeros((cube2.N, 3))
    m[:, 1] = cube2.nodes[:, 0]
    u = (0.7, 0.0, 0.0)
    adv = nodal_directional_derivative(cube2, m, u)
    assert np.abs(adv - np.array([0.0, 0.7, 0.0])).max() <= 1e-13
    cfg = PiConfig(kind="zhang_li", u=u, beta_zl=0.05)
    out = pi_apply(cfg, cube2, m)
    expected = np.cross(m, adv) + 0.05 * adv
    assert np.abs(out - expected).max() <= 1e-14


def test_pi_operator_bound(cube2):
    for seed in range(5):
        m = random_unit_field(cube2.N, seed=60 + seed)
        vol, grad = cube2.element_geometry()
        gm = np.einsum("ead,eac->edc", grad, m[cube2.tets])
        max_grad = np.sqrt(np.einsum("edc,edc->e", gm, gm).max())
        for cfg in (PiConfig(kind="zero"),
                    PiConfig(kind="uniaxial", axis=(0, 0, 1), strength=0.8),
                    PiConfig(kind="zhang_li", u=(0.4, 0.1, 0.0), beta_zl=0.05)):
            out = pi_apply(cfg, cube2, m)
            bound = pi_bound_constant(cfg) * (1.0 + max_grad)
            assert np.linalg.norm(out, axis=1).max() <= bound + 1e-12


def test_academic_applied_field(cube2):
    f = AppliedFieldConfig(kind="academic").nodal(cube2, 0.0)
    x1 = cube2.nodes[:, 0]
    assert np.abs(f[:, 0] - 10 * np.sin(x1)).max() == 0.0
    assert np.abs(f[:, 1] - 10 * np.cos(x1)).max() == 0.0
    assert np.abs(f[:, 2]).max() == 0.0


def test_constant_applied_field(cube2):
    f = AppliedFieldConfig(kind="constant", value=(1.0, 2.0, 3.0)).nodal(cube2, 5.0)
    assert np.array_equal(f, np.tile([1.0, 2.0, 3.0], (cube2.N, 1)))


def test_mu0_matches_definition():
    assert MU0 == pytest.approx(4e-7 * np.pi, rel=0)
