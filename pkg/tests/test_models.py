import math

import numpy as np
import pytest

from conftest import bessel_j0_series
from liefloquet import alpha_flow, kapitza, optical_lattice, paul_trap, recombine
from liefloquet.lie_core import commutator_residual, validate_algebra
from liefloquet.models import build_preset, mathieu_reference, paul_trap_observables


def test_bessel_series_sanity():
    assert bessel_j0_series(0.0) == 1.0
    # first zero of J0
    assert abs(bessel_j0_series(2.404825557695773)) < 1e-14


@pytest.mark.parametrize("name", ["paul-trap", "optical-lattice", "kapitza"])
def test_every_rep_satisfies_commutators(presets, name):
    p = presets[name]
    assert validate_algebra(p.algebra).ok
    for label, rep in p.reps.items():
        assert np.max(np.abs(commutator_residual(p.algebra.structure_tensor, rep))) < 1e-12, label


@pytest.mark.parametrize("kappa", [0.5, 1.0, 2.404825557695773, 3.0])
def test_lattice_hopping_is_bessel_j0(kappa):
    p = optical_lattice(kappa=kappa)
    res = recombine(alpha_flow(p.algebra, p.drive))
    he = res.beta / p.T
    assert abs(he[2] - bessel_j0_series(kappa)) <= 1e-8
    assert np.max(np.abs(he[:2])) <= 1e-8


def test_lattice_without_drive_is_bare_hopping():
    p = optical_lattice(kappa=0.0)
    res = recombine(alpha_flow(p.algebra, p.drive))
    np.testing.assert_allclose(res.beta / p.T, [0, 0, 1], atol=1e-12)


def test_mathieu_free_oscillator():
    # a = 1/4, q = 0: y = cos(v/2), trace = 2 cos(pi/2) = 0
    ref = mathieu_reference(0.25, 0.0)
    assert abs(ref.trace) < 1e-10
    assert abs(ref.exponent - 0.5) < 1e-10
    np.testing.assert_allclose(ref.even, np.cos(ref.v / 2), atol=1e-10)
    np.testing.assert_allclose(ref.odd, 2 * np.sin(ref.v / 2), atol=1e-10)
    np.testing.assert_allclose(ref.even_derivative(ref.v), -0.5 * np.sin(ref.v / 2), atol=1e-10)


@pytest.mark.parametrize("a,q,stable", [(0.0, 0.3, True), (1.0, 0.5, False), (0.3, 0.9, False),
                                        (2.0, 0.2, True)])
def test_mathieu_stability(a, q, stable):
    ref = mathieu_reference(a, q)
    assert abs(np.linalg.det(ref.monodromy) - 1) < 1e-10
    assert ref.stable is stable
    if stable:
        assert abs(math.cos(math.pi * ref.exponent.real) - ref.trace / 2) < 1e-12
    else:
        assert abs(ref.exponent.imag) > 0


@pytest.mark.parametrize("ratio", [0.1, 0.3, 0.5])
def test_paul_observables_match_mathieu(ratio):
    p = paul_trap(omega0=10 * ratio)
    res = recombine(alpha_flow(p.algebra, p.drive))
    obs = paul_trap_observables(res.beta, p)
    ref = mathieu_reference(p.references["mathieu_a"], p.references["mathieu_q"])
    assert obs.stability == "stable" and ref.stable
    assert abs(obs.Omega_over_omega - ref.exponent.real / 2) <= 1e-9
    assert obs.approx_Omega_over_omega == pytest.approx(ratio**2 / math.sqrt(2))
    assert obs.approx_M_over_m == 1.0


def test_paul_small_drive_close_to_approximations():
    p = paul_trap(omega0=0.5)
    obs = paul_trap_observables(recombine(alpha_flow(p.algebra, p.drive)).beta, p)
    assert abs(obs.Omega_over_omega / obs.approx_Omega_over_omega - 1) < 0.05
    assert abs(obs.M_over_m - 1) < 0.05


def test_paul_observables_unstable_discriminant():
    p = paul_trap()
    obs = paul_trap_observables(np.array([-1.0, 0.5, 1.0]), p)
    assert obs.stability == "unstable" and math.isnan(obs.Omega_over_omega)
    assert obs.discriminant == -1.25
    assert obs.M_over_m == pytest.approx(math.pi / 10)


def test_paul_trap_mathieu_parameters():
    p = paul_trap(omega0=2.0, omega1=3.0, omega=10.0)
    assert p.references["mathieu_a"] == pytest.approx(0.36)
    assert p.references["mathieu_q"] == pytest.approx(-0.08)
    np.testing.assert_allclose(p.drive(0.0), [0.5 * 9 + 0.5 * 4, 0, 0.5])


def test_kapitza_constant_shift_closed_form(runs):
    p, traj, res = runs["kapitza"]
    assert p.references["constant_shift"] == pytest.approx(1 / 396, rel=1e-15)
    np.testing.assert_allclose(p.references["reduced_he"], [1 / 396, 0, 0, 0.5])


def test_kapitza_resonance_warns():
    with pytest.warns(RuntimeWarning, match="resonant"):
        p = kapitza(omega=1.0, omega0=1.0)
    assert math.isnan(p.references["constant_shift"])


@pytest.mark.parametrize("factory,kwargs", [
    (paul_trap, dict(m=0.0)), (paul_trap, dict(omega0=-1.0)), (optical_lattice, dict(J=0.0)),
    (kapitza, dict(omega0=0.0)), (kapitza, dict(omega=-2.0)),
])
def test_invalid_parameters(factory, kwargs):
    with pytest.raises(ValueError):
        factory(**kwargs)


def test_build_preset():
    p = build_preset("optical-lattice", {"kappa": "1.5"})
    assert p.params["kappa"] == 1.5 and p.name == "optical-lattice"
    with pytest.raises(ValueError, match="unknown model"):
        build_preset("pendulum")
    with pytest.raises(ValueError, match="unknown parameters"):
        build_preset("kapitza", {"kappa": 1.0})


def test_paul_effective_mass_departs_from_approximation():
    p = paul_trap(omega0=5.0)
    obs = paul_trap_observables(recombine(alpha_flow(p.algebra, p.drive)).beta, p)
    assert abs(obs.M_over_m - 1) > 0.02


@pytest.mark.parametrize("ratio", [0.2, 0.45])
def test_paul_frequency_from_reduced_form(ratio):
    from liefloquet.recombination import reduce_quadratic_form
    p = paul_trap(omega0=10 * ratio)
    beta = recombine(alpha_flow(p.algebra, p.drive)).beta
    reduced, _ = reduce_quadratic_form(p.algebra, beta, p.reduction)
    assert abs(reduced[1]) < 1e-14 * np.max(np.abs(beta))
    # with the cross term removed the discriminant is the product of the diagonal terms
    raw = paul_trap_observables(beta, p).Omega_over_omega
    assert abs(math.sqrt(reduced[0] * reduced[2]) / math.pi - raw) <= 1e-13
