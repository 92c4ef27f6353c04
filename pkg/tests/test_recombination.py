import numpy as np
import pytest

from liefloquet import LieAlgebraSpec, alpha_flow, kapitza, optical_lattice, paul_trap, recombine
from liefloquet import recombination as rc
from liefloquet.lie_core import m_a
from liefloquet.models import ReductionStep
from liefloquet.recombination import (RecombinationError, beta_by_eigenbasis, beta_by_shooting,
                                      effective_hamiltonian, lambda_flow, reduce_quadratic_form,
                                      unit_eigenvectors)


def test_lambda_flow_abelian_is_identity():
    beta = np.array([0.3, -1.2, 2.5])
    np.testing.assert_array_equal(lambda_flow(LieAlgebraSpec(3), beta), beta)


def test_lambda_flow_of_zero(presets):
    for p in presets.values():
        np.testing.assert_array_equal(lambda_flow(p.algebra, np.zeros(p.algebra.n)),
                                      np.zeros(p.algebra.n))


def test_lambda_flow_batches_consistently(presets):
    spec = presets["paul-trap"].algebra
    betas = np.array([[0.1, 0.2, 0.3], [-0.4, 0.1, 0.5]])
    batch = lambda_flow(spec, betas)
    for b, a in zip(betas, batch):
        np.testing.assert_allclose(lambda_flow(spec, b), a, atol=1e-11)


@pytest.mark.parametrize("name", ["paul-trap", "optical-lattice", "kapitza"])
def test_roundtrip(runs, name):
    p, traj, res = runs[name]
    alpha1 = lambda_flow(p.algebra, res.beta)
    assert np.max(np.abs(alpha1 - traj.alpha_T)) <= 1e-9
    assert res.lambda_residual <= 1e-9
    assert res.method == "eigenbasis"
    assert any("continuation used" in d for d in res.diagnostics)


@pytest.mark.parametrize("name", ["paul-trap", "optical-lattice", "kapitza"])
def test_fixed_point_invariant(runs, name):
    p, traj, res = runs[name]
    Ma = m_a(p.algebra, traj.alpha_T)
    scale = 1 + np.max(np.abs(res.beta))
    assert np.max(np.abs(Ma.T @ res.beta - res.beta)) <= 1e-8 * scale
    assert res.eigen_residual <= 1e-8 * scale
    # beta lies in the eigenvalue-1 eigenspace it was searched in
    np.testing.assert_allclose(res.eigenvectors @ res.gamma, res.beta, atol=1e-9)


@pytest.mark.parametrize("name", ["paul-trap", "optical-lattice", "kapitza"])
def test_shooting_agrees_with_eigenbasis(runs, name):
    p, traj, res = runs[name]
    shot = recombine(traj, method="shooting")
    assert shot.method == "shooting" and shot.gamma is None
    assert np.max(np.abs(shot.beta - res.beta)) <= 1e-8


def test_paul_eigenvector_closed_form():
    p = paul_trap(omega0=4.0, omega1=1.5)
    traj = alpha_flow(p.algebra, p.drive, T=0.37 * p.T)
    a1, a2, a3 = traj.alpha_T
    eig = unit_eigenvectors(p.algebra, traj.alpha_T)
    assert len(eig) == 1
    expected = [a1 / a3, (4 * a1 * a3 - np.exp(-4 * a2) + 1) / (4 * a3), 1.0]
    np.testing.assert_allclose(eig.vectors[:, 0], expected, rtol=1e-9)
    assert abs(eig.nearest - 1) < 1e-12


@pytest.mark.parametrize("name", ["paul-trap", "optical-lattice", "kapitza"])
def test_eigenspace_at_identity_is_everything(presets, name):
    n = presets[name].algebra.n
    eig = unit_eigenvectors(presets[name].algebra, np.zeros(n))
    assert len(eig) == n
    np.testing.assert_array_equal(eig.vectors, np.eye(n))


def test_kapitza_eigenspace_contains_center(runs):
    p, traj, _ = runs["kapitza"]
    eig = unit_eigenvectors(p.algebra, traj.alpha_T)
    assert len(eig) == 2
    np.testing.assert_array_equal(eig.vectors[:, 0], [1.0, 0.0, 0.0, 0.0])
    assert eig.vectors[-1, 1] == 1.0


def test_no_unit_eigenvalue_is_reported():
    # M_a^T of a pure rotation about K has eigenvalue 1 only along K
    spec = LieAlgebraSpec(3, ((1, 2, 3, 1.0), (2, 3, 1, 1.0), (3, 1, 2, 1.0)))
    eig = unit_eigenvectors(spec, np.array([0.7, 0.0, 0.0]))
    assert len(eig) == 1


def test_eigenspace_insufficient(monkeypatch, runs):
    p, traj, _ = runs["paul-trap"]
    wrong = rc.EigenspaceResult(np.array([[0.0], [0.0], [1.0]]), 1.0)
    monkeypatch.setattr(rc, "unit_eigenvectors", lambda spec, alpha, tol=1e-8: wrong)
    with pytest.raises(RecombinationError, match="eigenspace insufficient") as info:
        beta_by_eigenbasis(p.algebra, traj.alpha_T)
    assert info.value.best_residual > 1e-8


def test_empty_eigenspace_falls_back_to_shooting(monkeypatch, runs):
    p, traj, res = runs["paul-trap"]
    empty = rc.EigenspaceResult(np.zeros((3, 0)), 0.5)
    monkeypatch.setattr(rc, "unit_eigenvectors", lambda spec, alpha, tol=1e-8: empty)
    with pytest.raises(RecombinationError, match="no eigenvalue 1"):
        beta_by_eigenbasis(p.algebra, traj.alpha_T)
    out = recombine(traj)
    assert out.method == "shooting"
    assert any("used shooting" in d for d in out.diagnostics)
    np.testing.assert_allclose(out.beta, res.beta, atol=1e-8)


def test_direct_shooting_small_target(presets):
    spec = presets["paul-trap"].algebra
    beta = np.array([0.05, -0.02, 0.08])
    target = lambda_flow(spec, beta)
    out = beta_by_shooting(spec, target)
    np.testing.assert_allclose(out.beta, beta, atol=1e-11)


def test_recombine_argument_checks(runs):
    traj = runs["paul-trap"][1]
    with pytest.raises(ValueError):
        recombine(traj, method="magic")
    with pytest.raises(ValueError):
        recombine(traj, checkpoints=0)
    with pytest.raises(ValueError):
        beta_by_shooting(traj.spec, [np.nan, 0, 0])


def test_checkpoint_count_does_not_change_result(runs):
    _, traj, res = runs["kapitza"]
    for k in (1, 9):
        np.testing.assert_allclose(recombine(traj, checkpoints=k).beta, res.beta, atol=1e-10)


def test_effective_hamiltonian(runs):
    p, traj, res = runs["optical-lattice"]
    he = effective_hamiltonian(res, traj.T)
    assert list(he) == list(p.algebra.labels)
    np.testing.assert_allclose(list(he.values()), res.beta / traj.T)


def test_kapitza_reduction(runs):
    p, traj, res = runs["kapitza"]
    reduced, applied = reduce_quadratic_form(p.algebra, res.beta / traj.T, p.reduction)
    assert [g for g, _ in applied] == [2, 3]
    np.testing.assert_allclose(reduced[1:3], 0.0, atol=1e-10)
    assert abs(reduced[0] - 1 / 396) <= 1e-9


def test_reduction_zero_denominator(presets):
    spec = presets["kapitza"].algebra
    with pytest.raises(ZeroDivisionError, match="nonzero coefficient"):
        reduce_quadratic_form(spec, np.array([1.0, 0.5, 0.0, 0.0]),
                              (ReductionStep(2, 3, 4, 0.5),))


def test_empty_recipe_is_identity(presets):
    c = np.array([0.1, 0.2, 0.3, 0.4])
    out, applied = reduce_quadratic_form(presets["kapitza"].algebra, c, ())
    np.testing.assert_array_equal(out, c)
    assert applied == []


def test_eigenbasis_root_is_refined_past_eigenvector_rounding():
    # here the reduced solve alone stalls near 9e-11; the full-space step removes the floor
    p = kapitza(m=1.8458207014543633, omega0=1.4376431999070005, omega=23.270636983105895,
                F=0.8378107849858878)
    res = recombine(alpha_flow(p.algebra, p.drive))
    assert res.lambda_residual <= 1e-12
    assert any("refined in the full space" in d for d in res.diagnostics)
    reduced, _ = reduce_quadratic_form(p.algebra, res.beta / p.T, p.reduction)
    assert abs(reduced[0] / p.references["constant_shift"] - 1) <= 1e-9
