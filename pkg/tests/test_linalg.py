import numpy as np
import pytest

from bfgrad import ContractError, DomainError, Tape, backward
from bfgrad import linalg as la, scalar_ops as so, tensor_ops as to
from bfgrad.gradcheck import check
from bfgrad.suites import eig_probe, run_op

from conftest import crandn

H = lambda a: np.conj(np.swapaxes(a, -1, -2))  # noqa: E731


def hermitian_pd(rng, d):
    m = crandn(rng, (d, d))
    return m @ H(m) + np.eye(d)


# -- normalize_vec -----------------------------------------------------------

def test_normalize_tangential_gradient_passes():
    z = np.array([1.0, 0, 0], dtype=complex)
    g = np.array([0, 1 + 2j, -1j])
    np.testing.assert_allclose(la.normalize_vec_bwd(g, z), g)


def test_normalize_radial_gradient_vanishes(rng):
    z = crandn(rng, 4)
    z /= np.linalg.norm(z)
    np.testing.assert_allclose(la.normalize_vec_bwd(z, z), 0, atol=1e-15)


def test_normalize_zero_vector():
    with pytest.raises(DomainError):
        la.normalize_vec(Tape().leaf(np.zeros(3)))


def test_normalize_projection_objective(rng):
    u = crandn(rng, 4)

    def pipeline(z):
        s = to.sum(so.mul(so.conj(z.tape.const(u)), la.normalize_vec(z)))
        return so.real(so.mul(s, so.conj(s)))
    assert check(pipeline, {"z": crandn(rng, 4)}).passed


# -- matmul, inverse, solves --------------------------------------------------

def test_matmul_identity_factor(rng):
    a, g = crandn(rng, (3, 3)), crandn(rng, (3, 3))
    ga, gb = la.matmul_bwd(g, a, np.eye(3))
    np.testing.assert_allclose(ga, g)
    np.testing.assert_allclose(gb, H(a) @ g)


def test_matmul_scalar_case_is_mul():
    a, b, g = np.array([[1 + 2j]]), np.array([[0.5 - 1j]]), np.array([[2 - 1j]])
    ga, gb = la.matmul_bwd(g, a, b)
    ma, mb = so.mul_bwd(g[0, 0], a[0, 0], b[0, 0])
    assert ga[0, 0] == pytest.approx(ma) and gb[0, 0] == pytest.approx(mb)


def test_matmul_shape_check():
    tape = Tape()
    with pytest.raises(ContractError):
        la.matmul(tape.leaf(np.ones((2, 3))), tape.leaf(np.ones((2, 3))))


def test_inv_examples(rng):
    g = crandn(rng, (3, 3))
    np.testing.assert_allclose(la.inv_bwd(g, np.eye(3)), -g)
    assert la.inv_bwd(np.array([[1.0]]), np.array([[0.5]]))[0, 0] == pytest.approx(-0.25)
    assert so.pow_bwd(1.0, 2.0, -1) == pytest.approx(-0.25)


def test_inv_rejects_singular():
    with pytest.raises(DomainError, match="condition"):
        la.inv(Tape().leaf(np.ones((2, 2))))


def test_solve_left_identity(rng):
    g, c = crandn(rng, (3, 3)), crandn(rng, (3, 3))
    ga, gb = la.solve_left_bwd(g, np.eye(3), c)
    np.testing.assert_allclose(gb, g)
    np.testing.assert_allclose(ga, -g @ H(c))


def test_solve_left_matches_inverse_composition(rng):
    a = crandn(rng, (3, 3)) + 3 * np.eye(3)
    u = crandn(rng, (3, 3))
    t1, t2 = Tape(), Tape()
    a1, b1 = t1.leaf(a), t1.leaf(a)
    g1 = backward(to.inner_real(u, la.solve_left(a1, b1)))
    a2, b2 = t2.leaf(a), t2.leaf(a)
    g2 = backward(to.inner_real(u, la.matmul(la.inv(a2), b2)))
    np.testing.assert_allclose(g1[a1], g2[a2], atol=1e-12)
    np.testing.assert_allclose(g1[b1], g2[b2], atol=1e-12)


def test_solve_right_identity(rng):
    g, c = crandn(rng, (3, 3)), crandn(rng, (3, 3))
    ga, gb = la.solve_right_bwd(g, np.eye(3), c)
    np.testing.assert_allclose(ga, g)
    np.testing.assert_allclose(gb, -H(c) @ g)


def test_solve_right_scalar_case_is_div():
    a, b, g = np.array([[1 + 2j]]), np.array([[0.5 - 1j]]), np.array([[2 - 1j]])
    ga, gb = la.solve_right_bwd(g, b, a / b)
    da, db = so.div_bwd(g[0, 0], a[0, 0], b[0, 0])
    assert ga[0, 0] == pytest.approx(da) and gb[0, 0] == pytest.approx(db)


def test_solve_rejects_singular():
    tape = Tape()
    with pytest.raises(DomainError):
        la.solve_left(tape.leaf(np.zeros((2, 2))), tape.leaf(np.eye(2)))
    with pytest.raises(DomainError):
        la.solve_right(tape.leaf(np.eye(2)), tape.leaf(np.zeros((2, 2))))


# -- Cholesky ----------------------------------------------------------------

def test_cholesky_identity():
    np.testing.assert_allclose(la.cholesky_bwd(np.eye(3), np.eye(3)), 0.5 * np.eye(3))
    raw = la.cholesky_bwd(np.eye(3), np.eye(3), symmetrize=False)
    np.testing.assert_allclose(raw, 0.5 * np.eye(3))


def test_cholesky_scalar():
    tape = Tape()
    low = la.cholesky(tape.leaf([[4.0]]))
    assert low.value[0, 0] == 2
    assert la.cholesky_bwd(np.array([[1.0]]), low.value)[0, 0] == pytest.approx(0.25)


def test_cholesky_gradient_is_hermitian(rng):
    low = np.linalg.cholesky(hermitian_pd(rng, 4))
    g = la.cholesky_bwd(crandn(rng, (4, 4)), low)
    np.testing.assert_allclose(g, H(g), rtol=0, atol=1e-14)


def test_cholesky_frobenius_objective(rng):
    # sum |L_ij|^2 = trace(A); its gradient is diagonal, so off-diagonal
    # entries are compared with an absolute floor
    a = hermitian_pd(rng, 3)

    def pipeline(a):
        low = la.cholesky(a)
        return so.real(to.sum(so.mul(low, so.conj(low))))
    report = check(pipeline, {"a": a}, modes={"a": "hermitian"}, floor=1e-3)
    assert report.passed, report.max_rel_error
    np.testing.assert_allclose(report.analytic["a"], 0.5 * np.eye(3), atol=1e-12)


def test_cholesky_random_probe(rng):
    u = crandn(rng, (3, 3))
    report = check(lambda a: to.inner_real(u, la.cholesky(a)), {"a": hermitian_pd(rng, 3)},
                   modes={"a": "hermitian"})
    assert report.passed


def test_cholesky_preconditions(rng):
    tape = Tape()
    with pytest.raises(ContractError):
        la.cholesky(tape.leaf(crandn(rng, (3, 3))))
    with pytest.raises(DomainError):
        la.cholesky(tape.leaf(-np.eye(2)))


# -- eigendecomposition ------------------------------------------------------

def test_eig_forward_invariants(rng):
    phi = crandn(rng, (4, 4))
    w, lam = la.eig(Tape().leaf(phi))
    w, lam = w.value, lam.value
    np.testing.assert_allclose(phi @ w, w * lam, atol=1e-10 * np.linalg.norm(phi))
    np.testing.assert_allclose(np.linalg.norm(w, axis=0), 1)
    assert np.all(np.diff(lam.real) <= 0)


def test_eig_gap_matrix(rng):
    lam = crandn(rng, 4)
    e, f = la.eig_gaps(lam)
    np.testing.assert_allclose(e, -e.T)
    assert np.all(np.diag(f) == 0)
    off = ~np.eye(4, dtype=bool)
    np.testing.assert_allclose(f[off] * e[off], 1)


def test_eig_rejects_repeated_eigenvalues():
    with pytest.raises(DomainError, match="gap"):
        la.eig(Tape().leaf(np.eye(3)))


def test_extension_term_vanishes_for_hermitian(rng):
    phi = hermitian_pd(rng, 4)
    w, lam = la.eig(Tape().leaf(phi), hermitian=True)
    term = la.eig_extension_term(crandn(rng, (4, 4)), w.value, lam.value)
    assert np.linalg.norm(term) < 1e-12


def test_eigenvalue_sensitivity(rng):
    phi = crandn(rng, (3, 3))
    w, lam = la.eig(Tape().leaf(phi))
    w = w.value
    for k in range(3):
        g_lam = np.eye(3)[k]
        expected = np.linalg.inv(H(w)) @ np.diag(g_lam) @ H(w)
        np.testing.assert_allclose(la.eig_bwd(None, g_lam, w, lam.value), expected, atol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_extension_needed_for_non_hermitian(seed):
    rng = np.random.default_rng(seed)
    a = crandn(rng, (3, 3))
    with_ext = check(eig_probe(np.random.default_rng(seed), 3, True), {"a": a})
    without = check(eig_probe(np.random.default_rng(seed), 3, False), {"a": a})
    assert with_ext.max_rel_error <= 1e-4
    assert without.max_rel_error > 1e-2


def test_hermitian_specialization(rng):
    phi = hermitian_pd(rng, 4)
    w, lam = la.eig(Tape().leaf(phi), hermitian=True)
    g_w, g_l = crandn(rng, (4, 4)), crandn(rng, 4)
    full = la.eig_bwd(g_w, g_l, w.value, lam.value)
    plain = la.eig_bwd(g_w, g_l, w.value, lam.value, extension=False)
    np.testing.assert_allclose(full, plain, atol=1e-10 * np.linalg.norm(full))


@pytest.mark.parametrize("d", [3, 4])
def test_eig_reconstruction_returns_upstream_gradient(rng, d):
    phi = crandn(rng, (d, d))
    u = crandn(rng, (d, d))
    tape = Tape()
    leaf = tape.leaf(phi)
    w, lam = la.eig(leaf)
    scaled = so.mul(w, to.broadcast_to(to.reshape(lam, (1, d)), (d, d)))
    rebuilt = la.matmul(scaled, la.inv(w))
    np.testing.assert_allclose(rebuilt.value, phi, atol=1e-10)
    g = backward(to.inner_real(u, rebuilt))
    np.testing.assert_allclose(g[leaf], g[rebuilt], rtol=1e-8, atol=1e-8 * np.abs(g[rebuilt]).max())


# -- phase normalization -----------------------------------------------------

def test_phase_normalize_examples():
    tape = Tape()
    np.testing.assert_allclose(la.phase_normalize(tape.leaf([1j, 1])).value, [1, -1j])
    v = np.array([2.0, 1 - 1j])
    np.testing.assert_allclose(la.phase_normalize(tape.leaf(v)).value, v)
    with pytest.raises(DomainError):
        la.phase_normalize(tape.leaf([0, 1]))


def test_phase_normalize_gradient(rng):
    u = crandn(rng, 3)
    assert check(lambda w: to.inner_real(u, la.phase_normalize(w)), {"w": crandn(rng, 3)}).passed


# -- identities ------------------------------------------------------------------

def test_matrix_product_rule_first_order(rng):
    a, b, da, db = (crandn(rng, (3, 3)) for _ in range(4))
    for t in (1e-2, 1e-3, 1e-4):
        residual = (a + t * da) @ (b + t * db) - a @ b - t * (da @ b + a @ db)
        np.testing.assert_allclose(residual, t**2 * da @ db, atol=1e-12)


def test_commutator_with_diagonal(rng):
    c, lam = crandn(rng, (4, 4)), crandn(rng, 4)
    e, _ = la.eig_gaps(lam)
    np.testing.assert_allclose(c @ np.diag(lam) - np.diag(lam) @ c, e * c, atol=1e-14)


@pytest.mark.parametrize("name", ["normalize_vec", "matmul", "inv", "solve_left",
                                  "solve_right", "cholesky", "eig"])
def test_oracle_equivalence(name):
    worst, failures = run_op(name, draws=30, eps=1e-6, tol=1e-5, seed=11)
    assert failures == 0, worst.max_rel_error


def test_batched_inputs(rng):
    phi = np.stack([hermitian_pd(rng, 2) for _ in range(3)])
    u = crandn(rng, (3, 2, 2))
    report = check(lambda a: to.inner_real(u, la.cholesky(a)), {"a": phi},
                   modes={"a": "hermitian"})
    assert report.passed


def test_principal_only_tolerates_repeated_minor_eigenvalues(rng):
    v = crandn(rng, 3)
    u = crandn(rng, 3)
    tape = Tape()
    leaf = tape.leaf(np.outer(v, v.conj()))
    w, _ = la.eig(leaf, hermitian=True, principal_only=True)
    first = to.select_column(w, np.array(0))
    g = backward(to.inner_real(u, la.phase_normalize(first)))
    assert np.all(np.isfinite(g[leaf]))
    with pytest.raises(DomainError):
        backward(to.inner_real(crandn(rng, (3, 3)), w))


def test_principal_only_still_needs_a_principal_gap():
    with pytest.raises(DomainError, match="principal"):
        la.eig(Tape().leaf(np.eye(3)), principal_only=True)
