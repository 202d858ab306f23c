import json

import numpy as np
import pytest

from bfgrad import ContractError, linalg as la, scalar_ops as so, tensor_ops as to
from bfgrad.gradcheck import check, numeric_grad, relative_error
from bfgrad.graph import BACKWARD
from bfgrad.suites import pipeline_case, run_case

from conftest import crandn


def test_squared_modulus():
    g = numeric_grad(lambda z: abs(z) ** 2, 1 + 1j)
    np.testing.assert_allclose(g, 1 + 1j, atol=1e-9)


def test_constant_function():
    assert numeric_grad(lambda z: 3.0, np.ones(3)).tolist() == [0, 0, 0]


def test_real_of_cube():
    z = 0.5 + 0.5j
    x, y = z.real, z.imag
    expected = 0.5 * ((3 * x**2 - 3 * y**2) - 6j * x * y)
    np.testing.assert_allclose(numeric_grad(lambda v: (v**3).real, z), expected, atol=1e-9)


def test_real_mode_returns_real():
    g = numeric_grad(lambda v: float(np.sum(v.real**2)), np.array([1.0, -2.0]), mode="real")
    np.testing.assert_allclose(g, [1.0, -2.0], atol=1e-9)
    assert np.all(g.imag == 0)


def test_non_real_function_is_rejected():
    with pytest.raises(ContractError):
        numeric_grad(lambda z: z, 1 + 1j)
    with pytest.raises(ContractError):
        numeric_grad(lambda z: abs(z), 1.0, eps=0)
    with pytest.raises(ContractError):
        numeric_grad(lambda z: abs(z), 1.0, mode="bogus")


def test_relative_error_floor():
    assert relative_error(0.0, 0.0)[()] == 0
    assert relative_error(1.0, 1.5)[()] == pytest.approx(0.5 / 1.5)
    assert relative_error(0.0, 1e-13)[()] == pytest.approx(0.1)


def test_identity_pipeline_passes(rng):
    u = crandn(rng, 4)
    report = check(lambda z: to.inner_real(u, so.identity(z)), {"z": crandn(rng, 4)})
    assert report.passed and report.max_rel_error < 1e-8


def test_conjugated_rule_is_caught(rng, monkeypatch):
    original = BACKWARD["mul"]

    def wrong(g, node, inputs):
        return tuple(np.conj(x) for x in original(g, node, inputs))

    monkeypatch.setitem(BACKWARD, "mul", wrong)
    u = crandn(rng, 4)
    report = check(lambda a, b: to.inner_real(u, so.mul(a, so.mul(a, b))),
                   {"a": crandn(rng, 4), "b": crandn(rng, 4)})
    assert not report.passed


def test_step_halving_is_consistent(rng):
    u, z = crandn(rng, 3), crandn(rng, 3)

    def f(v):
        return float(np.real(np.sum(np.conj(u) * v / np.linalg.norm(v))))
    coarse, fine = numeric_grad(f, z, eps=1e-5), numeric_grad(f, z, eps=1e-6)
    assert np.max(relative_error(coarse, fine)) <= 1e-6


def test_hermitian_mode_is_symmetric(rng):
    m = crandn(rng, (3, 3))
    a = m @ m.conj().T + np.eye(3)
    u = crandn(rng, (3, 3))

    def f(v):
        return float(np.real(np.sum(np.conj(u) * np.linalg.cholesky(v))))
    g = numeric_grad(f, a, mode="hermitian")
    np.testing.assert_array_equal(g, g.conj().T)


def test_gev_pipeline_small_scene():
    report = run_case("gev", pipeline_case("gev", channels=2, bins=3, frames=5, seed=2),
                      eps=1e-6, tol=1e-5)
    assert report.passed, report.max_rel_error


def test_report_serializes(rng):
    u = crandn(rng, 2)
    report = check(lambda z: to.inner_real(u, la.normalize_vec(z)), {"z": crandn(rng, 2)},
                   name="normalize")
    data = json.loads(json.dumps(report.to_dict()))
    assert data["name"] == "normalize" and data["passed"]
    assert np.array(data["inputs"]["z"]["analytic"]).shape == (2, 2)
