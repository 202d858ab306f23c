"""Randomized gradient-check cases for every op and for whole pipelines.

Each case draws inputs from a seeded generator and probes the op with
``J = Re sum(conj(u) * op(z))`` for a random ``u``, which exercises the
backward rule with an arbitrary upstream gradient.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import beamform as bf
from . import fourier as fo
from . import linalg as la
from . import scalar_ops as so
from . import tensor_ops as to
from .gradcheck import CheckReport, check
from .graph import BACKWARD
from .scene import synth_scene

#: eigenvalue gaps below this fraction of max|lambda| count as near-degenerate
NEAR_DEGENERATE = 0.05


@dataclass
class Case:
    pipeline: Callable
    inputs: dict
    modes: dict
    tol_factor: float = 1.0


def crandn(rng, shape=()):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def annulus(rng, shape=(), lo=0.1, hi=10.0):
    """Complex samples with modulus log-uniform in ``[lo, hi]``."""
    r = np.exp(rng.uniform(np.log(lo), np.log(hi), shape))
    return r * np.exp(1j * rng.uniform(-np.pi, np.pi, shape))


def _probe(rng, shape):
    u = crandn(rng, shape)
    return lambda s: to.inner_real(u, s)


def _unary(op, shape=(4,)):
    def make(rng):
        probe = _probe(rng, shape)
        return Case(lambda z: probe(op(z)), {"z": annulus(rng, shape)}, {})
    return make


def _binary(op, shape=(4,)):
    def make(rng):
        probe = _probe(rng, shape)
        return Case(lambda a, b: probe(op(a, b)),
                    {"a": annulus(rng, shape), "b": annulus(rng, shape)}, {})
    return make


def _pow(rng):
    n = int(rng.choice([-2, -1, 2, 3]))
    probe = _probe(rng, (4,))
    return Case(lambda z: probe(so.power(z, n)), {"z": annulus(rng, (4,))}, {})


def _dim(rng):
    return int(rng.integers(2, 5))


def _well_conditioned(rng, d):
    return crandn(rng, (d, d)) + 2 * d ** 0.5 * np.eye(d)


def _fourier(op, real_in=False):
    def make(rng):
        n = int(rng.choice([2, 4, 8, 16]))
        if op is fo.irdft:
            z = crandn(rng, (n // 2 + 1,))
            out = n
        else:
            z = rng.standard_normal(n) if real_in else crandn(rng, (n,))
            out = n // 2 + 1 if op is fo.rdft else n
        probe = _probe(rng, (out,))
        return Case(lambda z: probe(op(z)), {"z": z}, {"z": "real"} if real_in else {})
    return make


def _normalize(rng):
    d = _dim(rng)
    probe = _probe(rng, (d,))
    return Case(lambda z: probe(la.normalize_vec(z)), {"z": crandn(rng, (d,))}, {})


def _matmul(rng):
    d = _dim(rng)
    probe = _probe(rng, (d, d))
    return Case(lambda a, b: probe(la.matmul(a, b)),
                {"a": crandn(rng, (d, d)), "b": crandn(rng, (d, d))}, {})


def _inv(rng):
    d = _dim(rng)
    probe = _probe(rng, (d, d))
    return Case(lambda a: probe(la.inv(a)), {"a": _well_conditioned(rng, d)}, {})


def _solve(op):
    def make(rng):
        d = _dim(rng)
        probe = _probe(rng, (d, d))
        return Case(lambda a, b: probe(op(a, b)),
                    {"a": _well_conditioned(rng, d) if op is la.solve_left else crandn(rng, (d, d)),
                     "b": crandn(rng, (d, d)) if op is la.solve_left else _well_conditioned(rng, d)},
                    {})
    return make


def _cholesky(rng):
    d = _dim(rng)
    m = crandn(rng, (d, d))
    probe = _probe(rng, (d, d))
    return Case(lambda a: probe(la.cholesky(a)), {"a": m @ m.conj().T + np.eye(d)},
                {"a": "hermitian"})


def eig_probe(rng, d, extension=True):
    """Probe of eigenvalues and phase-normalized eigenvectors of a general matrix."""
    u_w, u_l = crandn(rng, (d, d)), crandn(rng, (d,))

    def pipeline(a):
        w, lam = la.eig(a, extension=extension)
        rows = la.phase_normalize(to.swapaxes(w, -1, -2))
        return to.inner_real(u_w, rows) + to.inner_real(u_l, lam)
    return pipeline


def _eig(rng):
    d = _dim(rng)
    a = crandn(rng, (d, d))
    lam = np.linalg.eigvals(a)
    gap = np.min(np.where(np.eye(d, dtype=bool), np.inf, np.abs(lam[:, None] - lam[None, :])))
    factor = 10.0 if gap < NEAR_DEGENERATE * np.max(np.abs(lam)) else 1.0
    return Case(eig_probe(rng, d), {"a": a}, {}, factor)


OP_CASES: dict[str, Callable[[np.random.Generator], Case]] = {
    "identity": _unary(so.identity),
    "conj": _unary(so.conj),
    "neg": _unary(so.neg),
    "add": _binary(so.add),
    "mul": _binary(so.mul),
    "pow": _pow,
    "div": _binary(so.div),
    "abs": _unary(so.absolute),
    "phase_factor": _unary(so.phase_factor),
    "re": _unary(so.real),
    "im": _unary(so.imag),
    "dft": _fourier(fo.dft),
    "idft": _fourier(fo.idft),
    "rdft": _fourier(fo.rdft, real_in=True),
    "irdft": _fourier(fo.irdft),
    "normalize_vec": _normalize,
    "matmul": _matmul,
    "inv": _inv,
    "solve_left": _solve(la.solve_left),
    "solve_right": _solve(la.solve_right),
    "cholesky": _cholesky,
    "eig": _eig,
}


def pipeline_case(kind: str, channels=2, bins=2, frames=8, seed=0) -> Case:
    """Negative output SNR of beamformer ``kind`` as a function of both masks."""
    scene = synth_scene(channels, bins, frames, 0.0, seed)

    def pipeline(mask_x, mask_n):
        w = bf.beamformer_weights(kind, scene.Y, mask_x, mask_n)
        return bf.snr_objective(w, scene.X, scene.N)
    return Case(pipeline, {"mask_x": scene.M_X, "mask_n": scene.M_N},
                {"mask_x": "real", "mask_n": "real"})


PIPELINE_CASES = {f"pipeline:{k}": k for k in bf.BEAMFORMERS}


def run_case(name: str, case: Case, eps: float, tol: float) -> CheckReport:
    return check(case.pipeline, case.inputs, eps=eps, tol=tol * case.tol_factor,
                 modes=case.modes, name=name)


def run_op(name: str, draws: int, eps: float, tol: float, seed: int = 0):
    """All draws of one op; returns the worst report and the number of failures."""
    rng = np.random.default_rng([seed, sorted(OP_CASES).index(name)])
    worst, failures = None, 0

    def badness(r):
        return r.max_rel_error / max(r.tol, 1e-300)

    for _ in range(draws):
        report = run_case(name, OP_CASES[name](rng), eps, tol)
        failures += not report.passed
        if worst is None or badness(report) > badness(worst):
            worst = report
    return worst, failures


def run_suite(draws: int = 5, eps: float = 1e-6, tol: float = 1e-5, seed: int = 0,
              pipelines: bool = True) -> dict[str, tuple[CheckReport, int]]:
    results = {name: run_op(name, draws, eps, tol, seed) for name in OP_CASES}
    if pipelines:
        for name, kind in PIPELINE_CASES.items():
            report = run_case(name, pipeline_case(kind, seed=seed), eps, tol)
            results[name] = (report, int(not report.passed))
    return results


@contextlib.contextmanager
def sign_flip(op: str = "matmul"):
    """Temporarily negate the backward rule of ``op`` (a canary for the checker)."""
    original = BACKWARD[op]

    def flipped(g, node, inputs):
        return tuple(None if x is None else -x for x in original(g, node, inputs))

    BACKWARD[op] = flipped
    try:
        yield
    finally:
        BACKWARD[op] = original
