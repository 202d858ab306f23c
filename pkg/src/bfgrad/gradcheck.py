"""Central-difference gradient oracle.

The oracle perturbs real and imaginary parts of every input element and
assembles ``dJ/dz* = (dJ/dx + j dJ/dy) / 2``.  It only ever runs forward
passes, so it stays independent of the backward rules it checks.

Three perturbation modes exist:

``"complex"``   perturb real and imaginary part of each element.
``"real"``      perturb the real part only; the result is real.
``"hermitian"`` perturb entries ``(i, j)`` and ``(j, i)`` of the trailing
                square matrices jointly so the input stays hermitian.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ContractError
from .graph import REALNESS_TOL, Tape, Var, backward

DEFAULT_EPS = 1e-6
DEFAULT_TOL = 1e-5
REL_FLOOR = 1e-12
MODES = ("complex", "real", "hermitian")


def _real_scalar(value) -> float:
    if isinstance(value, Var):
        value = value.value
    v = complex(np.asarray(value).reshape(()))
    if abs(v.imag) > REALNESS_TOL * max(1.0, abs(v.real)):
        raise ContractError(f"function must return a real scalar, got {v}")
    return v.real


def numeric_grad(f: Callable[[np.ndarray], float], z, eps: float = DEFAULT_EPS,
                 mode: str = "complex") -> np.ndarray:
    """Finite-difference estimate of ``dJ/dz*`` for ``J = f(z)``."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    if mode not in MODES:
        raise ContractError(f"unknown mode {mode!r}")
    z = np.array(z, dtype=np.complex128)
    grad = np.zeros_like(z)

    def central(direction) -> float:
        return (_real_scalar(f(z + eps * direction))
                - _real_scalar(f(z - eps * direction))) / (2 * eps)

    if mode == "hermitian":
        if z.ndim < 2 or z.shape[-1] != z.shape[-2]:
            raise ContractError("hermitian mode needs square matrices")
        d = z.shape[-1]
        for batch in itertools.product(*(range(n) for n in z.shape[:-2])):
            for i in range(d):
                for j in range(i, d):
                    e = np.zeros_like(z)
                    if i == j:
                        e[batch + (i, i)] = 1
                        grad[batch + (i, i)] = central(e) / 2
                        continue
                    e[batch + (i, j)] = 1
                    e[batch + (j, i)] = 1
                    dx = central(e)
                    e[batch + (i, j)] = 1j
                    e[batch + (j, i)] = -1j
                    dy = central(e)
                    grad[batch + (i, j)] = (dx + 1j * dy) / 4
                    grad[batch + (j, i)] = (dx - 1j * dy) / 4
        return grad

    for idx in np.ndindex(z.shape):
        e = np.zeros_like(z)
        e[idx] = 1
        dx = central(e)
        if mode == "real":
            grad[idx] = dx / 2
        else:
            e[idx] = 1j
            grad[idx] = (dx + 1j * central(e)) / 2
    return grad


def relative_error(analytic, numeric, floor: float = REL_FLOOR) -> np.ndarray:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


@dataclass
class CheckReport:
    name: str
    analytic: dict[str, np.ndarray]
    numeric: dict[str, np.ndarray]
    tol: float
    floor: float = REL_FLOOR
    abs_error: dict[str, np.ndarray] = field(init=False)
    rel_error: dict[str, np.ndarray] = field(init=False)

    def __post_init__(self):
        self.abs_error = {k: np.abs(self.analytic[k] - self.numeric[k]) for k in self.analytic}
        self.rel_error = {k: relative_error(self.analytic[k], self.numeric[k], self.floor)
                          for k in self.analytic}

    @property
    def max_rel_error(self) -> float:
        return max((float(np.max(e)) if e.size else 0.0) for e in self.rel_error.values())

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def to_dict(self, elements: bool = True) -> dict:
        out = {"name": self.name, "tol": self.tol, "floor": self.floor,
               "max_rel_error": self.max_rel_error, "passed": self.passed}
        if elements:
            pairs = lambda a: np.stack([a.real, a.imag], axis=-1).tolist()  # noqa: E731
            out["inputs"] = {
                k: {"shape": list(self.analytic[k].shape),
                    "analytic": pairs(self.analytic[k]),
                    "numeric": pairs(self.numeric[k]),
                    "abs_error": self.abs_error[k].tolist(),
                    "rel_error": self.rel_error[k].tolist()}
                for k in self.analytic}
        return out


def _project(g, mode):
    g = np.asarray(g, dtype=np.complex128)
    if mode == "real":
        return g.real.astype(np.complex128)
    if mode == "hermitian":
        return 0.5 * (g + np.conj(np.swapaxes(g, -1, -2)))
    return g


def evaluate(pipeline: Callable[..., Var], inputs: Mapping[str, np.ndarray],
             modes: Mapping[str, str] | None = None):
    """Run ``pipeline`` on a fresh tape; returns ``(tape, leaves, objective)``."""
    modes = dict(modes or {})
    tape = Tape()
    leaves = {k: tape.leaf(v, real=modes.get(k) == "real") for k, v in inputs.items()}
    return tape, leaves, pipeline(**leaves)


def check(pipeline: Callable[..., Var], inputs: Mapping[str, np.ndarray],
          eps: float = DEFAULT_EPS, tol: float = DEFAULT_TOL,
          modes: Mapping[str, str] | None = None, name: str = "pipeline",
          floor: float = REL_FLOOR) -> CheckReport:
    """Compare tape gradients of every input against :func:`numeric_grad`.

    ``pipeline`` receives one tape variable per entry of ``inputs`` (as
    keyword arguments) and returns a real scalar variable.  Raise ``floor``
    when some gradient entries are exactly zero, where finite-difference
    noise would otherwise dominate the relative error.
    """
    modes = dict(modes or {})
    inputs = {k: np.asarray(v, dtype=np.complex128) for k, v in inputs.items()}
    _, leaves, out = evaluate(pipeline, inputs, modes)
    grads = backward(out)

    analytic, numeric = {}, {}
    for key, value in inputs.items():
        mode = modes.get(key, "complex")
        g = grads[leaves[key]] if leaves[key] in grads else np.zeros_like(value)
        analytic[key] = _project(g, mode)

        def f(z, key=key):
            return evaluate(pipeline, {**inputs, key: z}, modes)[2]

        numeric[key] = numeric_grad(f, value, eps=eps, mode=mode)
    return CheckReport(name, analytic, numeric, tol, floor)
