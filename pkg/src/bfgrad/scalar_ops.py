"""Elementwise complex operations and their backward rules.

Each ``*_bwd`` function maps the upstream gradient ``g = dJ/ds*`` to the
gradient(s) ``dJ/dz*`` of the inputs.  The recording wrappers (``add``,
``mul``, ...) put the forward result on the tape and register the rule.

Binary operations accept operands of equal shape, or one scalar operand.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError
from .graph import Var, register_backward


def _check_nonzero(z, what: str) -> None:
    if np.any(np.asarray(z) == 0):
        raise DomainError(f"{what} is undefined at z = 0")


# -- backward rules -------------------------------------------------------

def identity_bwd(g):
    return g


def conj_bwd(g):
    return np.conj(g)


def neg_bwd(g):
    return -g


def add_bwd(g):
    return g, g


def mul_bwd(g, z1, z2):
    return g * np.conj(z2), g * np.conj(z1)


def pow_bwd(g, z, n: int):
    z = np.asarray(z)
    if n <= 0:
        _check_nonzero(z, f"z**{n}")
    return g * n * np.conj(z) ** (n - 1)


def div_bwd(g, z1, z2):
    _check_nonzero(z2, "division")
    z2c = np.conj(z2)
    return g / z2c, -g * np.conj(z1) / z2c**2


def abs_bwd(g, z):
    if np.any(np.imag(g)):
        raise ContractError("the gradient of |z| must be real")
    _check_nonzero(z, "the phase of z")
    return g * z / np.abs(z)


def phase_factor_bwd(g, z):
    _check_nonzero(z, "the phase factor")
    z = np.asarray(z)
    return g / np.abs(z) - (g / z).real * (z / np.abs(z))


def re_bwd(g):
    return g


def im_bwd(g):
    return 1j * g


# -- recording wrappers ---------------------------------------------------

def _binary_shapes(a: Var, b: Var) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")


def _fit(g, shape):
    """Reduce a gradient onto a scalar operand that was broadcast."""
    return np.sum(g).reshape(shape) if shape == () and np.ndim(g) else g


def identity(z: Var) -> Var:
    return z.tape.record("identity", [z.id], z.value, real=z.is_real)


def conj(z: Var) -> Var:
    return z.tape.record("conj", [z.id], np.conj(z.value), real=z.is_real)


def neg(z: Var) -> Var:
    return z.tape.record("neg", [z.id], -z.value, real=z.is_real)


def add(a: Var, b: Var) -> Var:
    _binary_shapes(a, b)
    return a.tape.record("add", [a.id, b.id], a.value + b.value,
                         real=a.is_real and b.is_real)


def sub(a: Var, b: Var) -> Var:
    return add(a, neg(b))


def mul(a: Var, b: Var) -> Var:
    _binary_shapes(a, b)
    return a.tape.record("mul", [a.id, b.id], a.value * b.value,
                         real=a.is_real and b.is_real)


def power(z: Var, n: int) -> Var:
    if int(n) != n or n == 0:
        raise ContractError("exponent must be a nonzero integer")
    n = int(n)
    if n < 0:
        _check_nonzero(z.value, f"z**{n}")
    return z.tape.record("pow", [z.id], z.value ** n, saved={"n": n}, real=z.is_real)


def div(a: Var, b: Var) -> Var:
    _binary_shapes(a, b)
    _check_nonzero(b.value, "division")
    return a.tape.record("div", [a.id, b.id], a.value / b.value,
                         real=a.is_real and b.is_real)


def absolute(z: Var) -> Var:
    return z.tape.record("abs", [z.id], np.abs(z.value), real=True)


def phase_factor(z: Var) -> Var:
    """``z / |z|``, the complex sign."""
    _check_nonzero(z.value, "the phase factor")
    return z.tape.record("phase_factor", [z.id], z.value / np.abs(z.value))


def real(z: Var) -> Var:
    return z.tape.record("re", [z.id], z.value.real, real=True)


def imag(z: Var) -> Var:
    return z.tape.record("im", [z.id], z.value.imag, real=True)


# -- registration ---------------------------------------------------------

@register_backward("identity")
def _(g, node, inputs):
    return (identity_bwd(g),)


@register_backward("conj")
def _(g, node, inputs):
    return (conj_bwd(g),)


@register_backward("neg")
def _(g, node, inputs):
    return (neg_bwd(g),)


@register_backward("add")
def _(g, node, inputs):
    ga, gb = add_bwd(g)
    return _fit(ga, inputs[0].shape), _fit(gb, inputs[1].shape)


@register_backward("mul")
def _(g, node, inputs):
    ga, gb = mul_bwd(g, *inputs)
    return _fit(ga, inputs[0].shape), _fit(gb, inputs[1].shape)


@register_backward("pow")
def _(g, node, inputs):
    return (pow_bwd(g, inputs[0], node.saved["n"]),)


@register_backward("div")
def _(g, node, inputs):
    ga, gb = div_bwd(g, *inputs)
    return _fit(ga, inputs[0].shape), _fit(gb, inputs[1].shape)


@register_backward("abs")
def _(g, node, inputs):
    return (abs_bwd(g, inputs[0]),)


@register_backward("phase_factor")
def _(g, node, inputs):
    return (phase_factor_bwd(g, inputs[0]),)


@register_backward("re")
def _(g, node, inputs):
    return (re_bwd(g),)


@register_backward("im")
def _(g, node, inputs):
    return (im_bwd(g),)
