"""Shape plumbing and the few real-valued helpers the beamforming objective needs."""
from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError
from .graph import Var, register_backward


def sum(z: Var, axis=None, keepdims: bool = False) -> Var:  # noqa: A001
    return z.tape.record("sum", [z.id], np.sum(z.value, axis=axis, keepdims=keepdims),
                         saved={"axis": axis, "keepdims": keepdims}, real=z.is_real)


@register_backward("sum")
def _(g, node, inputs):
    shape = inputs[0].shape
    axis, keepdims = node.saved["axis"], node.saved["keepdims"]
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, shape).astype(np.complex128),)


def reshape(z: Var, shape) -> Var:
    return z.tape.record("reshape", [z.id], np.reshape(z.value, shape), real=z.is_real)


@register_backward("reshape")
def _(g, node, inputs):
    return (np.reshape(g, inputs[0].shape),)


def broadcast_to(z: Var, shape) -> Var:
    """Explicit broadcast; elementwise ops never broadcast implicitly."""
    shape = tuple(shape)
    return z.tape.record("broadcast_to", [z.id], np.broadcast_to(z.value, shape),
                         real=z.is_real)


@register_backward("broadcast_to")
def _(g, node, inputs):
    shape = inputs[0].shape
    lead = g.ndim - len(shape)
    g = np.sum(g, axis=tuple(range(lead))) if lead else g
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = np.sum(g, axis=axes, keepdims=True)
    return (g,)


def swapaxes(z: Var, a: int, b: int) -> Var:
    return z.tape.record("swapaxes", [z.id], np.swapaxes(z.value, a, b),
                         saved={"axes": (a, b)}, real=z.is_real)


@register_backward("swapaxes")
def _(g, node, inputs):
    return (np.swapaxes(g, *node.saved["axes"]),)


def getitem(z: Var, index) -> Var:
    return z.tape.record("getitem", [z.id], z.value[index], saved={"index": index},
                         real=z.is_real)


@register_backward("getitem")
def _(g, node, inputs):
    out = np.zeros(inputs[0].shape, dtype=np.complex128)
    np.add.at(out, node.saved["index"], g)
    return (out,)


def select_column(w: Var, idx) -> Var:
    """Pick column ``idx[...]`` of every matrix in a ``(..., D, K)`` stack."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.shape != w.shape[:-2]:
        raise ContractError(f"index shape {idx.shape} does not match batch {w.shape[:-2]}")
    take = np.broadcast_to(idx[..., None, None], w.shape[:-1] + (1,))
    value = np.take_along_axis(w.value, take, axis=-1)[..., 0]
    return w.tape.record("select_column", [w.id], value, saved={"take": take},
                         real=w.is_real)


@register_backward("select_column")
def _(g, node, inputs):
    out = np.zeros(inputs[0].shape, dtype=np.complex128)
    np.put_along_axis(out, node.saved["take"], g[..., None], axis=-1)
    return (out,)


def take_output(z: Var, k: int) -> Var:
    """Element ``k`` of a multi-output node such as ``eig``."""
    return z.tape.record("take_output", [z.id], z.value[k], saved={"k": k})


@register_backward("take_output")
def _(g, node, inputs):
    parts = [None] * len(inputs[0])
    parts[node.saved["k"]] = g
    return (tuple(parts),)


def log(z: Var) -> Var:
    """Natural logarithm of a strictly positive real tensor."""
    if not z.is_real:
        raise ContractError("log is only defined here for real-constrained inputs")
    if np.any(z.value.real <= 0):
        raise DomainError("log of a non-positive value")
    return z.tape.record("log", [z.id], np.log(z.value.real), real=True)


@register_backward("log")
def _(g, node, inputs):
    return (g / inputs[0].real,)


def sigmoid(z: Var) -> Var:
    """Logistic function of a real tensor, used to keep masks inside [0, 1]."""
    if not z.is_real:
        raise ContractError("sigmoid expects a real-constrained input")
    x = z.value.real
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return z.tape.record("sigmoid", [z.id], s, real=True)


@register_backward("sigmoid")
def _(g, node, inputs):
    s = node.value.real
    return (g * s * (1.0 - s),)


def inner_real(u, s: Var) -> Var:
    """``Re sum(conj(u) * s)``, a real scalar probe of an arbitrary tensor."""
    from . import scalar_ops

    u = s.lift(u)
    return scalar_ops.real(sum(scalar_ops.mul(scalar_ops.conj(u), s)))
