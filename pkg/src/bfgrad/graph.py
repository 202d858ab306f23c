"""Dynamic tape for reverse-mode differentiation of complex-valued programs.

Every value on the tape is a complex128 array.  Gradients follow one fixed
convention: the stored quantity for a node ``z`` is the Wirtinger derivative
``dJ/dz* = (dJ/dx + j dJ/dy) / 2`` of the real objective ``J``.  The plain
``dJ/dz`` is its conjugate and is only handed out by
:meth:`Gradients.wrt_z`.

A tape is single-writer.  Recorded values are read-only and may be shared
across threads; independent tapes can run in parallel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping

import numpy as np

from .errors import ContractError, StructuralError

#: |Im J| <= REALNESS_TOL * max(1, |Re J|) is accepted as a real objective.
REALNESS_TOL = 1e-12

BackwardRule = Callable[..., tuple]
BACKWARD: dict[str, BackwardRule] = {}


def register_backward(op: str) -> Callable[[BackwardRule], BackwardRule]:
    """Register ``fn(g, node, inputs)`` as the backward rule of ``op``.

    ``g`` is the upstream gradient of the node, ``inputs`` the values of its
    input nodes.  The rule returns one gradient (or ``None``) per input.
    """

    def deco(fn: BackwardRule) -> BackwardRule:
        BACKWARD[op] = fn
        return fn

    return deco


def as_tensor(value: Any) -> np.ndarray:
    """Return ``value`` as a read-only, finite complex128 array."""
    arr = np.array(value, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise ContractError("tensor contains NaN or Inf entries")
    arr.flags.writeable = False
    return arr


def project_real(g: Any) -> np.ndarray:
    """Real part of a gradient, kept as a complex array with zero imaginary part.

    Gradients flowing into a real-valued node must be real: the objective
    cannot depend on an imaginary part that does not exist.
    """
    return np.asarray(g).real.astype(np.complex128)


def _freeze(value):
    if isinstance(value, tuple):
        return tuple(_freeze(v) for v in value)
    return as_tensor(value)


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    inputs: tuple[int, ...]
    value: Any
    saved: dict = field(default_factory=dict)
    real_constrained: bool = False


class Tape:
    """Append-only record of the forward computation."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs, value, saved: dict | None = None,
               real: bool = False) -> "Var":
        inputs = tuple(int(i) for i in inputs)
        new_id = len(self.nodes)
        for i in inputs:
            if i < 0 or i >= new_id:
                raise StructuralError(
                    f"input id {i} does not reference an earlier node (tape has {new_id})")
        value = _freeze(value)
        if real:
            if isinstance(value, tuple):
                raise StructuralError("multi-output nodes cannot be real-constrained")
            value = as_tensor(value.real)
        self.nodes.append(Node(new_id, op, inputs, value, saved or {}, real))
        return Var(self, new_id)

    def leaf(self, value, real: bool = False) -> "Var":
        """Input variable; ``real=True`` keeps it (and its gradient) real."""
        return self.record("leaf", (), value, real=real)

    def const(self, value, real: bool | None = None) -> "Var":
        value = as_tensor(value)
        if real is None:
            real = not np.any(value.imag)
        return self.record("const", (), value, real=real)

    def backward(self, objective) -> "Gradients":
        return backward(objective if isinstance(objective, Var) else Var(self, objective))


class Var:
    """Handle to a node on a tape, with arithmetic that records new nodes."""

    __array_priority__ = 1000

    def __init__(self, tape: Tape, id: int) -> None:
        self.tape = tape
        self.id = id

    def __repr__(self) -> str:
        return f"Var(id={self.id}, op={self.node.op!r}, shape={self.shape})"

    @property
    def node(self) -> Node:
        return self.tape.nodes[self.id]

    @property
    def value(self):
        return self.node.value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.node.value.shape

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def is_real(self) -> bool:
        return self.node.real_constrained

    def lift(self, other) -> "Var":
        """Wrap a constant onto this tape; pass Vars through."""
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise StructuralError("operands live on different tapes")
            return other
        return self.tape.const(other)

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        from . import scalar_ops
        return scalar_ops.add(self, self.lift(other))

    def __radd__(self, other):
        from . import scalar_ops
        return scalar_ops.add(self.lift(other), self)

    def __sub__(self, other):
        from . import scalar_ops
        return scalar_ops.sub(self, self.lift(other))

    def __rsub__(self, other):
        from . import scalar_ops
        return scalar_ops.sub(self.lift(other), self)

    def __neg__(self):
        from . import scalar_ops
        return scalar_ops.neg(self)

    def __mul__(self, other):
        from . import scalar_ops
        return scalar_ops.mul(self, self.lift(other))

    def __rmul__(self, other):
        from . import scalar_ops
        return scalar_ops.mul(self.lift(other), self)

    def __truediv__(self, other):
        from . import scalar_ops
        return scalar_ops.div(self, self.lift(other))

    def __rtruediv__(self, other):
        from . import scalar_ops
        return scalar_ops.div(self.lift(other), self)

    def __pow__(self, n: int):
        from . import scalar_ops
        return scalar_ops.power(self, n)

    def __matmul__(self, other):
        from . import linalg
        return linalg.matmul(self, self.lift(other))

    def __rmatmul__(self, other):
        from . import linalg
        return linalg.matmul(self.lift(other), self)

    def __getitem__(self, index):
        from . import tensor_ops
        return tensor_ops.getitem(self, index)

    def conj(self):
        from . import scalar_ops
        return scalar_ops.conj(self)

    @property
    def H(self):
        """Conjugate transpose of the last two axes."""
        from . import tensor_ops
        return tensor_ops.swapaxes(self.conj(), -1, -2)

    @property
    def real(self):
        from . import scalar_ops
        return scalar_ops.real(self)

    @property
    def imag(self):
        from . import scalar_ops
        return scalar_ops.imag(self)

    def sum(self, axis=None, keepdims: bool = False):
        from . import tensor_ops
        return tensor_ops.sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        from . import tensor_ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return tensor_ops.reshape(self, shape)


class Gradients(Mapping):
    """Result of a backward sweep: node id -> dJ/dz*.

    Nodes with no path to the objective are absent rather than zero.
    """

    def __init__(self, grads: dict[int, Any]) -> None:
        self._grads = grads

    @staticmethod
    def _key(key) -> int:
        return key.id if isinstance(key, Var) else int(key)

    def __getitem__(self, key):
        return self._grads[self._key(key)]

    def __contains__(self, key) -> bool:
        return self._key(key) in self._grads

    def __iter__(self) -> Iterator[int]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def wrt_z(self, key):
        """The alternate convention dJ/dz, i.e. the conjugate of the stored value."""
        g = self[key]
        if isinstance(g, tuple):
            return tuple(None if x is None else np.conj(x) for x in g)
        return np.conj(g)


def _accumulate(current, new):
    if current is None:
        return new
    if isinstance(current, tuple):
        return tuple(_accumulate(c, n) for c, n in zip(current, new))
    if new is None:
        return current
    return current + new


def _project_for(node: Node, g):
    if g is None:
        return None
    if node.real_constrained:
        return project_real(g)
    return g


def backward(objective: Var) -> Gradients:
    """Propagate dJ/dz* from a real scalar objective to every ancestor node."""
    tape = objective.tape
    value = objective.value
    if isinstance(value, tuple) or value.size != 1:
        raise ContractError("objective must be a scalar")
    j = complex(value.reshape(()))
    if abs(j.imag) > REALNESS_TOL * max(1.0, abs(j.real)):
        raise ContractError(f"objective must be real, got imaginary part {j.imag:.3e}")

    # J depends only on its own real part, so dJ/dJ* = 1/2.
    grads: dict[int, Any] = {objective.id: np.full(value.shape, 0.5, dtype=np.complex128)}
    for node in reversed(tape.nodes[: objective.id + 1]):
        g = grads.get(node.id)
        if g is None or not node.inputs:
            continue
        rule = BACKWARD.get(node.op)
        if rule is None:
            raise StructuralError(f"no backward rule registered for op {node.op!r}")
        inputs = [tape.nodes[i].value for i in node.inputs]
        in_grads = rule(g, node, inputs)
        if len(in_grads) != len(node.inputs):
            raise StructuralError(f"backward rule of {node.op!r} returned wrong arity")
        for i, gi in zip(node.inputs, in_grads):
            if gi is None:
                continue
            gi = _project_for(tape.nodes[i], gi)
            grads[i] = _accumulate(grads.get(i), gi)
    return Gradients(grads)


def sgd_step(z, g, mu: float, real: bool = False) -> np.ndarray:
    """One complex gradient-descent step ``z - mu * dJ/dz*``."""
    if not mu >= 0:
        raise ContractError("step size must be non-negative")
    z = np.asarray(z, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    if z.shape != g.shape:
        raise ContractError(f"shape mismatch: {z.shape} vs {g.shape}")
    if real:
        g = project_real(g)
    return z - mu * g
