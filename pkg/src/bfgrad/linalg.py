"""Matrix operations with complex backward rules.

All matrix arguments may carry leading batch dimensions (``(..., D, D)``);
the batch is typically one matrix per frequency bin.  Vectors live on the
last axis.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, DomainError
from .graph import Var, register_backward
from . import scalar_ops, tensor_ops

#: Inverses and solves refuse matrices whose 2-norm condition exceeds this.
MAX_CONDITION = 1e12
#: Relative eigenvalue gap below which the eigenvector gradient is undefined.
GAP_RTOL = 1e-8
HERMITIAN_RTOL = 1e-10


def _H(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _unbroadcast(g, shape):
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _square(a, what: str) -> None:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ContractError(f"{what} needs square matrices, got shape {a.shape}")


def _well_conditioned(a, what: str) -> None:
    _square(a, what)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(a)
    worst = np.max(np.where(np.isfinite(cond), cond, np.inf))
    if not worst < MAX_CONDITION:
        raise DomainError(f"{what}: matrix is singular or ill-conditioned "
                          f"(condition number {worst:.3e} >= {MAX_CONDITION:.0e})")


# -- vector normalization -------------------------------------------------

def normalize_vec_bwd(g, z):
    energy = np.sum(np.abs(z) ** 2, axis=-1, keepdims=True)
    proj = np.sum(np.conj(z) * g, axis=-1, keepdims=True).real
    return (g - z / energy * proj) / np.sqrt(energy)


def normalize_vec(z: Var) -> Var:
    """Scale every vector on the last axis to unit euclidean norm."""
    norm = np.linalg.norm(z.value, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DomainError("cannot normalize a zero vector")
    return z.tape.record("normalize_vec", [z.id], z.value / norm)


@register_backward("normalize_vec")
def _(g, node, inputs):
    return (normalize_vec_bwd(g, inputs[0]),)


# -- products and inverses ------------------------------------------------

def matmul_bwd(g, a, b):
    return g @ _H(b), _H(a) @ g


def matmul(a: Var, b: Var) -> Var:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a.tape.record("matmul", [a.id, b.id], a.value @ b.value,
                         real=a.is_real and b.is_real)


@register_backward("matmul")
def _(g, node, inputs):
    a, b = inputs
    ga, gb = matmul_bwd(g, a, b)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def inv_bwd(g, c):
    return -_H(c) @ g @ _H(c)


def inv(a: Var) -> Var:
    _well_conditioned(a.value, "inv")
    return a.tape.record("inv", [a.id], np.linalg.inv(a.value))


@register_backward("inv")
def _(g, node, inputs):
    return (inv_bwd(g, node.value),)


def solve_left_bwd(g, a, c):
    gb = np.linalg.solve(_H(a), g)
    return -gb @ _H(c), gb


def solve_left(a: Var, b: Var) -> Var:
    """``A^-1 B`` without forming the inverse."""
    _well_conditioned(a.value, "solve_left")
    if b.ndim < 2 or b.shape[-2] != a.shape[-1]:
        raise ContractError(f"solve_left shape mismatch: {a.shape} \\ {b.shape}")
    return a.tape.record("solve_left", [a.id, b.id], np.linalg.solve(a.value, b.value))


@register_backward("solve_left")
def _(g, node, inputs):
    a, b = inputs
    ga, gb = solve_left_bwd(g, a, node.value)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


def solve_right_bwd(g, b, c):
    ga = _H(np.linalg.solve(b, _H(g)))
    return ga, -_H(c) @ ga


def solve_right(a: Var, b: Var) -> Var:
    """``A B^-1`` without forming the inverse."""
    _well_conditioned(b.value, "solve_right")
    if a.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractError(f"solve_right shape mismatch: {a.shape} / {b.shape}")
    value = _H(np.linalg.solve(_H(b.value), _H(a.value)))
    return a.tape.record("solve_right", [a.id, b.id], value)


@register_backward("solve_right")
def _(g, node, inputs):
    a, b = inputs
    ga, gb = solve_right_bwd(g, b, node.value)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


# -- Cholesky ---------------------------------------------------------------

def _check_hermitian(a, what: str) -> None:
    _square(a, what)
    scale = np.linalg.norm(a, axis=(-2, -1))
    err = np.linalg.norm(a - _H(a), axis=(-2, -1))
    if np.any(err > HERMITIAN_RTOL * np.maximum(scale, np.finfo(float).tiny)):
        raise ContractError(f"{what} expects hermitian matrices "
                            f"(max asymmetry {np.max(err):.3e})")


def cholesky_bwd(g, lower, symmetrize: bool = True):
    d = lower.shape[-1]
    mask = np.tril(np.ones((d, d))) - 0.5 * np.eye(d)
    inner = (_H(lower) @ g) * mask
    # L^-H inner L^-1, via two triangular solves
    x = np.linalg.solve(_H(lower), inner)
    grad = _H(np.linalg.solve(_H(lower), _H(x)))
    if symmetrize:
        grad = 0.5 * (grad + _H(grad))
    return grad


def cholesky(a: Var) -> Var:
    """Lower-triangular ``L`` with ``L L^H = A`` for hermitian positive definite ``A``."""
    _check_hermitian(a.value, "cholesky")
    try:
        lower = np.linalg.cholesky(a.value)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"cholesky: matrix is not positive definite ({exc})") from None
    return a.tape.record("cholesky", [a.id], lower)


@register_backward("cholesky")
def _(g, node, inputs):
    return (cholesky_bwd(g, node.value),)


# -- eigendecomposition -----------------------------------------------------

def eig_gaps(lam):
    """Gap matrix ``E[i, j] = lam[j] - lam[i]`` and its off-diagonal inverse ``F``."""
    lam = np.asarray(lam)
    gaps = lam[..., None, :] - lam[..., :, None]
    d = lam.shape[-1]
    off = ~np.eye(d, dtype=bool)
    inv_gaps = np.zeros_like(gaps)
    with np.errstate(divide="ignore", invalid="ignore"):
        np.divide(1.0, gaps, out=inv_gaps, where=np.broadcast_to(off, gaps.shape))
    return gaps, inv_gaps


def _gap_tolerance(lam, gap_tol):
    if gap_tol is None:
        return GAP_RTOL * np.max(np.abs(lam), axis=-1)
    return np.broadcast_to(gap_tol, lam.shape[:-1])


def _check_gaps(lam, gap_tol, principal_only: bool = False) -> None:
    d = lam.shape[-1]
    if d < 2:
        return
    gaps, _ = eig_gaps(lam)
    gaps = np.where(np.eye(d, dtype=bool), np.inf, np.abs(gaps))
    if principal_only:
        gaps = gaps[..., 0, :]
        smallest = gaps.min(axis=-1)
    else:
        smallest = gaps.min(axis=(-2, -1))
    tol = _gap_tolerance(lam, gap_tol)
    bad = smallest <= tol
    if np.any(bad):
        first = tuple(int(i) for i in np.argwhere(bad)[0])
        what = "principal eigenvalue" if principal_only else "eigenvalues"
        raise DomainError(
            f"eig: {what} not separated; smallest gap {np.min(smallest[bad]):.3e} "
            f"<= tolerance {np.max(tol[bad]):.3e} (batch index {first})")


def _safe_inverse_gaps(lam, gap_tol):
    """``F`` with entries of unresolved gaps set to zero."""
    gaps, f = eig_gaps(lam)
    tol = _gap_tolerance(lam, gap_tol)[..., None, None]
    return np.where(np.abs(gaps) > tol, f, 0)


def eig_extension_term(g_w, w, lam, f=None):
    """Part of the gradient caused by the unit-norm convention of the eigenvectors."""
    if f is None:
        _, f = eig_gaps(lam)
    radial = np.real(np.einsum("...ik,...ik->...k", np.conj(w), g_w))
    inner = np.conj(f) * ((_H(w) @ w) * radial[..., None, :])
    return np.linalg.solve(_H(w), inner @ _H(w))


def eig_bwd(g_w, g_lam, w, lam, extension: bool = True, f=None):
    """Gradient w.r.t. ``Phi`` given gradients for eigenvectors ``W`` and eigenvalues."""
    w = np.asarray(w)
    d = w.shape[-1]
    if g_w is None:
        g_w = np.zeros_like(w)
    if g_lam is None:
        g_lam = np.zeros(w.shape[:-1], dtype=np.complex128)
    if f is None:
        _, f = eig_gaps(lam)
    inner = np.conj(f) * (_H(w) @ g_w) + np.asarray(g_lam)[..., None] * np.eye(d)
    grad = np.linalg.solve(_H(w), inner @ _H(w))
    if extension:
        grad = grad - eig_extension_term(g_w, w, lam, f)
    return grad


def eig(phi: Var, hermitian: bool = False, gap_tol=None, extension: bool = True,
        principal_only: bool = False):
    """Eigenvectors (unit-norm columns) and eigenvalues of square matrices.

    Eigenvalues are sorted by decreasing real part.  ``hermitian=True`` uses a
    hermitian solver for the forward pass; the backward rule is the same.
    With ``principal_only`` only the first eigenvalue has to be separated
    from the rest, and only the first eigenvector may receive a gradient.
    Returns ``(W, lam)`` as two tape variables.
    """
    _square(phi.value, "eig")
    if hermitian:
        _check_hermitian(phi.value, "eig(hermitian=True)")
        lam, w = np.linalg.eigh(phi.value)
        lam = lam.astype(np.complex128)
    else:
        lam, w = np.linalg.eig(phi.value)
    order = np.argsort(-lam.real, axis=-1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=-1)
    w = np.take_along_axis(w, order[..., None, :], axis=-1)
    w = w / np.linalg.norm(w, axis=-2, keepdims=True)
    _check_gaps(lam, gap_tol, principal_only)
    saved = {"extension": extension, "principal_only": principal_only, "gap_tol": gap_tol}
    node = phi.tape.record("eig", [phi.id], (w, lam), saved=saved)
    return tensor_ops.take_output(node, 0), tensor_ops.take_output(node, 1)


@register_backward("eig")
def _(g, node, inputs):
    w, lam = node.value
    g_w, g_lam = g
    f = None
    if node.saved["principal_only"]:
        if g_w is not None and np.any(g_w[..., 1:]):
            raise DomainError("eig(principal_only=True): gradient reached a "
                              "non-principal eigenvector")
        if g_lam is not None and np.any(g_lam[..., 1:]):
            raise DomainError("eig(principal_only=True): gradient reached a "
                              "non-principal eigenvalue")
        f = _safe_inverse_gaps(lam, node.saved["gap_tol"])
    return (eig_bwd(g_w, g_lam, w, lam, extension=node.saved["extension"], f=f),)


def phase_normalize(w: Var) -> Var:
    """Rotate each vector on the last axis so its first entry is real and positive."""
    first = tensor_ops.getitem(w, (Ellipsis, slice(0, 1)))
    rot = scalar_ops.conj(scalar_ops.phase_factor(first))
    return scalar_ops.mul(w, tensor_ops.broadcast_to(rot, w.shape))


def conj_transpose(a: Var) -> Var:
    return a.H
