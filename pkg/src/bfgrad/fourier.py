"""Discrete Fourier transforms along the last axis, with backward rules.

Normalization is fixed: the forward DFT is unscaled, the inverse carries
``1/N``.  ``rdft`` keeps bins ``0..N/2`` of a real signal of even length.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError
from .graph import Var, register_backward


def _even(n: int) -> None:
    if n % 2:
        raise ContractError(f"real-input transforms need an even length, got {n}")


def dft_bwd(g):
    n = np.shape(g)[-1]
    return n * np.fft.ifft(g, axis=-1)


def idft_bwd(g):
    n = np.shape(g)[-1]
    return np.fft.fft(g, axis=-1) / n


def rdft_bwd(g, n: int):
    """Gradient for the real signal of length ``n`` behind a half spectrum."""
    _even(n)
    gt = np.array(g, dtype=np.complex128) / 2
    gt[..., 0] = np.real(g[..., 0])
    gt[..., n // 2] = np.real(g[..., n // 2])
    return (n * np.fft.irfft(gt, n=n, axis=-1)).astype(np.complex128)


def irdft_bwd(g):
    g = np.real(g)
    n = g.shape[-1]
    _even(n)
    gt = np.fft.rfft(g, axis=-1) / n
    gt[..., 1 : n // 2] *= 2
    return gt


def dft(z: Var) -> Var:
    if z.ndim == 0 or z.shape[-1] < 1:
        raise ContractError("dft needs at least one sample")
    return z.tape.record("dft", [z.id], np.fft.fft(z.value, axis=-1))


def idft(z: Var) -> Var:
    if z.ndim == 0 or z.shape[-1] < 1:
        raise ContractError("idft needs at least one sample")
    return z.tape.record("idft", [z.id], np.fft.ifft(z.value, axis=-1))


def rdft(z: Var) -> Var:
    if not z.is_real:
        raise ContractError("rdft expects a real-constrained input")
    _even(z.shape[-1])
    return z.tape.record("rdft", [z.id], np.fft.rfft(z.value.real, axis=-1))


def irdft(z: Var) -> Var:
    """Real signal of length ``2 * (bins - 1)`` from a half spectrum.

    Imaginary parts of the DC and Nyquist bins do not reach the output.
    """
    n = 2 * (z.shape[-1] - 1)
    if n < 2:
        raise ContractError("irdft needs at least two bins")
    return z.tape.record("irdft", [z.id], np.fft.irfft(z.value, n=n, axis=-1), real=True)


@register_backward("dft")
def _(g, node, inputs):
    return (dft_bwd(g),)


@register_backward("idft")
def _(g, node, inputs):
    return (idft_bwd(g),)


@register_backward("rdft")
def _(g, node, inputs):
    return (rdft_bwd(g, inputs[0].shape[-1]),)


@register_backward("irdft")
def _(g, node, inputs):
    return (irdft_bwd(g),)
