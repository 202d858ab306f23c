"""Mask-based statistically optimum beamforming on the tape.

Signals are STFT tensors of shape ``(F, T, D)``: frequency bins, frames,
channels.  PSD matrices are ``(F, D, D)`` and weights ``(F, D)``.  Every
function that takes tape variables stays differentiable end to end; plain
arrays are lifted onto the tape of the first variable argument.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, scalar_ops as so, tensor_ops as to
from .errors import ContractError, DomainError, StructuralError
from .graph import Tape, Var

DELTA_DEFAULT = 1e-10
DELTA_RANK_DEFICIENT = 1e-6
MVDR_IMAG_RTOL = 1e-10
BEAMFORMERS = ("gev", "mvdr", "gev-whitening")


@dataclass(frozen=True)
class MaskedScene:
    X: np.ndarray
    N: np.ndarray
    Y: np.ndarray
    M_X: np.ndarray
    M_N: np.ndarray

    def __post_init__(self):
        shape = self.X.shape
        if len(shape) != 3:
            raise ContractError(f"scene tensors must be (F, T, D), got {shape}")
        for name in ("N", "Y", "M_X", "M_N"):
            if getattr(self, name).shape != shape:
                raise ContractError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.max(np.abs(self.Y - (self.X + self.N))) > 1e-12 * max(1.0, np.max(np.abs(self.Y))):
            raise ContractError("Y must equal X + N")
        for name in ("M_X", "M_N"):
            m = getattr(self, name)
            if np.any(np.imag(m)) or np.any(np.real(m) < 0) or np.any(np.real(m) > 1):
                raise ContractError(f"{name} must be real and inside [0, 1]")

    @property
    def shape(self):
        return self.X.shape


@dataclass(frozen=True)
class PSDPair:
    phi_xx: Var
    phi_nn: Var


@dataclass(frozen=True)
class BeamformerWeights:
    w: np.ndarray
    convention: str  # "mvdr" or "gev_unit_norm_phase_fixed"


def _tape_of(*args) -> Tape:
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return Tape()


def _lift(tape: Tape, x, real=None) -> Var:
    if isinstance(x, Var):
        if x.tape is not tape:
            raise StructuralError("operands live on different tapes")
        return x
    return tape.const(x, real=real)


def default_delta(frames: int, channels: int) -> float:
    """PSD loading: tiny by default, larger when T < D makes the PSD singular."""
    return DELTA_RANK_DEFICIENT if frames < channels else DELTA_DEFAULT


def estimate_psd(Y, M) -> Var:
    """Mask-weighted spatial covariance per bin.

    ``Phi_f = sum_t m_ft Y_ft Y_ft^H / sum_t m_ft`` with ``m_ft = sum_d M_ftd``.
    """
    tape = _tape_of(Y, M)
    Y, M = _lift(tape, Y), _lift(tape, M, real=True)
    if Y.shape != M.shape or Y.ndim != 3:
        raise ContractError(f"signal {Y.shape} and mask {M.shape} must both be (F, T, D)")
    f, t, d = Y.shape
    m = to.sum(M, axis=-1)
    norm = np.sum(m.value.real, axis=-1)
    if np.any(norm <= 0):
        bad = np.flatnonzero(norm <= 0).tolist()
        raise DomainError(f"mask sums to zero in bins {bad}")
    yt = to.swapaxes(Y, -1, -2)  # (F, D, T)
    weighted = so.mul(yt, to.broadcast_to(to.reshape(m, (f, 1, t)), (f, d, t)))
    total = linalg.matmul(weighted, so.conj(Y))
    return so.div(total, to.broadcast_to(to.reshape(to.sum(m, axis=-1), (f, 1, 1)), (f, d, d)))


def condition_psd(phi, delta: float) -> Var:
    """Diagonal loading ``Phi + delta * trace(Phi) / D * I``."""
    if not delta >= 0:
        raise ContractError("delta must be non-negative")
    phi = _lift(_tape_of(phi), phi)
    if delta == 0:
        return phi
    d = phi.shape[-1]
    eye = np.broadcast_to(np.eye(d), phi.shape)
    trace = so.real(to.sum(so.mul(phi, phi.tape.const(eye)), axis=(-2, -1)))
    load = so.mul(to.reshape(trace, phi.shape[:-2] + (1, 1)), phi.tape.const(delta / d))
    return so.add(phi, so.mul(to.broadcast_to(load, phi.shape), phi.tape.const(eye)))


def _principal(w: Var) -> Var:
    # eig sorts by decreasing real part, so the principal vector is column 0
    return to.select_column(w, np.zeros(w.shape[:-2], dtype=np.intp))


def mvdr_weights(phi_xx, phi_nn) -> Var:
    """Distortionless response towards the principal eigenvector of ``Phi_XX``."""
    tape = _tape_of(phi_xx, phi_nn)
    phi_xx, phi_nn = _lift(tape, phi_xx), _lift(tape, phi_nn)
    w_vec, _ = linalg.eig(phi_xx, hermitian=True, principal_only=True)
    steer = linalg.phase_normalize(_principal(w_vec))
    num = linalg.solve_left(phi_nn, to.reshape(steer, steer.shape + (1,)))
    num = to.reshape(num, steer.shape)
    den = to.sum(so.mul(so.conj(steer), num), axis=-1)
    v = den.value
    if np.any(np.abs(v.imag) > MVDR_IMAG_RTOL * np.abs(v.real)) or np.any(v.real <= 0):
        raise DomainError("MVDR denominator is not real positive; is Phi_NN hermitian PD?")
    den = so.real(den)
    return so.div(num, to.broadcast_to(to.reshape(den, den.shape + (1,)), num.shape))


def gev_weights_eig(phi_xx, phi_nn, gap_tol=None) -> Var:
    """Max-SNR weights from the eigenvectors of ``Phi_NN^-1 Phi_XX``.

    Unit-norm, first entry real positive.
    """
    tape = _tape_of(phi_xx, phi_nn)
    phi_xx, phi_nn = _lift(tape, phi_xx), _lift(tape, phi_nn)
    w_vec, _ = linalg.eig(linalg.solve_left(phi_nn, phi_xx), gap_tol=gap_tol,
                          principal_only=True)
    return linalg.phase_normalize(linalg.normalize_vec(_principal(w_vec)))


def gev_weights_whitening(Y, M_X, M_N, delta: float | None = None, gap_tol=None) -> Var:
    """Max-SNR weights through noise whitening and a hermitian eigenproblem.

    ``delta`` loads the noise PSD exactly as the ``gev`` route does, so
    both routes solve the same problem.
    """
    tape = _tape_of(Y, M_X, M_N)
    Y = _lift(tape, Y)
    f, t, d = Y.shape
    if delta is None:
        delta = default_delta(t, d)
    phi_nn = condition_psd(estimate_psd(Y, M_N), delta)
    lower = linalg.cholesky(phi_nn)
    y_white = to.swapaxes(linalg.solve_left(lower, to.swapaxes(Y, -1, -2)), -1, -2)
    w_vec, _ = linalg.eig(estimate_psd(y_white, M_X), hermitian=True, gap_tol=gap_tol,
                          principal_only=True)
    w_white = _principal(w_vec)
    w = linalg.solve_left(linalg.conj_transpose(lower), to.reshape(w_white, (f, d, 1)))
    return linalg.phase_normalize(linalg.normalize_vec(to.reshape(w, (f, d))))


def psd_pair(Y, M_X, M_N, delta: float | None = None) -> PSDPair:
    """Speech and (loaded) noise PSDs of one scene."""
    tape = _tape_of(Y, M_X, M_N)
    Y = _lift(tape, Y)
    if delta is None:
        delta = default_delta(Y.shape[1], Y.shape[2])
    return PSDPair(estimate_psd(Y, M_X), condition_psd(estimate_psd(Y, M_N), delta))


def beamformer_weights(kind: str, Y, M_X, M_N, delta: float | None = None) -> Var:
    """Weights of beamformer ``kind`` (one of ``BEAMFORMERS``) from masks."""
    if kind == "gev-whitening":
        return gev_weights_whitening(Y, M_X, M_N, delta)
    psd = psd_pair(Y, M_X, M_N, delta)
    if kind == "gev":
        return gev_weights_eig(psd.phi_xx, psd.phi_nn)
    if kind == "mvdr":
        return mvdr_weights(psd.phi_xx, psd.phi_nn)
    raise ContractError(f"unknown beamformer {kind!r}; choose from {BEAMFORMERS}")


def apply_beamformer(w, S) -> Var:
    """``out[f, t] = w_f^H S[f, t]``."""
    tape = _tape_of(w, S)
    w, S = _lift(tape, w), _lift(tape, S)
    f, t, d = S.shape
    if w.shape != (f, d):
        raise ContractError(f"weights {w.shape} do not match signal {S.shape}")
    out = linalg.matmul(S, to.reshape(so.conj(w), (f, d, 1)))
    return to.reshape(out, (f, t))


def _power(z: Var) -> Var:
    return so.real(so.mul(z, so.conj(z)))


def snr_objective(w, X, N) -> Var:
    """Negative output SNR in dB after scaling every bin of X and N to unit energy."""
    tape = _tape_of(w, X, N)
    w, X, N = _lift(tape, w), _lift(tape, X), _lift(tape, N)
    f, t, _ = X.shape
    logs = []
    for name, sig in (("speech", X), ("noise", N)):
        energy = to.sum(_power(sig), axis=(1, 2))
        if np.any(energy.value.real <= 0):
            raise DomainError(f"{name} has a zero-energy bin")
        out = to.sum(_power(apply_beamformer(w, sig)), axis=1)
        power = to.sum(so.div(out, energy)) * (1.0 / t)
        if power.value.real <= 0:
            raise DomainError(f"beamformed {name} power is zero")
        logs.append(to.log(power))
    return (logs[1] - logs[0]) * (10.0 / np.log(10.0))


def snr_metrics(X, N, w=None, per_bin: bool = False):
    """Input SNR and, given weights, output SNR in dB.

    With ``per_bin`` the sums run over frames (and channels) only and arrays
    of length F are returned.
    """
    X, N = np.asarray(X), np.asarray(N)
    axes = (1, 2) if per_bin else None
    noise = np.sum(np.abs(N) ** 2, axis=axes)
    if np.any(noise <= 0):
        raise DomainError("noise energy is zero")
    snr_in = 10 * np.log10(np.sum(np.abs(X) ** 2, axis=axes) / noise)
    if w is None:
        return snr_in, None
    w = np.asarray(w.value if isinstance(w, Var) else w)
    bx = np.einsum("fd,ftd->ft", np.conj(w), X)
    bn = np.einsum("fd,ftd->ft", np.conj(w), N)
    axes = 1 if per_bin else None
    den = np.sum(np.abs(bn) ** 2, axis=axes)
    if np.any(den <= 0):
        raise DomainError("beamformed noise energy is zero")
    return snr_in, 10 * np.log10(np.sum(np.abs(bx) ** 2, axis=axes) / den)
