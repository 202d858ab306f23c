"""Estimator-style wrappers around the beamformers and the mask optimizer.

``fit`` takes the noisy STFT ``Y`` of shape ``(F, T, D)`` together with
speech and noise masks; ``transform`` applies the fitted weights to any
signal of matching shape.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import beamform as bf
from .errors import ContractError
from .optimize import optimize_masks


def check_stft(S, name: str = "signal") -> np.ndarray:
    """Return ``S`` as a finite complex ``(F, T, D)`` array."""
    S = np.asarray(S, dtype=np.complex128)
    if S.ndim != 3:
        raise ContractError(f"{name} must have shape (F, T, D), got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ContractError(f"{name} contains NaN or Inf")
    return S


def check_mask(M, shape, name: str = "mask") -> np.ndarray:
    M = np.asarray(M)
    if np.iscomplexobj(M):
        if np.any(M.imag):
            raise ContractError(f"{name} must be real")
        M = M.real
    M = M.astype(np.float64)
    if M.shape != tuple(shape):
        raise ContractError(f"{name} has shape {M.shape}, expected {tuple(shape)}")
    if np.any(~np.isfinite(M)) or np.any(M < 0) or np.any(M > 1):
        raise ContractError(f"{name} must lie inside [0, 1]")
    return M


class _MaskBeamformer(TransformerMixin, BaseEstimator):
    kind = "gev"

    def __init__(self, delta=None):
        self.delta = delta

    def _weights(self, Y, M_X, M_N):
        return bf.beamformer_weights(self.kind, Y, M_X, M_N, self.delta)

    def fit(self, Y, mask_x, mask_n):
        Y = check_stft(Y, "Y")
        mx = check_mask(mask_x, Y.shape, "mask_x")
        mn = check_mask(mask_n, Y.shape, "mask_n")
        self.weights_ = np.array(self._weights(Y, mx, mn).value)
        self.n_bins_, _, self.n_channels_ = Y.shape
        return self

    def transform(self, S):
        check_is_fitted(self, "weights_")
        S = check_stft(S)
        if (S.shape[0], S.shape[2]) != (self.n_bins_, self.n_channels_):
            raise ContractError(f"signal {S.shape} does not match fitted weights {self.weights_.shape}")
        return np.einsum("fd,ftd->ft", np.conj(self.weights_), S)

    def score(self, X, N):
        """Output SNR in dB for separate speech and noise images."""
        check_is_fitted(self, "weights_")
        return float(bf.snr_metrics(check_stft(X, "X"), check_stft(N, "N"), self.weights_)[1])


class GEVBeamformer(_MaskBeamformer):
    """Max-SNR beamformer; ``route`` picks the plain or the whitened eigenproblem."""

    def __init__(self, route="eig", delta=None):
        self.route = route
        self.delta = delta

    def _weights(self, Y, M_X, M_N):
        if self.route not in ("eig", "whitening"):
            raise ContractError(f"route must be 'eig' or 'whitening', got {self.route!r}")
        kind = "gev" if self.route == "eig" else "gev-whitening"
        return bf.beamformer_weights(kind, Y, M_X, M_N, self.delta)


class MVDRBeamformer(_MaskBeamformer):
    kind = "mvdr"


class MaskOptimizer(BaseEstimator):
    """Learns masks for one scene by descending the negative output SNR."""

    def __init__(self, beamformer="gev", init="uniform", mu=10.0, iters=50,
                 seed=0, delta=None):
        self.beamformer = beamformer
        self.init = init
        self.mu = mu
        self.iters = iters
        self.seed = seed
        self.delta = delta

    def fit(self, scene: bf.MaskedScene, y=None):
        result = optimize_masks(scene, beamformer=self.beamformer, init=self.init,
                                mu=self.mu, iters=self.iters, seed=self.seed,
                                delta=self.delta, timing=False)
        self.result_ = result
        self.mask_x_, self.mask_n_ = result.masks
        self.weights_ = result.weights
        self.history_ = result.history
        return self

    def transform(self, S):
        check_is_fitted(self, "weights_")
        return np.einsum("fd,ftd->ft", np.conj(self.weights_), check_stft(S))
