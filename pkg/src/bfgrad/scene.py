"""Synthetic multichannel scenes: one point source plus spatially colored noise."""
from __future__ import annotations

import numpy as np

from .beamform import MaskedScene
from .errors import ContractError


def _crandn(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def synth_scene(channels: int, bins: int, frames: int, snr_in_db: float = 0.0,
                seed: int | None = 0) -> MaskedScene:
    """Draw ``X = d_f s_ft`` and colored noise ``N`` scaled to the requested input SNR.

    Oracle masks are ``|X|^2 / (|X|^2 + |N|^2)`` for speech and one minus
    that for noise.
    """
    if min(channels, bins, frames) < 1:
        raise ContractError("channels, bins and frames must be >= 1")
    rng = np.random.default_rng(seed)
    d, f, t = channels, bins, frames
    steer = _crandn(rng, (f, d))
    steer /= np.linalg.norm(steer, axis=-1, keepdims=True)
    source = _crandn(rng, (f, t))
    X = source[:, :, None] * steer[:, None, :]

    # per-bin spatial covariance A A^H + 0.1 I, applied through its Cholesky factor
    a = _crandn(rng, (f, d, d))
    cov = a @ np.conj(np.swapaxes(a, -1, -2)) + 0.1 * np.eye(d)
    white = _crandn(rng, (f, t, d))
    N = np.einsum("fij,ftj->fti", np.linalg.cholesky(cov), white)

    gain = np.sqrt(np.sum(np.abs(X) ** 2) / np.sum(np.abs(N) ** 2) / 10 ** (snr_in_db / 10))
    N = N * gain
    px, pn = np.abs(X) ** 2, np.abs(N) ** 2
    m_x = px / (px + pn)
    return MaskedScene(X=X, N=N, Y=X + N, M_X=m_x, M_N=1.0 - m_x)
