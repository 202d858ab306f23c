"""Gradient descent on sigmoid-parameterized speech and noise masks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import beamform as bf
from . import tensor_ops as to
from .errors import ContractError, DomainError
from .graph import Tape, backward, sgd_step

INITS = ("uniform", "oracle", "random")
UNIFORM_JITTER = 0.1
ORACLE_CLIP = 1e-3
MAX_HALVINGS = 20


@dataclass
class Step:
    iteration: int
    objective: float
    snr_in_db: float
    snr_out_db: float
    ms: float
    mu: float


@dataclass
class OptimizeResult:
    logits_x: np.ndarray
    logits_n: np.ndarray
    weights: np.ndarray
    history: list[Step] = field(default_factory=list)

    @property
    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        return _sigmoid(self.logits_x), _sigmoid(self.logits_n)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logit(p):
    p = np.clip(p, ORACLE_CLIP, 1 - ORACLE_CLIP)
    return np.log(p) - np.log1p(-p)


def init_logits(scene: bf.MaskedScene, init: str, rng: np.random.Generator):
    """Starting logits for speech and noise masks.

    ``uniform`` is 0.5 everywhere up to a small jitter: exactly equal masks
    give identical speech and noise PSDs, a degenerate eigenproblem.
    """
    shape = scene.shape
    if init == "uniform":
        return (UNIFORM_JITTER * rng.standard_normal(shape),
                UNIFORM_JITTER * rng.standard_normal(shape))
    if init == "oracle":
        return _logit(scene.M_X.real), _logit(scene.M_N.real)
    if init == "random":
        return rng.standard_normal(shape), rng.standard_normal(shape)
    raise ContractError(f"unknown init {init!r}; choose from {INITS}")


def evaluate(scene: bf.MaskedScene, logits_x, logits_n, beamformer: str = "gev",
             delta: float | None = None):
    """Objective and weights for given logits; returns ``(tape, leaves, J, w)``."""
    tape = Tape()
    lx, ln = tape.leaf(logits_x, real=True), tape.leaf(logits_n, real=True)
    w = bf.beamformer_weights(beamformer, scene.Y, to.sigmoid(lx), to.sigmoid(ln), delta)
    return tape, (lx, ln), bf.snr_objective(w, scene.X, scene.N), w


def optimize_masks(scene: bf.MaskedScene, beamformer: str = "gev", init: str = "uniform",
                   mu: float = 10.0, iters: int = 50, seed: int = 0,
                   delta: float | None = None, timing: bool = True,
                   callback: Callable[[Step], None] | None = None) -> OptimizeResult:
    """Minimize the negative output SNR over the mask logits.

    A step that increases the objective is retried with half the step size
    (the halved size is kept for later iterations).  Row ``k`` of the
    history describes the state after ``k`` accepted steps.
    """
    if not mu > 0:
        raise ContractError("mu must be positive")
    if iters < 0:
        raise ContractError("iters must be >= 0")
    rng = np.random.default_rng(seed)
    lx, ln = init_logits(scene, init, rng)
    snr_in = float(bf.snr_metrics(scene.X, scene.N)[0])
    result = OptimizeResult(lx, ln, np.zeros(0))

    start = time.perf_counter()
    _, leaves, obj, w = evaluate(scene, lx, ln, beamformer, delta)
    for it in range(iters + 1):
        j = float(obj.value.real)
        if not np.isfinite(j):
            raise DomainError(f"objective diverged at iteration {it}")
        ms = (time.perf_counter() - start) * 1e3 if timing else 0.0
        step = Step(it, j, snr_in, float(bf.snr_metrics(scene.X, scene.N, w)[1]), ms, mu)
        result.history.append(step)
        if callback is not None:
            callback(step)
        result.logits_x, result.logits_n, result.weights = lx, ln, np.array(w.value)
        if it == iters:
            break
        start = time.perf_counter()
        grads = backward(obj)
        gx, gn = grads[leaves[0]], grads[leaves[1]]
        for _ in range(MAX_HALVINGS):
            nx = sgd_step(lx, gx, mu, real=True).real
            nn = sgd_step(ln, gn, mu, real=True).real
            try:
                _, new_leaves, new_obj, new_w = evaluate(scene, nx, nn, beamformer, delta)
            except DomainError:
                new_obj = None
            if new_obj is not None and new_obj.value.real <= j:
                break
            mu /= 2
        else:
            # no decrease found; stay put so the history stays monotone
            continue
        lx, ln, leaves, obj, w = nx, nn, new_leaves, new_obj, new_w
    return result
