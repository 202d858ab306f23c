import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bfgrad import ContractError
from bfgrad import beamform as bf
from bfgrad.estimators import (GEVBeamformer, MaskOptimizer, MVDRBeamformer, check_mask,
                               check_stft)
from bfgrad.scene import synth_scene


@pytest.fixture
def scene():
    return synth_scene(2, 4, 16, 0.0, seed=8)


def test_params_round_trip():
    est = GEVBeamformer(route="whitening", delta=1e-8)
    assert est.get_params() == {"route": "whitening", "delta": 1e-8}
    assert clone(est).set_params(route="eig").route == "eig"
    assert MaskOptimizer(mu=3.0).get_params()["mu"] == 3.0


@pytest.mark.parametrize("est,kind", [(GEVBeamformer(), "gev"),
                                      (GEVBeamformer(route="whitening"), "gev-whitening"),
                                      (MVDRBeamformer(), "mvdr")])
def test_fit_matches_functional_api(scene, est, kind):
    est.fit(scene.Y, scene.M_X, scene.M_N)
    w = bf.beamformer_weights(kind, scene.Y, scene.M_X, scene.M_N).value
    np.testing.assert_allclose(est.weights_, w)
    out = est.transform(scene.Y)
    np.testing.assert_allclose(out, np.einsum("fd,ftd->ft", w.conj(), scene.Y))
    assert est.score(scene.X, scene.N) == pytest.approx(bf.snr_metrics(scene.X, scene.N, w)[1])


def test_unfitted_and_bad_inputs(scene):
    with pytest.raises(NotFittedError):
        GEVBeamformer().transform(scene.Y)
    with pytest.raises(ContractError):
        GEVBeamformer(route="other").fit(scene.Y, scene.M_X, scene.M_N)
    with pytest.raises(ContractError):
        GEVBeamformer().fit(scene.Y[0], scene.M_X, scene.M_N)
    est = GEVBeamformer().fit(scene.Y, scene.M_X, scene.M_N)
    with pytest.raises(ContractError):
        est.transform(scene.Y[:, :, :1])


def test_validation_helpers():
    with pytest.raises(ContractError):
        check_stft(np.full((1, 1, 1), np.nan))
    with pytest.raises(ContractError):
        check_mask(np.full((1, 1, 1), 1.5), (1, 1, 1))
    with pytest.raises(ContractError):
        check_mask(np.ones((1, 1, 1)) * 1j, (1, 1, 1))
    assert check_mask(np.ones((1, 1, 1)) + 0j, (1, 1, 1)).dtype == np.float64


def test_mask_optimizer(scene):
    opt = MaskOptimizer(iters=10, seed=8).fit(scene)
    assert len(opt.history_) == 11
    assert opt.mask_x_.shape == scene.shape
    assert 0 <= opt.mask_x_.min() and opt.mask_x_.max() <= 1
    assert opt.history_[-1].objective <= opt.history_[0].objective
    assert opt.transform(scene.Y).shape == scene.shape[:2]
