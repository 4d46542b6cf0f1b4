from __future__ import annotations

import numpy as np
import pytest
from helpers import RATE, harmonic_signal

from bwaconflict.audio_io import AudioBuffer
from bwaconflict.errors import (
    BufferTooShort,
    DegenerateLabels,
    DimensionMismatch,
    ModelFormatError,
    NonFiniteFeature,
)
from bwaconflict.features import extract_features
from bwaconflict.vad import (
    VadModel,
    cross_validate,
    decision_function,
    filter_speech,
    frame_mask_to_samples,
    grid_search,
    predict,
    smo_solve,
    smooth_decisions,
    train,
)


def blobs(n=100, dim=46, sep=6.0, seed=0):
    rng = np.random.default_rng(seed)
    centre = np.zeros(dim)
    centre[0] = sep / 2
    X = np.vstack([rng.normal(size=(n, dim)) + centre, rng.normal(size=(n, dim)) - centre])
    y = np.r_[np.ones(n, bool), np.zeros(n, bool)]
    return X, y


def xor(n=400, dim=46, seed=1):
    rng = np.random.default_rng(seed)
    X = 0.05 * rng.normal(size=(n, dim))
    X[:, :2] = rng.uniform(-1, 1, size=(n, 2))
    y = (X[:, 0] > 0) ^ (X[:, 1] > 0)
    return X, y


def test_separable_blobs():
    X, y = blobs(sep=10.0)
    m = train(X, y, box_c=1.0, kernel_gamma=0.01)
    assert np.all(predict(m, X)[0] == y)
    Xt, yt = blobs(sep=10.0, seed=5)
    assert np.mean(predict(m, Xt)[0] == yt) >= 0.99


def test_xor():
    X, y = xor()
    m = train(X, y, box_c=10.0, kernel_gamma=0.5)
    assert np.mean(predict(m, X)[0] == y) >= 0.95


def test_deterministic_training():
    X, y = xor(200)
    a, b = train(X, y, 1.0, 0.5), train(X, y, 1.0, 0.5)
    assert np.array_equal(a.support_vectors, b.support_vectors)
    assert np.array_equal(a.dual_coefs, b.dual_coefs) and a.bias == b.bias


def test_dual_bounds_and_objective_monotone():
    X, y = xor(300)
    hist = []
    m = train(X, y, box_c=2.0, kernel_gamma=0.5, history=hist)
    assert np.all(np.abs(m.dual_coefs) <= 2.0 + 1e-12)
    assert np.all(np.diff(hist) >= -1e-9)
    assert np.all(m.feature_stds > 0)


def test_kkt_conditions():
    X, y = xor(300, seed=3)
    ys = np.where(y, 1.0, -1.0)
    Z = (X - X.mean(0)) / X.std(0)
    C, tol = 1.0, 1e-3
    alpha, rho = smo_solve(Z, ys, C, 0.5, tol=tol)
    d2 = ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(-1)
    f = np.exp(-0.5 * d2) @ (alpha * ys) - rho
    margin = ys * f
    assert np.all(margin[alpha <= 0] >= 1 - 2 * tol)
    assert np.all(margin[alpha >= C] <= 1 + 2 * tol)
    free = (alpha > 0) & (alpha < C)
    assert np.all(np.abs(margin[free] - 1) <= 2 * tol)
    # bounded support vectors sit on the side the KKT conditions allow
    at_bound = alpha >= C
    assert np.all((predict_sign := np.sign(f[at_bound])) * ys[at_bound] <= 1 + 2 * tol) or predict_sign.size == 0
    assert abs(np.sum(alpha * ys)) < 1e-9


def test_matches_reference_solver():
    svm = pytest.importorskip("sklearn.svm")
    X, y = xor(300, seed=4)
    m = train(X, y, box_c=1.0, kernel_gamma=0.5)
    Z = (X - m.feature_means) / m.feature_stds
    ref = svm.SVC(C=1.0, gamma=0.5, kernel="rbf", tol=1e-3).fit(Z, np.where(y, 1, -1))
    assert np.max(np.abs(decision_function(m, X) - ref.decision_function(Z))) < 1e-2


def test_lone_support_vector():
    m = VadModel(support_vectors=np.zeros((1, 3)), dual_coefs=np.array([1.0]), bias=0.0,
                 kernel_gamma=1.0, feature_means=np.zeros(3), feature_stds=np.ones(3))
    lab, margin = predict(m, np.zeros((1, 3)))
    assert lab[0] and margin[0] == pytest.approx(1.0)


def test_scaling_invariance():
    X, y = xor(200, seed=6)
    base = predict(train(X, y, 1.0, 0.5), X)[0]
    Xs = X.copy()
    Xs[:, 0] *= 7.5
    Xs[:, 5] *= 0.01
    assert np.array_equal(predict(train(Xs, y, 1.0, 0.5), Xs)[0], base)


def test_errors():
    X, y = blobs(10)
    with pytest.raises(DegenerateLabels):
        train(X, np.ones(len(X), bool))
    bad = X.copy()
    bad[7, 3] = np.nan
    with pytest.raises(NonFiniteFeature) as exc:
        train(bad, y)
    assert exc.value.row == 7
    m = train(X, y)
    with pytest.raises(DimensionMismatch):
        predict(m, X[:, :10])
    with pytest.raises(DimensionMismatch):
        train(X, y[:-1])


def test_model_json_round_trip(tmp_path):
    X, y = blobs(30)
    m = train(X, y, 1.0, 0.01)
    p = tmp_path / "m.json"
    m.save(p)
    back = VadModel.load(p)
    assert np.array_equal(decision_function(back, X), decision_function(m, X))
    with pytest.raises(ModelFormatError):
        VadModel.from_json(m.to_json().replace("bwaconflict-vad/1", "other/2"))
    with pytest.raises(ModelFormatError):
        VadModel.from_json('{"version": "bwaconflict-vad/1"}')


def test_cross_validate_separable_and_shuffled():
    X, y = blobs(100, sep=10.0)
    rep = cross_validate(X, y, folds=10, box_c=1.0, kernel_gamma=0.01)
    assert rep.total_error == 0.0 and len(rep.per_fold_errors) == 10
    rng = np.random.default_rng(7)
    Xn = rng.normal(size=(400, 46))
    yn = rng.permutation(np.r_[np.ones(200, bool), np.zeros(200, bool)])
    rep = cross_validate(Xn, yn, folds=10, box_c=1.0, kernel_gamma=0.01)
    assert abs(rep.total_error - 0.5) <= 0.1
    fp, fn = rep.counts["fp"], rep.counts["fn"]
    assert rep.total_error == pytest.approx((fp + fn) / 400)


def test_cross_validate_needs_rows():
    X, y = blobs(5)
    with pytest.raises(DegenerateLabels):
        cross_validate(X, y, folds=10)


def test_grid_search_picks_from_grid():
    X, y = blobs(40)
    (c, g), scores = grid_search(X, y, folds=3)
    assert len(scores) == 9 and (c, g) in scores
    assert scores[(c, g)] == min(scores.values())


def test_smooth_decisions():
    raw = np.array([1, 0, 1, 1, 1, 0, 0, 1, 0, 0], bool)
    assert smooth_decisions(raw).tolist() == [1, 1, 1, 1, 1, 1, 0, 0, 0, 0]
    assert smooth_decisions(np.ones(3, bool)).all()


def test_mask_to_samples_alignment():
    mask = np.array([True, False, True])
    keep = frame_mask_to_samples(mask, 1600, RATE)
    # frame centres at 480, 800, 1120 samples
    assert keep[480] and not keep[800] and keep[1120]
    assert keep[0] and keep[-1]


def _siren(seconds, centre, depth, rate_hz):
    t = np.arange(int(seconds * RATE)) / RATE
    return np.sin(2 * np.pi * np.cumsum(centre + depth * np.sin(2 * np.pi * rate_hz * t)) / RATE)


def _tone_vs_voice_model():
    """Toy model trained on voice / tone / siren sequences labeled frame by frame.

    Training on sequences (not isolated clips) shows the classifier
    transitions, where the look-ahead mid-term columns are mixed.
    """
    rng = np.random.default_rng(8)
    t = np.arange(RATE) / RATE
    noise = [np.sin(2 * np.pi * f * t) for f in (700, 1100, 1600, 2300)]
    noise += [_siren(1.0, c, d, r) for c, d, r in ((800, 250, 0.4), (1000, 350, 0.7), (850, 300, 0.3))]
    noise += [_siren(1.0, 950, 280, 0.6)]
    parts, labels = [], []
    for k, f0 in enumerate((110, 125, 140, 160, 185, 120, 150, 175)):
        v = harmonic_signal(1.0, f0=f0) + 0.01 * rng.normal(size=RATE)
        parts += [v / np.max(np.abs(v)), noise[k]]
        labels += [1, 0]
    x = np.concatenate(parts)
    fm = extract_features(AudioBuffer(x, RATE))
    centre = ((fm.frame_times + 0.03) // 1.0).astype(int)
    y = np.array(labels)[np.minimum(centre, len(labels) - 1)] == 1
    return train(fm.values, y, box_c=10.0, kernel_gamma=0.05)


def test_filter_speech_rejects_tones():
    m = _tone_vs_voice_model()
    t = np.arange(2 * RATE) / RATE
    out, mask = filter_speech(AudioBuffer(np.sin(2 * np.pi * 1300 * t), RATE), m)
    assert not mask.any() and not out.samples.any()


def test_filter_speech_alternating_alignment():
    m = _tone_vs_voice_model()
    voice = harmonic_signal(1.0, f0=130.0)
    voice /= np.max(np.abs(voice))
    siren = _siren(1.0, 900, 300, 0.5)
    x = np.concatenate([voice, siren, voice, siren])
    out, mask = filter_speech(AudioBuffer(x, RATE), m)
    zeroed = out.samples == 0
    truth = np.zeros(x.size, bool)
    truth[RATE:2 * RATE] = truth[3 * RATE:] = True
    wrong = np.flatnonzero((zeroed != truth) & (x != 0))
    edges = np.array([RATE, 2 * RATE, 3 * RATE])
    assert all(np.min(np.abs(edges - w)) <= 0.1 * RATE for w in wrong)


def test_filter_speech_identity_and_energy():
    m = VadModel(support_vectors=np.zeros((1, 46)), dual_coefs=np.array([0.0]), bias=1.0,
                 kernel_gamma=1.0, feature_means=np.zeros(46), feature_stds=np.ones(46))
    x = np.random.default_rng(9).normal(size=RATE)
    out, mask = filter_speech(AudioBuffer(x, RATE), m)
    assert mask.all() and np.array_equal(out.samples, x)
    m2 = VadModel(**{**m.__dict__, "bias": -1.0})
    out2, _ = filter_speech(AudioBuffer(x, RATE), m2)
    assert np.sum(out2.samples ** 2) <= np.sum(x ** 2)
    with pytest.raises(BufferTooShort):
        filter_speech(AudioBuffer(x[:1000], RATE), m)
