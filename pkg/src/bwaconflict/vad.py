"""Speech / non-speech classification with an RBF-kernel SVM.

The soft-margin dual is solved by SMO with second-order working-set
selection (maximal violating pair on the first index, largest guaranteed
objective gain on the second).  Kernel columns are computed on demand and
kept in a bounded LRU cache, so memory stays linear in the training size.
"""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer
from .errors import (
    BufferTooShort,
    DegenerateLabels,
    DimensionMismatch,
    ModelFormatError,
    NonFiniteFeature,
)
from .features import MID_FRAME_S, SHORT_FRAME_S, SHORT_STEP_S, extract_features

log = logging.getLogger(__name__)

MODEL_VERSION = "bwaconflict-vad/1"
C_GRID = (0.1, 1.0, 10.0)
GAMMA_GRID = (0.01, 0.1, 1.0)
SMOOTH_FRAMES = 5


@dataclass(frozen=True)
class VadModel:
    support_vectors: np.ndarray     # z-scored rows, (n_sv, n_features)
    dual_coefs: np.ndarray          # y_i * alpha_i
    bias: float
    kernel_gamma: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    box_c: float = 1.0
    version: str = MODEL_VERSION

    @property
    def n_features(self) -> int:
        return self.feature_means.shape[0]

    def to_json(self) -> str:
        doc = {
            "version": self.version,
            "gamma": self.kernel_gamma,
            "bias": self.bias,
            "box_c": self.box_c,
            "means": self.feature_means.tolist(),
            "stds": self.feature_stds.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "VadModel":
        doc = json.loads(text)
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
        try:
            sv = np.asarray(doc["support_vectors"], dtype=np.float64)
            means = np.asarray(doc["means"], dtype=np.float64)
            model = cls(
                support_vectors=sv.reshape(-1, means.shape[0]),
                dual_coefs=np.asarray(doc["dual_coefs"], dtype=np.float64),
                bias=float(doc["bias"]),
                kernel_gamma=float(doc["gamma"]),
                feature_means=means,
                feature_stds=np.asarray(doc["stds"], dtype=np.float64),
                box_c=float(doc.get("box_c", np.inf)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"malformed model: {exc}") from exc
        if model.dual_coefs.shape[0] != model.support_vectors.shape[0]:
            raise ModelFormatError("dual_coefs and support_vectors disagree in length")
        return model

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "VadModel":
        with open(path) as fh:
            return cls.from_json(fh.read())


@dataclass
class CvReport:
    false_positive_rate: float
    false_negative_rate: float
    total_error: float
    per_fold_errors: list
    counts: dict = field(default_factory=dict)

    def table(self) -> str:
        return ("False Positive  False Negative  Total Error\n"
                f"{100 * self.false_positive_rate:13.2f}%  {100 * self.false_negative_rate:13.2f}%"
                f"  {100 * self.total_error:10.2f}%")


# --------------------------------------------------------------------- SMO


class _KernelColumns:
    """RBF kernel columns of the training matrix with an LRU cache."""

    def __init__(self, X: np.ndarray, gamma: float, cache_mb: float = 256):
        self.X = X
        self.gamma = gamma
        self.sq = np.einsum("ij,ij->i", X, X)
        self.capacity = max(2, int(cache_mb * 2 ** 20 / (8 * X.shape[0])))
        self.cache: OrderedDict = OrderedDict()

    def __call__(self, i: int) -> np.ndarray:
        col = self.cache.get(i)
        if col is not None:
            self.cache.move_to_end(i)
            return col
        d2 = self.sq + self.sq[i] - 2.0 * (self.X @ self.X[i])
        col = np.exp(-self.gamma * np.maximum(d2, 0.0))
        self.cache[i] = col
        if len(self.cache) > self.capacity:
            self.cache.popitem(last=False)
        return col


def smo_solve(X: np.ndarray, y: np.ndarray, box_c: float, gamma: float,
              tol: float = 1e-3, max_iter: int | None = None, history=None):
    """Solve the C-SVM dual; returns (alpha, rho).

    ``history`` (a list) receives the dual objective after every update.
    """
    n = X.shape[0]
    kern = _KernelColumns(X, gamma)
    alpha = np.zeros(n)
    grad = -np.ones(n)           # gradient of 0.5 a'Qa - e'a
    pos = y > 0
    max_iter = max_iter or max(10_000_000, 100 * n)
    tau = 1e-12

    for it in range(max_iter):
        ygrad = -y * grad
        up = (pos & (alpha < box_c)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < box_c))
        cand = np.where(up, ygrad, -np.inf)
        i = int(np.argmax(cand))
        m_up = cand[i]
        m_low = np.min(np.where(low, ygrad, np.inf))
        if m_up - m_low < tol:
            break

        k_i = kern(i)
        b = m_up - ygrad
        a = np.maximum(2.0 - 2.0 * k_i, tau)   # K_ii = K_tt = 1 for RBF
        gain = np.where(low & (b > 0), b * b / a, -np.inf)
        j = int(np.argmax(gain))
        k_j = kern(j)

        yi, yj = y[i], y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        quad = max(2.0 - 2.0 * k_i[j], tau)
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > box_c:
                    ai, aj = box_c, box_c - diff
            elif aj > box_c:
                aj, ai = box_c, box_c + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > box_c:
                if ai > box_c:
                    ai, aj = box_c, total - box_c
            elif aj < 0:
                aj, ai = 0.0, total
            if total > box_c:
                if aj > box_c:
                    aj, ai = box_c, total - box_c
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # Q_it = y_i y_t K_it
        grad += y * (yi * (ai - ai_old) * k_i + yj * (aj - aj_old) * k_j)
        if history is not None:
            history.append(float(-0.5 * alpha @ (grad - 1.0)))
    else:
        log.warning("SMO stopped at max_iter=%d before reaching tolerance", max_iter)

    yg = y * grad
    free = (alpha > 0) & (alpha < box_c)
    if np.any(free):
        rho = float(np.mean(yg[free]))
    else:
        ub_mask = (pos & (alpha >= box_c)) | (~pos & (alpha <= 0))
        lb_mask = (pos & (alpha <= 0)) | (~pos & (alpha >= box_c))
        ub = np.min(yg[ub_mask]) if np.any(ub_mask) else np.inf
        lb = np.max(yg[lb_mask]) if np.any(lb_mask) else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else 0.0
    return alpha, rho


# ------------------------------------------------------------------ public


def _as_labels(labels) -> np.ndarray:
    lab = np.asarray(labels)
    if lab.dtype == bool:
        return np.where(lab, 1.0, -1.0)
    vals = set(np.unique(lab).tolist())
    if vals <= {0, 1}:
        return np.where(lab == 1, 1.0, -1.0)
    if vals <= {-1, 1}:
        return lab.astype(np.float64)
    raise ValueError(f"labels must be binary, got values {sorted(vals)[:5]}")


def _matrix(features) -> np.ndarray:
    X = getattr(features, "values", features)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("features must be a 2-D matrix")
    bad = ~np.all(np.isfinite(X), axis=1)
    if np.any(bad):
        raise NonFiniteFeature(int(np.argmax(bad)))
    return X


def train(features, labels, box_c: float = 1.0, kernel_gamma: float = 0.1,
          tol: float = 1e-3, history=None) -> VadModel:
    """Fit the speech (+1) / non-speech (-1) classifier."""
    X = _matrix(features)
    y = _as_labels(labels)
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if np.sum(y > 0) < 2 or np.sum(y < 0) < 2:
        raise DegenerateLabels("need at least two rows of each class")
    if box_c <= 0 or kernel_gamma <= 0:
        raise ValueError("box_c and kernel_gamma must be positive")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    Z = (X - means) / stds
    alpha, rho = smo_solve(Z, y, box_c, kernel_gamma, tol=tol, history=history)
    sv = alpha > 0
    return VadModel(
        support_vectors=Z[sv].copy(),
        dual_coefs=(alpha * y)[sv],
        bias=-rho,
        kernel_gamma=float(kernel_gamma),
        feature_means=means,
        feature_stds=stds,
        box_c=float(box_c),
    )


def decision_function(model: VadModel, features, chunk: int = 4096) -> np.ndarray:
    X = _matrix(features)
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} columns, got {X.shape[1]}")
    Z = (X - model.feature_means) / model.feature_stds
    sv = model.support_vectors
    sv_sq = np.einsum("ij,ij->i", sv, sv)
    out = np.empty(Z.shape[0])
    for a in range(0, Z.shape[0], chunk):
        z = Z[a:a + chunk]
        d2 = np.einsum("ij,ij->i", z, z)[:, None] + sv_sq[None, :] - 2.0 * (z @ sv.T)
        out[a:a + chunk] = np.exp(-model.kernel_gamma * np.maximum(d2, 0.0)) @ model.dual_coefs
    return out + model.bias


def predict(model: VadModel, features):
    """Return (labels, margins); label is True for speech (margin > 0)."""
    margin = decision_function(model, features)
    return margin > 0, margin


def _stratified_folds(y: np.ndarray, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    assign = np.empty(y.shape[0], dtype=int)
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = np.arange(idx.size) % folds
    return assign


def cross_validate(features, labels, folds: int = 10, box_c: float = 1.0,
                   kernel_gamma: float = 0.1, seed: int = 0) -> CvReport:
    """Stratified k-fold error; FP counts non-speech called speech."""
    X = _matrix(features)
    y = _as_labels(labels)
    if min(np.sum(y > 0), np.sum(y < 0)) < folds:
        raise DegenerateLabels(f"each class needs at least {folds} rows")
    assign = _stratified_folds(y, folds, seed)
    fp = fn = 0
    per_fold = []
    for f in range(folds):
        test = assign == f
        model = train(X[~test], y[~test], box_c, kernel_gamma)
        speech, _ = predict(model, X[test])
        truth = y[test] > 0
        f_fp = int(np.sum(speech & ~truth))
        f_fn = int(np.sum(~speech & truth))
        fp, fn = fp + f_fp, fn + f_fn
        per_fold.append((f_fp + f_fn) / int(test.sum()))
        log.info("fold %d/%d error %.4f", f + 1, folds, per_fold[-1])
    n_pos, n_neg = int(np.sum(y > 0)), int(np.sum(y < 0))
    return CvReport(
        false_positive_rate=fp / n_neg,
        false_negative_rate=fn / n_pos,
        total_error=(fp + fn) / y.shape[0],
        per_fold_errors=per_fold,
        counts={"speech": n_pos, "non_speech": n_neg, "fp": fp, "fn": fn},
    )


def grid_search(features, labels, c_grid=C_GRID, gamma_grid=GAMMA_GRID,
                folds: int = 3, seed: int = 0, max_rows: int = 3000):
    """Pick (box_c, kernel_gamma) by CV error on a seeded class-balanced subsample."""
    X = _matrix(features)
    y = _as_labels(labels)
    if X.shape[0] > max_rows:
        rng = np.random.default_rng(seed)
        keep = []
        for cls in (1.0, -1.0):
            idx = np.flatnonzero(y == cls)
            keep.append(np.sort(rng.choice(idx, size=min(idx.size, max_rows // 2), replace=False)))
        keep = np.concatenate(keep)
        X, y = X[keep], y[keep]
    scores = {}
    for c in c_grid:
        for g in gamma_grid:
            scores[(c, g)] = cross_validate(X, y, folds, c, g, seed).total_error
    best = min(scores, key=lambda k: (scores[k], k[0], k[1]))
    return best, scores


def smooth_decisions(labels, width: int = SMOOTH_FRAMES) -> np.ndarray:
    """Centered majority vote over ``width`` frames (edges replicated)."""
    lab = np.asarray(labels, dtype=bool)
    if lab.size == 0 or width <= 1:
        return lab.copy()
    half = width // 2
    padded = np.pad(lab.astype(int), half, mode="edge")
    votes = np.convolve(padded, np.ones(width, dtype=int), mode="valid")
    return votes * 2 > width


def frame_mask_to_samples(mask, n_samples: int, rate: int) -> np.ndarray:
    """Assign every sample to the short frame whose centre is nearest."""
    mask = np.asarray(mask, dtype=bool)
    hop = int(round(SHORT_STEP_S * rate))
    half = int(round(SHORT_FRAME_S * rate)) / 2
    idx = np.rint((np.arange(n_samples) - half) / hop).astype(int)
    return mask[np.clip(idx, 0, mask.size - 1)]


def filter_speech(buf: AudioBuffer, model: VadModel):
    """Zero non-speech; returns (filtered buffer, per-frame speech mask)."""
    if buf.duration < MID_FRAME_S:
        raise BufferTooShort(f"{buf.duration:.3f} s < {MID_FRAME_S} s")
    fm = extract_features(buf)
    raw, _ = predict(model, fm)
    mask = smooth_decisions(raw)
    keep = frame_mask_to_samples(mask, len(buf), buf.sample_rate)
    return AudioBuffer(buf.samples * keep, buf.sample_rate, band=buf.band), mask
