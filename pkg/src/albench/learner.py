"""Baseline segmentation learner: a per-pixel logistic model over
multi-scale box features, trained with the combo loss (smoothed negated
Dice plus mean binary cross-entropy) by full-batch gradient descent.

The estimator follows the sklearn API (fit/predict/predict_proba/transform,
get_params) so it composes with the wider ecosystem; it also backs the
LearnerPort contract the harness consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.special import expit
from sklearn.base import BaseEstimator

from .data import PatchRecord
from .validation import check_probability_map, check_same_shape

DEFAULT_SCALES = (3, 7, 15)


@dataclass(frozen=True)
class LearnerConfig:
    scales: tuple[int, ...] = DEFAULT_SCALES
    learning_rate: float = 0.05
    epochs: int = 40
    smoothing: float = 1.0
    prob_clamp: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if any(s < 3 or s % 2 == 0 for s in self.scales):
            raise ValueError(f"scales must be odd and >= 3, got {self.scales}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if not 0.0 < self.prob_clamp < 0.5:
            raise ValueError("prob_clamp must lie in (0, 0.5)")
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))


def feature_count(channels: int, scales: tuple[int, ...]) -> int:
    """Raw intensity channels plus (mean, std, gradient-magnitude) per scale."""
    return channels + 3 * len(scales)


def extract_features(patch: PatchRecord, scales=DEFAULT_SCALES) -> np.ndarray:
    """Deterministic multi-scale features, shape (F, H, W).

    Channels: the raw intensities, then per scale the box mean, the box
    standard deviation, and the gradient magnitude of the box-mean map
    (central differences, reflective padding at borders). Per-scale
    features are computed on the across-channel mean intensity.
    """
    image = patch.image
    h, w = image.shape[1], image.shape[2]
    for s in scales:
        if s > h or s > w:
            raise ValueError(f"scale {s} larger than patch side ({h}x{w})")
    gray = image.mean(axis=0)
    channels = [image[c] for c in range(image.shape[0])]
    for s in scales:
        mean = ndimage.uniform_filter(gray, size=s, mode="reflect")
        mean_sq = ndimage.uniform_filter(gray * gray, size=s, mode="reflect")
        var = np.maximum(mean_sq - mean * mean, 0.0)
        std = np.sqrt(var)
        gy = ndimage.correlate1d(mean, [-0.5, 0.0, 0.5], axis=0, mode="reflect")
        gx = ndimage.correlate1d(mean, [-0.5, 0.0, 0.5], axis=1, mode="reflect")
        grad = np.hypot(gy, gx)
        channels.extend([mean, std, grad])
    return np.stack(channels, axis=0)


# ---------------------------------------------------------------------------
# combo loss


def combo_loss(p: np.ndarray, y: np.ndarray, smoothing: float = 1.0) -> float:
    """Smoothed negated-Dice term plus mean binary cross-entropy.

    (-2 p.y + S) / (sum(p) + sum(y) + S)  -  (1/q) [y.log p + (1-y).log(1-p)]
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(p, y, "p and y")
    q = p.size
    num = -2.0 * float(np.dot(p.ravel(), y.ravel())) + smoothing
    denom = float(p.sum() + y.sum()) + smoothing
    dice = num / denom
    bce = -(np.sum(y * np.log(p)) + np.sum((1.0 - y) * np.log(1.0 - p))) / q
    return dice + float(bce)


def combo_loss_grad(p: np.ndarray, y: np.ndarray, smoothing: float = 1.0) -> np.ndarray:
    """Analytic gradient of combo_loss w.r.t. each probability entry."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    check_same_shape(p, y, "p and y")
    q = p.size
    num = -2.0 * float(np.dot(p.ravel(), y.ravel())) + smoothing
    denom = float(p.sum() + y.sum()) + smoothing
    dice_grad = -2.0 * y / denom - num / (denom * denom)
    bce_grad = -(y / p - (1.0 - y) / (1.0 - p)) / q
    return dice_grad + bce_grad


def combo_loss_grad_logits(z: np.ndarray, y: np.ndarray, smoothing: float = 1.0) -> np.ndarray:
    """Gradient w.r.t. pre-logistic activations (chains p(1-p) through)."""
    p = expit(np.asarray(z, dtype=np.float64))
    return combo_loss_grad(p, y, smoothing) * p * (1.0 - p)


# ---------------------------------------------------------------------------
# estimator


class MultiScaleLogisticSegmenter(BaseEstimator):
    """Per-pixel logistic segmenter over multi-scale box features.

    Parameters mirror LearnerConfig. Weights start at zero (bias included),
    so an unfitted or 0-epoch model predicts exactly 0.5 everywhere, and
    training is a pure function of its inputs.

    Attributes set by fit: ``weights_`` (length F+1, bias last),
    ``n_features_``, ``loss_history_`` (length epochs+1: entry e is the mean
    combo loss after e epochs).
    """

    def __init__(self, scales=DEFAULT_SCALES, learning_rate=0.05, epochs=40,
                 smoothing=1.0, prob_clamp=1e-7, seed=0):
        self.scales = scales
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.smoothing = smoothing
        self.prob_clamp = prob_clamp
        self.seed = seed

    @classmethod
    def from_config(cls, config: LearnerConfig) -> "MultiScaleLogisticSegmenter":
        return cls(scales=config.scales, learning_rate=config.learning_rate,
                   epochs=config.epochs, smoothing=config.smoothing,
                   prob_clamp=config.prob_clamp, seed=config.seed)

    @property
    def config(self) -> LearnerConfig:
        return LearnerConfig(scales=tuple(self.scales), learning_rate=self.learning_rate,
                             epochs=self.epochs, smoothing=self.smoothing,
                             prob_clamp=self.prob_clamp, seed=self.seed)

    def embedding_dim(self, channels: int = 1) -> int:
        return 2 * feature_count(channels, tuple(self.scales))

    # -- training ----------------------------------------------------------

    def fit(self, patches, y=None, features=None):
        """Full-batch gradient descent on the mean combo loss.

        patches: non-empty sequence of PatchRecord (masks are the targets).
        features: optional precomputed list of (F, H, W) arrays aligned with
        patches, as produced by extract_features (a pure function of the
        patch, so caching it outside never changes the fit).
        """
        self.config  # validate parameters
        patches = list(patches)
        if not patches:
            raise ValueError("labeled set must be non-empty")
        if features is None:
            features = [extract_features(p, tuple(self.scales)) for p in patches]
        mats = []
        targets = []
        for patch, feats in zip(patches, features):
            f, h, w = feats.shape
            mats.append(feats.reshape(f, h * w).T)
            targets.append(patch.mask.astype(np.float64).ravel())
        n_features = mats[0].shape[1]
        if any(m.shape[1] != n_features for m in mats):
            raise ValueError("inconsistent feature counts across patches")
        sizes = np.array([t.size for t in targets])
        x = np.vstack(mats)
        t = np.concatenate(targets)
        bounds = np.concatenate([[0], np.cumsum(sizes)])

        w_full = np.zeros(n_features + 1, dtype=np.float64)
        n = len(patches)
        lr = float(self.learning_rate)
        smoothing = float(self.smoothing)
        starts = bounds[:-1]
        t_sum = np.add.reduceat(t, starts)
        history = []
        for epoch in range(int(self.epochs) + 1):
            z = x @ w_full[:-1] + w_full[-1]
            p = self._clamp(expit(z))
            # per-patch combo loss and its gradient, segment-wise
            dot = np.add.reduceat(p * t, starts)
            p_sum = np.add.reduceat(p, starts)
            num = -2.0 * dot + smoothing
            denom = p_sum + t_sum + smoothing
            log_terms = t * np.log(p) + (1.0 - t) * np.log(1.0 - p)
            bce = -np.add.reduceat(log_terms, starts) / sizes
            loss = float(np.mean(num / denom + bce))
            history.append(loss)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} (learning_rate={lr})"
                )
            if epoch == int(self.epochs):
                break
            denom_e = np.repeat(denom, sizes)
            dice_grad = -2.0 * t / denom_e - np.repeat(num, sizes) / (denom_e * denom_e)
            bce_grad = -(t / p - (1.0 - t) / (1.0 - p)) / np.repeat(sizes, sizes)
            grad_z = (dice_grad + bce_grad) * p * (1.0 - p)
            grad_w = (x.T @ grad_z) / n
            grad_b = float(grad_z.sum()) / n
            w_full[:-1] -= lr * grad_w
            w_full[-1] -= lr * grad_b

        self.weights_ = w_full
        self.n_features_ = n_features
        self.loss_history_ = history
        return self

    def _clamp(self, p: np.ndarray) -> np.ndarray:
        eps = float(self.prob_clamp)
        return np.clip(p, eps, 1.0 - eps)

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise RuntimeError("model is not fitted")
        if not np.all(np.isfinite(self.weights_)):
            raise FloatingPointError("model weights are non-finite")

    # -- inference ---------------------------------------------------------

    def predict_proba(self, patch: PatchRecord, features=None) -> np.ndarray:
        """Per-pixel defect probability, clamped to [eps, 1-eps]."""
        self._check_fitted()
        if features is None:
            features = extract_features(patch, tuple(self.scales))
        f, h, w = features.shape
        if f != self.n_features_:
            raise ValueError(f"expected {self.n_features_} feature channels, got {f}")
        z = features.reshape(f, h * w).T @ self.weights_[:-1] + self.weights_[-1]
        p = self._clamp(expit(z)).reshape(h, w)
        return check_probability_map(p, clamp=float(self.prob_clamp))

    def predict(self, patch: PatchRecord, features=None) -> np.ndarray:
        """Thresholded mask (probability > 0.5)."""
        return (self.predict_proba(patch, features) > 0.5).astype(np.uint8)

    def transform(self, patches, features=None) -> np.ndarray:
        """Embedding matrix for a sequence of patches (rows L2-normalized)."""
        rows = []
        for i, patch in enumerate(patches):
            feats = None if features is None else features[i]
            rows.append(self.embed(patch, feats))
        return np.asarray(rows, dtype=np.float64)

    def embed(self, patch: PatchRecord, features=None) -> np.ndarray:
        """Global mean and std of every feature channel, L2-normalized.

        Dimension is 2F. The all-zero vector maps to itself (documented
        degenerate case for a fully constant zero patch).
        """
        if features is None:
            features = extract_features(patch, tuple(self.scales))
        means = features.mean(axis=(1, 2))
        stds = features.std(axis=(1, 2))
        vec = np.concatenate([means, stds])
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return vec
        return vec / norm
