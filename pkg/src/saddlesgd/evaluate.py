"""Evaluation metrics and the epoch-time scaling model."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .data import SparseDataset


class SingleClassError(ValueError):
    """Area under the precision-recall curve needs both classes present."""


class ScalingFitError(ValueError):
    pass


def _scores(w: np.ndarray, test: SparseDataset) -> np.ndarray:
    if test.d > w.shape[0]:
        warnings.warn(
            f"test data has {test.d} features, model has {w.shape[0]}; extras ignored",
            stacklevel=2,
        )
        keep = test.row_cols < w.shape[0]
        prod = np.where(keep, test.row_vals * w[np.minimum(test.row_cols, w.shape[0] - 1)], 0.0)
        return np.bincount(test.row_index, weights=prod, minlength=test.m)
    return test.dots(w)


def eval_test_error(w: np.ndarray, test: SparseDataset) -> float:
    """Misclassification rate of sign(<w, x>); a score of exactly 0 counts
    as an error (deterministic, pessimistic tie rule).

    Works on folded data too: there the labels are all +1 and the rows carry
    the sign, which gives the same margin.
    """
    scores = _scores(w, test)
    margins = scores * test.labels
    return float(np.mean(margins <= 0.0))


def eval_auprc(w_or_scores, test: SparseDataset) -> float:
    """Area under the precision-recall curve, step-wise with ties grouped.

    Thresholds sweep the distinct scores from high to low; each group of
    tied scores enters at once, and the area accumulates precision times
    recall increment per group.  With all scores equal this reduces to the
    positive rate.
    """
    if test.folded:
        raise ValueError("ranking metrics need original labels; evaluate on unfolded data")
    scores = (
        np.asarray(w_or_scores, dtype=float)
        if np.asarray(w_or_scores).shape == (test.m,)
        else _scores(np.asarray(w_or_scores, dtype=float), test)
    )
    pos = test.labels > 0
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == test.m:
        raise SingleClassError("test set contains a single class")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = pos[order]
    # group boundaries where the sorted score changes
    boundary = np.flatnonzero(np.diff(s_sorted) != 0.0)
    ends = np.append(boundary, test.m - 1)
    tp_cum = np.cumsum(y_sorted)[ends]
    n_cum = ends + 1
    precision = tp_cum / n_cum
    recall = tp_cum / n_pos
    d_recall = np.diff(np.concatenate(([0.0], recall)))
    return float(np.sum(precision * d_recall))


@dataclass(frozen=True)
class ScalingModel:
    """Epoch-time model t(p) = compute_coeff / p + comm_coeff (seconds)."""

    compute_coeff: float  # total per-epoch update work, divided across workers
    comm_coeff: float  # per-epoch synchronization cost, constant in p

    def predict(self, p) -> np.ndarray | float:
        return self.compute_coeff / np.asarray(p, dtype=float) + self.comm_coeff

    @property
    def valid(self) -> bool:
        return self.compute_coeff > 0 and self.comm_coeff >= 0


def fit_scaling_model(samples) -> ScalingModel:
    """Least-squares fit of (p, epoch_time) pairs over the basis {1/p, 1}.

    With exactly two distinct worker counts this interpolates them exactly.
    """
    samples = list(samples)
    ps = np.array([float(p) for p, _ in samples])
    ts = np.array([float(t) for _, t in samples])
    if len(set(ps.tolist())) < 2:
        raise ScalingFitError("need timings for at least two distinct worker counts")
    design = np.column_stack([1.0 / ps, np.ones_like(ps)])
    coeffs, *_ = np.linalg.lstsq(design, ts, rcond=None)
    return ScalingModel(compute_coeff=float(coeffs[0]), comm_coeff=float(coeffs[1]))


def scaling_r_squared(model: ScalingModel, samples) -> float:
    ps = np.array([float(p) for p, _ in samples])
    ts = np.array([float(t) for _, t in samples])
    resid = ts - model.predict(ps)
    total = ts - ts.mean()
    denom = float(total @ total)
    if denom == 0.0:
        return float("nan")
    return 1.0 - float(resid @ resid) / denom


@dataclass(frozen=True)
class EvalReport:
    test_error: float
    auprc: float | None = None
    primal: float | None = None
    dual: float | None = None
    gap: float | None = None

    def to_json(self) -> str:
        out = {"test_error": self.test_error}
        for key in ("auprc", "primal", "dual", "gap"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return json.dumps(out)
