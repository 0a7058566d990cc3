"""Cosine trial scoring and equal error rate."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateInputError, EvaluationError, ShapeError
from .fileio import Trial

__all__ = ["cosine_score", "ScoreSet", "EERResult", "compute_eer", "score_trials"]


def cosine_score(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"embeddings differ in width: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cannot score a zero-norm embedding")
    return float(np.clip(np.dot(a / na, b / nb), -1.0, 1.0))


@dataclass
class ScoreSet:
    """Parallel arrays of trial scores and target flags."""

    scores: np.ndarray
    is_target: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.is_target = np.asarray(self.is_target, dtype=bool).reshape(-1)
        if self.scores.shape != self.is_target.shape:
            raise ShapeError("scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise EvaluationError("scores must be finite")

    @classmethod
    def from_lists(cls, targets: Sequence[float], nontargets: Sequence[float]) -> ScoreSet:
        return cls(
            np.concatenate([np.asarray(targets, float), np.asarray(nontargets, float)]),
            np.r_[np.ones(len(targets), bool), np.zeros(len(nontargets), bool)],
        )


@dataclass(frozen=True)
class EERResult:
    eer: float
    threshold: float

    @property
    def percent(self) -> float:
        return 100.0 * self.eer


def compute_eer(s: ScoreSet) -> EERResult:
    """Equal error rate over the sweep of all distinct score thresholds.

    At threshold t, FAR = P(nontarget >= t) and FRR = P(target < t).  The
    sweep ends at +inf (FAR 0, FRR 1).  Where FAR - FRR hits zero exactly
    that rate is returned; otherwise both rates are interpolated linearly
    between the two thresholds that bracket the sign change.
    """
    n_tar = int(s.is_target.sum())
    n_non = s.is_target.size - n_tar
    if n_tar == 0 or n_non == 0:
        raise EvaluationError("EER needs at least one target and one nontarget score")

    thresholds = np.unique(s.scores)
    order = np.argsort(s.scores, kind="stable")
    sorted_scores = s.scores[order]
    sorted_target = s.is_target[order]
    # counts strictly below each threshold
    below = np.searchsorted(sorted_scores, thresholds, side="left")
    tar_below = np.concatenate([[0], np.cumsum(sorted_target)])[below]
    non_below = below - tar_below

    # rates as integer numerators over n_non and n_tar so crossings are exact
    far_num = np.append(n_non - non_below, 0)
    frr_num = np.append(tar_below, n_tar)
    ts = np.append(thresholds, np.inf)
    diff = far_num * n_tar - frr_num * n_non

    k = int(np.argmax(diff <= 0))  # diff[0] > 0 and diff[-1] < 0, so k >= 1
    if diff[k] == 0:
        return EERResult(int(far_num[k]) / n_non, float(ts[k]))
    alpha = Fraction(int(diff[k - 1]), int(diff[k - 1] - diff[k]))
    far_prev, far_next = Fraction(int(far_num[k - 1]), n_non), Fraction(int(far_num[k]), n_non)
    eer = far_prev + alpha * (far_next - far_prev)
    if np.isinf(ts[k]):
        thresh = ts[k - 1]
    else:
        thresh = ts[k - 1] + float(alpha) * (ts[k] - ts[k - 1])
    return EERResult(float(eer), float(thresh))


def score_trials(trials: Sequence[Trial], store: Mapping[str, np.ndarray]) -> list[float]:
    """Cosine score for every trial; unknown ids raise ``KeyError``."""
    out = []
    for t in trials:
        for key in (t.enroll_id, t.test_id):
            if key not in store:
                raise KeyError(f"no embedding for utterance {key!r}")
        out.append(cosine_score(store[t.enroll_id], store[t.test_id]))
    return out
