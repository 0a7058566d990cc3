"""Synthetic speakers and the desk-scale aggregator comparison.

An utterance is a run of frames.  Speech frames are the speaker mean plus
isotropic noise.  A fraction of frames are non-speech: they share a random
per-utterance offset (think a burst of channel noise) and carry a negative
value on the first feature, which plays the role of a voicing cue.  A mean
over all frames drags the non-speech offset into the embedding; an attentive
aggregator can learn to look past it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .aggregator import AggregatorConfig
from .errors import ConfigError
from .evaluation import ScoreSet, compute_eer
from .training import TrainConfig, TrainResult, embed_all, fit

__all__ = [
    "SyntheticSpeakerSet",
    "train_toy",
    "evaluate_eer",
    "all_pairs",
    "ComparisonResult",
    "compare_with_mean_pooling",
]


@dataclass(frozen=True)
class SyntheticSpeakerSet:
    means: np.ndarray  # speakers x dim
    noise: float = 1.0
    frames_mean: int = 40
    frames_jitter: int = 8
    nonspeech_rate: float = 0.3
    nonspeech_scale: float = 2.0

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] < 2:
            raise ConfigError("need a speakers x dim matrix with at least two speakers")
        if len({m.tobytes() for m in means}) != means.shape[0]:
            raise ConfigError("speaker means must be distinct")
        if self.noise <= 0:
            raise ConfigError("noise scale must be positive")
        if self.frames_mean - self.frames_jitter < 1:
            raise ConfigError("frame count range must stay positive")
        if not 0.0 <= self.nonspeech_rate < 1.0:
            raise ConfigError("nonspeech_rate must lie in [0, 1)")
        object.__setattr__(self, "means", means)

    @classmethod
    def generate(cls, n_speakers: int, dim: int, seed: int, spread: float = 1.0, **kwargs) -> SyntheticSpeakerSet:
        rng = np.random.default_rng([seed, 0])
        means = spread * rng.standard_normal((n_speakers, dim))
        means[:, 0] = 1.0  # speech frames are voiced
        return cls(means, **kwargs)

    @property
    def n_speakers(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def utterance(self, speaker: int, rng: np.random.Generator) -> np.ndarray:
        n = int(rng.integers(self.frames_mean - self.frames_jitter, self.frames_mean + self.frames_jitter + 1))
        frames = self.means[speaker] + self.noise * rng.standard_normal((n, self.dim))
        silent = rng.random(n) < self.nonspeech_rate
        if silent.any():
            offset = self.nonspeech_scale * rng.standard_normal(self.dim)
            offset[0] = -1.0
            k = int(silent.sum())
            frames[silent] = offset + self.noise * rng.standard_normal((k, self.dim))
        return frames

    def sample(self, utts_per_speaker: int, rng: np.random.Generator) -> tuple[list[np.ndarray], list[int]]:
        utts, labels = [], []
        for s in range(self.n_speakers):
            for _ in range(utts_per_speaker):
                utts.append(self.utterance(s, rng))
                labels.append(s)
        return utts, labels


def train_toy(spec: SyntheticSpeakerSet, cfg: AggregatorConfig, tc: TrainConfig) -> TrainResult:
    """Train trunk + aggregator + classifier on ``tc.utts_per_speaker`` utterances per speaker."""
    utts, labels = spec.sample(tc.utts_per_speaker, np.random.default_rng([tc.seed, 3]))
    return fit(utts, labels, cfg, tc)


def all_pairs(labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index pairs (i < j) of every trial and whether each is a same-speaker pair."""
    labels = np.asarray(labels)
    i, j = np.triu_indices(len(labels), k=1)
    return i, j, labels[i] == labels[j]


def evaluate_eer(embeddings: np.ndarray, labels) -> float:
    """EER of cosine scoring over all utterance pairs."""
    e = embeddings / np.linalg.norm(embeddings, axis=1, keepdims=True)
    i, j, same = all_pairs(labels)
    scores = np.einsum("ij,ij->i", e[i], e[j])
    return compute_eer(ScoreSet(scores, same)).eer


@dataclass
class ComparisonResult:
    seed: int
    gat_eer: float
    baseline_eer: float
    gat_losses: list
    baseline_losses: list

    @property
    def gat_wins(self) -> bool:
        return self.gat_eer < self.baseline_eer


def compare_with_mean_pooling(
    seed: int,
    cfg: AggregatorConfig,
    tc: TrainConfig,
    n_speakers: int = 20,
    dim: int = 16,
    eval_utts: int = 4,
    **spec_kwargs,
) -> ComparisonResult:
    """Train ``cfg`` and the mean-pooling baseline on the same data, trunk seed and loss.

    Both are scored on held-out utterances of the training speakers.
    """
    spec = SyntheticSpeakerSet.generate(n_speakers, dim, seed, **spec_kwargs)
    tc = replace(tc, seed=seed)
    cfg = replace(cfg, seed=seed)
    baseline = AggregatorConfig(in_dim=cfg.in_dim, topology="mean_pool", seed=seed)

    eval_x, eval_y = spec.sample(eval_utts, np.random.default_rng([seed, 4]))
    out = {}
    for name, c in (("gat", cfg), ("base", baseline)):
        res = train_toy(spec, c, tc)
        out[name] = (evaluate_eer(embed_all(eval_x, c, res.params), eval_y), res.loss_curve)
    return ComparisonResult(seed, out["gat"][0], out["base"][0], out["gat"][1], out["base"][1])
