"""Evaluation metrics: cosine similarity, EER, UAR, WER and table averaging."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np

from . import kernels
from .datamodel import EmbeddingVector, ScoreSet, TrialList
from .errors import (
    DimMismatch,
    EmptyInput,
    EmptyReference,
    LengthMismatch,
    NoTrials,
    UnknownLabel,
    ZeroVector,
)


def _as_vec(x) -> np.ndarray:
    if isinstance(x, EmbeddingVector):
        return x.data.astype(np.float64)
    return np.asarray(x, dtype=np.float64).ravel()


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    u, v = _as_vec(a), _as_vec(b)
    if u.shape != v.shape:
        raise DimMismatch(f"dims differ: {u.shape[0]} vs {v.shape[0]}")
    nu = math.sqrt(float(u @ u))
    nv = math.sqrt(float(v @ v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return min(1.0, max(-1.0, float(u @ v) / (nu * nv)))


# ---------------------------------------------------------------------------
# EER
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    num_target: int
    num_nontarget: int

    def to_json(self) -> dict:
        return {
            "eer": self.eer,
            "threshold": self.threshold,
            "num_target": self.num_target,
            "num_nontarget": self.num_nontarget,
        }


def split_scores(scores: ScoreSet, trials: TrialList) -> tuple[np.ndarray, np.ndarray]:
    """Target and nontarget score arrays from aligned scores and trials."""
    if len(scores) != len(trials):
        raise LengthMismatch(f"{len(scores)} scores for {len(trials)} trials")
    for (e, t, _), trial in zip(scores, trials):
        if e != trial.enroll_id or t != trial.test_id:
            raise LengthMismatch(f"score entry ({e}, {t}) does not match trial ({trial.enroll_id}, {trial.test_id})")
    values = scores.scores
    labels = trials.labels
    return values[labels], values[~labels]


def eer_from_scores(target_scores, nontarget_scores) -> EerResult:
    """EER with decision rule ``accept if score >= threshold``.

    Every distinct score is a candidate threshold (plus +inf, where all trials
    are rejected). FAR - FRR is non-increasing along the candidates; the EER is
    read at the first candidate where it reaches zero, linearly interpolating
    from the previous candidate when it jumps across.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise NoTrials()
    thresholds = np.unique(np.concatenate((tar, non)))
    far = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    frr = np.searchsorted(tar, thresholds, side="left") / tar.size
    thresholds = np.append(thresholds, np.inf)
    far = np.append(far, 0.0)
    frr = np.append(frr, 1.0)
    gap = far - frr
    j = int(np.argmax(gap <= 0.0))
    if gap[j] == 0.0:
        return EerResult(float(far[j]), float(thresholds[j]), tar.size, non.size)
    alpha = gap[j - 1] / (gap[j - 1] - gap[j])
    eer = far[j - 1] + alpha * (far[j] - far[j - 1])
    if np.isfinite(thresholds[j]):
        thr = thresholds[j - 1] + alpha * (thresholds[j] - thresholds[j - 1])
    else:
        thr = thresholds[j - 1]
    return EerResult(float(eer), float(thr), tar.size, non.size)


def compute_eer(scores: ScoreSet, trials: TrialList) -> EerResult:
    tar, non = split_scores(scores, trials)
    return eer_from_scores(tar, non)


# ---------------------------------------------------------------------------
# UAR
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows = reference, columns = prediction

    def to_json(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


@dataclass(frozen=True)
class UarResult:
    uar: float
    confusion: ConfusionMatrix
    recalls: dict = field(default_factory=dict)
    missing_classes: tuple = ()

    def to_json(self) -> dict:
        return {
            "uar": self.uar,
            "recalls": dict(self.recalls),
            "missing_classes": list(self.missing_classes),
            "confusion": self.confusion.to_json(),
        }


def compute_uar(refs: Sequence[Hashable], preds: Sequence[Hashable], classes: Sequence[Hashable]) -> UarResult:
    """Unweighted mean of per-class recall.

    Classes with no reference instance are left out of the mean and listed in
    ``missing_classes``.
    """
    if len(refs) != len(preds):
        raise LengthMismatch(f"{len(refs)} references vs {len(preds)} predictions")
    if len(refs) == 0:
        raise EmptyInput("no labels to score")
    classes = tuple(classes)
    pos = {c: i for i, c in enumerate(classes)}
    if len(pos) != len(classes):
        raise UnknownLabel("duplicate class in class list")
    try:
        r_idx = np.array([pos[r] for r in refs], dtype=np.int64)
        p_idx = np.array([pos[p] for p in preds], dtype=np.int64)
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]!r} not in classes") from None
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(counts, (r_idx, p_idx), 1)
    support = counts.sum(axis=1)
    recalls = {}
    exact = []
    for i, c in enumerate(classes):
        if support[i] > 0:
            exact.append(Fraction(int(counts[i, i]), int(support[i])))
            recalls[c] = float(exact[-1])
    missing = tuple(c for i, c in enumerate(classes) if support[i] == 0)
    # rational mean, rounded once
    uar = float(sum(exact) / len(exact))
    return UarResult(uar, ConfusionMatrix(classes, counts), recalls, missing)


# ---------------------------------------------------------------------------
# WER
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TextNormConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    keep_apostrophe: bool = True


def normalize_text(s: str, config: TextNormConfig | None = None) -> list[str]:
    """Tokenise a transcript for WER scoring."""
    config = config or TextNormConfig()
    if config.lowercase:
        s = s.lower()
    chars = []
    for ch in s:
        if ch.isspace():
            chars.append(" ")
        elif not config.strip_punctuation or ch.isalnum() or (ch == "'" and config.keep_apostrophe):
            chars.append(ch)
    return "".join(chars).split()


@dataclass(frozen=True)
class WerResult:
    wer: float
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def to_json(self) -> dict:
        return {
            "wer": self.wer,
            "substitutions": self.substitutions,
            "deletions": self.deletions,
            "insertions": self.insertions,
            "ref_len": self.ref_len,
        }


def _token_ids(ref: Sequence[str], hyp: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    vocab: dict[str, int] = {}
    r = np.array([vocab.setdefault(t, len(vocab)) for t in ref], dtype=np.int64)
    h = np.array([vocab.setdefault(t, len(vocab)) for t in hyp], dtype=np.int64)
    return r, h


def compute_wer(ref_tokens: Sequence[str], hyp_tokens: Sequence[str]) -> WerResult:
    """Minimum edit distance alignment with unit costs."""
    if len(ref_tokens) == 0:
        raise EmptyReference("reference has no tokens")
    r, h = _token_ids(ref_tokens, hyp_tokens)
    table = kernels.edit_table(r, h)
    s, d, i = kernels.edit_backtrace(table, r, h)
    s, d, i = int(s), int(d), int(i)
    return WerResult((s + d + i) / len(r), s, d, i, len(r))


def corpus_wer(pairs) -> WerResult:
    """Pool errors over (ref_tokens, hyp_tokens) pairs; empty references count zero words."""
    s = d = i = n = 0
    for ref, hyp in pairs:
        if len(ref) == 0:
            i += len(hyp)
            continue
        res = compute_wer(ref, hyp)
        s += res.substitutions
        d += res.deletions
        i += res.insertions
        n += res.ref_len
    if n == 0:
        raise EmptyReference("no reference tokens in corpus")
    return WerResult((s + d + i) / n, s, d, i, n)


def average(values: Sequence[float]) -> float:
    """Arithmetic mean (the ``avg.`` column of the report tables)."""
    values = [float(v) for v in values]
    if not values:
        raise EmptyInput("average of nothing")
    return math.fsum(values) / len(values)
