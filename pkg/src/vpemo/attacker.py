"""Semi-informed verification attacker.

The attacker sees anonymized training data labelled with the *original*
speaker ids and scores (enroll, test) trials by cosine similarity. Two
backends: ``centroid`` (length-normalised embeddings, centred on the training
mean) and ``probe`` (hidden layer of a speaker classifier trained on the
anonymized data).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .datamodel import EmbeddingVector, Manifest, ScoreSet, TrialList
from .errors import InvalidConfig, MissingEmbedding, NoTrials, UnknownUtterance, ValidationError, ZeroVector
from .metrics import EerResult, average, compute_eer

NORM_POLICIES = ("length_norm_then_mean_then_renorm", "raw_mean")


def _vec(x) -> np.ndarray:
    if isinstance(x, EmbeddingVector):
        return x.data.astype(np.float64)
    return np.asarray(x, dtype=np.float64).ravel()


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ZeroVector(f"{what} has zero norm")
    return v / n


def centroid_of(vectors: Sequence[np.ndarray], policy: str = NORM_POLICIES[0], what: str = "embedding") -> np.ndarray:
    if policy not in NORM_POLICIES:
        raise InvalidConfig(f"unknown norm policy {policy!r}")
    if policy == "raw_mean":
        return np.mean(np.stack(vectors), axis=0)
    mean = np.mean(np.stack([_unit(v, what) for v in vectors]), axis=0)
    return _unit(mean, f"centroid of {what}")


@dataclass
class CentroidModel:
    centroids: dict[str, np.ndarray]
    norm_policy: str = NORM_POLICIES[0]
    global_mean: np.ndarray | None = field(default=None, repr=False)

    def transform(self, mat: np.ndarray) -> np.ndarray:
        """Length-normalise rows and subtract the training mean."""
        mat = np.asarray(mat, dtype=np.float64)
        norms = np.linalg.norm(mat, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ZeroVector("cannot score a zero embedding")
        out = mat / norms
        if self.global_mean is not None:
            out = out - self.global_mean
        return out


def train_centroid(manifest: Manifest, embeddings: Mapping[str, object], norm_policy: str = NORM_POLICIES[0]) -> CentroidModel:
    """Per-speaker centroids over the manifest's utterance embeddings."""
    groups: dict[str, list[np.ndarray]] = {}
    for rec in manifest:
        if rec.utt_id not in embeddings:
            raise MissingEmbedding(rec.utt_id)
        groups.setdefault(rec.speaker_id, []).append(_vec(embeddings[rec.utt_id]))
    if not groups:
        raise ValidationError("no training utterances")
    cents = {spk: centroid_of(vs, norm_policy, f"speaker {spk}") for spk, vs in groups.items()}
    allv = [v for vs in groups.values() for v in vs]
    if norm_policy == "raw_mean":
        gmean = np.mean(np.stack(allv), axis=0)
    else:
        gmean = np.mean(np.stack([_unit(v, "embedding") for v in allv]), axis=0)
    return CentroidModel(cents, norm_policy, gmean)


def score_trials(
    source: Mapping[str, object],
    trials: TrialList,
    enrollment: Mapping[str, Sequence[str]] | None = None,
    norm_policy: str = NORM_POLICIES[0],
) -> ScoreSet:
    """Cosine score per trial, in trial order.

    ``enrollment`` maps an enroll model id to several utterance ids; that
    model's embedding is then the centroid of those utterances.
    """
    cache: dict[str, np.ndarray] = {}

    def lookup(uid: str, enroll: bool) -> np.ndarray:
        if uid in cache:
            return cache[uid]
        if enroll and enrollment is not None and uid in enrollment:
            members = []
            for m in enrollment[uid]:
                if m not in source:
                    raise UnknownUtterance(m)
                members.append(_vec(source[m]))
            v = centroid_of(members, norm_policy, f"enrollment {uid}")
        elif uid in source:
            v = _vec(source[uid])
        else:
            raise UnknownUtterance(uid)
        v = _unit(v, uid)
        cache[uid] = v
        return v

    out = []
    for t in trials:
        a = lookup(t.enroll_id, True)
        b = lookup(t.test_id, False)
        if a.shape != b.shape:
            raise ValidationError(f"embedding dims differ for trial ({t.enroll_id}, {t.test_id})")
        out.append((t.enroll_id, t.test_id, min(1.0, max(-1.0, float(a @ b)))))
    return ScoreSet(tuple(out))


@dataclass
class PrivacyReport:
    per_subset: dict[str, EerResult]
    average: float

    def to_json(self) -> dict:
        return {"per_subset": {k: v.to_json() for k, v in self.per_subset.items()}, "average": self.average}


def evaluate_privacy(subsets: Mapping[str, tuple[ScoreSet, TrialList]]) -> PrivacyReport:
    """EER per subset (in input order) and their mean."""
    if not subsets:
        raise ValidationError("no subsets to evaluate")
    per = {}
    for name, (scores, trials) in subsets.items():
        try:
            per[name] = compute_eer(scores, trials)
        except NoTrials as exc:
            raise NoTrials(str(exc), subset=name) from None
    return PrivacyReport(per, average([r.eer for r in per.values()]))
