"""Emotion-proxy prompt selection.

For a source utterance, pick a synthesis prompt from another speaker whose
emotion representation is close to the source's: sample a candidate pool,
rank it by cosine similarity, draw uniformly from the best few.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .datamodel import EmbeddingVector, Manifest
from .errors import DimMismatch, EmptyParts, InvalidConfig, NoCandidates, ZeroVector


@dataclass(frozen=True)
class EmotionRepresentation:
    parts: tuple[EmbeddingVector, ...]
    combined: EmbeddingVector

    @property
    def dim(self) -> int:
        return self.combined.dim


@dataclass(frozen=True)
class ProxyConfig:
    pool_size: int = 5000
    top_n: int = 10
    exclude_same_speaker: bool = True
    normalize_parts: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.top_n < 1:
            raise InvalidConfig("top_n must be >= 1")
        if self.pool_size < self.top_n:
            raise InvalidConfig("pool_size must be >= top_n")


def concat_emotion_embedding(parts, normalize_parts: bool = True, registry: Sequence[str] | None = None) -> EmotionRepresentation:
    """Concatenate per-recognizer embeddings, optionally unit-normalising each first.

    ``parts`` is a sequence, or a mapping recognizer name -> embedding whose
    order is fixed by ``registry`` (sorted names when omitted).
    """
    if len(parts) == 0:
        raise EmptyParts("no embedding parts given")
    if isinstance(parts, Mapping):
        names = list(registry) if registry is not None else sorted(parts)
        missing = [n for n in names if n not in parts]
        if missing or len(names) != len(parts):
            raise EmptyParts(f"parts do not match the recognizer registry (missing {missing})")
        parts = [parts[n] for n in names]
    vecs = [p if isinstance(p, EmbeddingVector) else EmbeddingVector(np.asarray(p), "emotion") for p in parts]
    chunks = []
    for v in vecs:
        x = v.data.astype(np.float64)
        if normalize_parts:
            n = np.linalg.norm(x)
            if n == 0.0:
                raise ZeroVector("cannot normalise a zero embedding part")
            x = x / n
        chunks.append(x)
    return EmotionRepresentation(tuple(vecs), EmbeddingVector(np.concatenate(chunks), "emotion"))


def _vector(rep) -> np.ndarray:
    if isinstance(rep, EmotionRepresentation):
        rep = rep.combined
    if isinstance(rep, EmbeddingVector):
        return rep.data.astype(np.float64)
    return np.asarray(rep, dtype=np.float64).ravel()


class PromptCorpus:
    """Candidate prompts with unit-normalised emotion vectors, in manifest order."""

    def __init__(self, utt_ids: Sequence[str], speaker_ids: Sequence[str], vectors):
        self.utt_ids = tuple(utt_ids)
        self.speaker_ids = tuple(speaker_ids)
        mat = np.asarray(vectors, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != len(self.utt_ids) or len(self.speaker_ids) != len(self.utt_ids):
            raise DimMismatch("candidate ids, speakers and vectors disagree in length")
        norms = np.linalg.norm(mat, axis=1)
        if (norms == 0).any():
            bad = self.utt_ids[int(np.flatnonzero(norms == 0)[0])]
            raise ZeroVector(f"candidate {bad} has a zero emotion vector")
        self.unit = mat / norms[:, None]
        self.raw = mat

    @classmethod
    def from_manifest(cls, manifest: Manifest, reps: Mapping[str, object]) -> "PromptCorpus":
        ids, spk, vecs = [], [], []
        for rec in manifest:
            if rec.utt_id not in reps:
                continue
            ids.append(rec.utt_id)
            spk.append(rec.speaker_id)
            vecs.append(_vector(reps[rec.utt_id]))
        if not vecs:
            raise NoCandidates("no candidate has an emotion representation")
        return cls(ids, spk, np.stack(vecs))

    def __len__(self):
        return len(self.utt_ids)

    @property
    def dim(self) -> int:
        return self.unit.shape[1]


@dataclass(frozen=True)
class Selection:
    source_id: str | None
    chosen_id: str
    similarity: float
    rank: int  # 1-based position in the ranked sample

    def to_json(self) -> dict:
        return {"source": self.source_id, "chosen": self.chosen_id, "similarity": self.similarity, "rank": self.rank}


def rank_candidates(source, corpus: PromptCorpus, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order candidate indices by descending cosine similarity, ties by utt_id."""
    src = _vector(source)
    if src.shape[0] != corpus.dim:
        raise DimMismatch(f"source dim {src.shape[0]} != candidate dim {corpus.dim}")
    n = np.linalg.norm(src)
    if n == 0.0:
        raise ZeroVector("source emotion vector is zero")
    sims = corpus.unit[indices] @ (src / n)
    sims = np.clip(sims, -1.0, 1.0)
    order = sorted(range(len(indices)), key=lambda q: (-sims[q], corpus.utt_ids[indices[q]]))
    order = np.asarray(order, dtype=np.int64)
    return indices[order], sims[order]


def select_prompt(
    source,
    corpus: PromptCorpus,
    config: ProxyConfig | None = None,
    rng: np.random.Generator | None = None,
    source_speaker: str | None = None,
    source_id: str | None = None,
) -> Selection:
    """Pick one prompt for ``source`` from ``corpus``.

    Candidates from ``source_speaker`` (when exclusion is on) and the source
    utterance itself are never eligible.
    """
    config = config or ProxyConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    eligible = np.arange(len(corpus))
    keep = np.ones(len(corpus), dtype=bool)
    if config.exclude_same_speaker and source_speaker is not None:
        keep &= np.array([s != source_speaker for s in corpus.speaker_ids], dtype=bool)
    if source_id is not None:
        keep &= np.array([u != source_id for u in corpus.utt_ids], dtype=bool)
    eligible = eligible[keep]
    if eligible.size == 0:
        raise NoCandidates(f"no eligible prompt for {source_id or 'source'}")
    size = min(config.pool_size, eligible.size)
    sample = np.sort(rng.choice(eligible, size=size, replace=False))
    ranked, sims = rank_candidates(source, corpus, sample)
    top = min(config.top_n, size)
    pick = int(rng.integers(top))
    return Selection(source_id, corpus.utt_ids[ranked[pick]], float(sims[pick]), pick + 1)


def save_selection_log(path, selections: Sequence[Selection]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for sel in selections:
            fh.write(json.dumps(sel.to_json()) + "\n")
