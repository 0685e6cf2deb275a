"""kNN voice conversion in feature space.

Every source frame is replaced by the unweighted mean of the ``k`` pool frames
most similar to it. The pool is the concatenated frames of one target speaker.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .datamodel import FrameMatrix
from .errors import DimMismatch, InvalidConfig, PoolTooSmall, ValidationError, ZeroNormFrame

FRAMES_PER_SECOND = 50
SIMILARITIES = ("cosine", "neg_euclidean")


@dataclass(frozen=True)
class KnnVcConfig:
    k: int = 4
    similarity: str = "cosine"
    # 5 minutes of audio at 50 frames/s
    min_pool_frames: int = 5 * 60 * FRAMES_PER_SECOND
    enforce_pool_size: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfig("k must be >= 1")
        if self.similarity not in SIMILARITIES:
            raise InvalidConfig(f"similarity must be one of {SIMILARITIES}")
        if self.min_pool_frames < 0:
            raise InvalidConfig("min_pool_frames must be >= 0")


@dataclass(frozen=True, eq=False)
class TargetPool:
    frames: FrameMatrix
    source_utts: tuple[str, ...] = ()
    min_frames_required: int = 0
    _data64: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "source_utts", tuple(self.source_utts))
        if self._data64 is None:
            object.__setattr__(self, "_data64", self.frames.data.astype(np.float64))

    @property
    def num_frames(self) -> int:
        return self.frames.num_frames

    @property
    def dim(self) -> int:
        return self.frames.dim


def build_pool(
    target_utterances: Sequence[FrameMatrix],
    config: KnnVcConfig | None = None,
    utt_ids: Sequence[str] | None = None,
) -> TargetPool:
    config = config or KnnVcConfig()
    if not target_utterances:
        raise ValidationError("need at least one target utterance")
    dims = {fm.dim for fm in target_utterances}
    if len(dims) != 1:
        raise DimMismatch(f"target utterances have differing dims {sorted(dims)}")
    data = np.concatenate([fm.data for fm in target_utterances], axis=0)
    if (np.abs(data).max(axis=1, initial=0.0) == 0.0).any():
        raise ZeroNormFrame(f"pool frame {int(np.flatnonzero(np.abs(data).max(axis=1) == 0)[0])} has zero norm")
    required = config.min_pool_frames if config.enforce_pool_size else 0
    if data.shape[0] < required:
        raise PoolTooSmall(data.shape[0], required)
    return TargetPool(FrameMatrix(data), tuple(utt_ids or ()), required)


def convert_frames(source: np.ndarray, pool: TargetPool, config: KnnVcConfig | None = None) -> np.ndarray:
    """Array-level conversion; returns float64 frames."""
    config = config or KnnVcConfig()
    source = np.ascontiguousarray(source, dtype=np.float64)
    if source.ndim != 2 or source.shape[1] != pool.dim:
        raise DimMismatch(f"source dim {source.shape[-1]} != pool dim {pool.dim}")
    if pool.num_frames < config.k:
        raise PoolTooSmall(pool.num_frames, config.k)
    if source.shape[0] == 0:
        return np.zeros((0, pool.dim))
    return kernels.knn_convert(source, pool._data64, config.k, config.similarity == "cosine")


def convert_utterance(source: FrameMatrix, pool: TargetPool, config: KnnVcConfig | None = None) -> FrameMatrix:
    return FrameMatrix(convert_frames(source.data, pool, config))
