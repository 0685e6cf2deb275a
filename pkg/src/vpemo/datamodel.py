"""Corpus data model and on-disk formats.

Formats
-------
VPFX (frames and embeddings)::

    b"VPFX" | u32 version=1 | u32 kind | u32 dim | u32 num_rows | f32[num_rows*dim]

all little-endian, payload row-major. ``kind`` is 0=frames, 1=speaker,
2=emotion, 3=generic; embeddings have ``num_rows == 1``.

Manifest: JSON lines with the keys ``utt_id, speaker_id, emotion, transcript,
gender, features, speaker_emb, emotion_emb`` in that order (absent -> null).

Trials: ``<enroll_id> <test_id> target|nontarget`` per line.

Scores: ``<enroll_id> <test_id> <score>`` with the score printed to 6 decimals.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimMismatch,
    FormatError,
    MalformedLine,
    NonFiniteValue,
    TruncatedFile,
    UnknownUtterance,
    UnsupportedVersion,
    ValidationError,
)

EMOTIONS = ("Happy", "Neutral", "Sad", "Angry")
GENDERS = ("F", "M", "unknown")

MAGIC = b"VPFX"
VERSION = 1
KIND_CODES = {"frames": 0, "speaker": 1, "emotion": 2, "generic": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
EMBEDDING_KINDS = ("speaker", "emotion", "generic")

_HEADER = struct.Struct("<4sIIII")

MANIFEST_KEYS = (
    "utt_id",
    "speaker_id",
    "emotion",
    "transcript",
    "gender",
    "features",
    "speaker_emb",
    "emotion_emb",
)
_KEY_TO_FIELD = {
    "features": "features_path",
    "speaker_emb": "speaker_emb_path",
    "emotion_emb": "emotion_emb_path",
}


def _frozen_f32(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float32, order="C", copy=True)
    if arr.ndim != ndim:
        raise DimMismatch(f"expected a {ndim}-d array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("array contains NaN or Inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FrameMatrix:
    """Frame-level features of one utterance, shape (num_frames, dim)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_f32(self.data, 2)
        if arr.shape[1] == 0:
            raise DimMismatch("frame dim must be positive")
        object.__setattr__(self, "data", arr)

    @classmethod
    def empty(cls, dim: int) -> "FrameMatrix":
        return cls(np.zeros((0, dim), dtype=np.float32))

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, FrameMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    data: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        if self.kind not in EMBEDDING_KINDS:
            raise ValidationError(f"unknown embedding kind {self.kind!r}")
        arr = _frozen_f32(self.data, 1)
        if arr.shape[0] == 0:
            raise DimMismatch("embedding dim must be positive")
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.kind == other.kind and self.data.tobytes() == other.data.tobytes()

    def __len__(self):
        return self.dim


# ---------------------------------------------------------------------------
# VPFX
# ---------------------------------------------------------------------------


def encode_vpfx(array: np.ndarray, kind: str) -> bytes:
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 1:
        arr = arr[None, :]
    rows, dim = arr.shape
    if dim == 0:
        raise DimMismatch("dim must be positive")
    if not np.isfinite(arr).all():
        raise NonFiniteValue("refusing to write non-finite values")
    return _HEADER.pack(MAGIC, VERSION, KIND_CODES[kind], dim, rows) + np.ascontiguousarray(arr).tobytes()


def decode_vpfx(buf: bytes, path=None) -> tuple[str, np.ndarray]:
    """Parse a VPFX blob; returns (kind name, float32 array of shape (rows, dim))."""
    if len(buf) < 4:
        raise TruncatedFile("header truncated", offset=len(buf), path=path)
    if buf[:4] != MAGIC:
        raise BadMagic(f"bad magic {buf[:4]!r}", offset=0, path=path)
    if len(buf) < _HEADER.size:
        raise TruncatedFile("header truncated", offset=len(buf), path=path)
    _, version, kind, dim, rows = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"version {version}", offset=4, path=path)
    if kind not in KIND_NAMES:
        raise FormatError(f"unknown kind code {kind}", offset=8, path=path)
    if dim == 0:
        raise FormatError("dim must be positive", offset=12, path=path)
    need = _HEADER.size + 4 * dim * rows
    if len(buf) < need:
        raise TruncatedFile(f"expected {need} bytes, got {len(buf)}", offset=len(buf), path=path)
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes", offset=need, path=path)
    arr = np.frombuffer(buf, dtype="<f4", count=dim * rows, offset=_HEADER.size)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise NonFiniteValue("non-finite value", offset=_HEADER.size + 4 * int(bad[0]), path=path)
    return KIND_NAMES[kind], arr.astype(np.float32).reshape(rows, dim)


def read_vpfx(path) -> tuple[str, np.ndarray]:
    return decode_vpfx(Path(path).read_bytes(), path=str(path))


def save_frames(path, frames: FrameMatrix) -> None:
    Path(path).write_bytes(encode_vpfx(frames.data.reshape(frames.num_frames, frames.dim), "frames"))


def load_frames(path) -> FrameMatrix:
    kind, arr = read_vpfx(path)
    if kind != "frames":
        raise FormatError(f"expected frames, found kind {kind!r}", offset=8, path=str(path))
    return FrameMatrix(arr)


def save_embedding(path, emb: EmbeddingVector) -> None:
    Path(path).write_bytes(encode_vpfx(emb.data, emb.kind))


def load_embedding(path, kind: str | None = None) -> EmbeddingVector:
    found, arr = read_vpfx(path)
    if found == "frames":
        raise FormatError("expected an embedding, found frames", offset=8, path=str(path))
    if arr.shape[0] != 1:
        raise FormatError(f"embedding must have 1 row, found {arr.shape[0]}", offset=16, path=str(path))
    if kind is not None and found != kind:
        raise FormatError(f"expected kind {kind!r}, found {found!r}", offset=8, path=str(path))
    return EmbeddingVector(arr[0], kind=found)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    speaker_id: str
    emotion: str | None = None
    transcript: str | None = None
    gender: str | None = None
    features_path: str | None = None
    speaker_emb_path: str | None = None
    emotion_emb_path: str | None = None

    def to_json(self) -> dict:
        return {key: getattr(self, _KEY_TO_FIELD.get(key, key)) for key in MANIFEST_KEYS}

    @classmethod
    def from_json(cls, obj: dict) -> "UtteranceRecord":
        return cls(**{_KEY_TO_FIELD.get(k, k): v for k, v in obj.items()})


@dataclass(frozen=True)
class Manifest:
    records: tuple[UtteranceRecord, ...]
    corpus_name: str = ""
    base_dir: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))

    def __iter__(self) -> Iterator[UtteranceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, utt_id: str) -> UtteranceRecord:
        try:
            return self.index[utt_id]
        except KeyError:
            raise UnknownUtterance(utt_id) from None

    def __contains__(self, utt_id) -> bool:
        return utt_id in self.index

    @property
    def index(self) -> dict[str, UtteranceRecord]:
        cached = self.__dict__.get("_index")
        if cached is None:
            cached = {}
            for rec in self.records:
                cached.setdefault(rec.utt_id, rec)
            object.__setattr__(self, "_index", cached)
        return cached

    @property
    def utt_ids(self) -> list[str]:
        return [r.utt_id for r in self.records]

    def speakers(self) -> list[str]:
        """Speaker ids in order of first appearance."""
        return list(dict.fromkeys(r.speaker_id for r in self.records))

    def by_speaker(self) -> dict[str, list[UtteranceRecord]]:
        out: dict[str, list[UtteranceRecord]] = {}
        for r in self.records:
            out.setdefault(r.speaker_id, []).append(r)
        return out

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def subset(self, utt_ids: Iterable[str], corpus_name: str | None = None) -> "Manifest":
        keep = set(utt_ids)
        return Manifest(
            tuple(r for r in self.records if r.utt_id in keep),
            corpus_name if corpus_name is not None else self.corpus_name,
            self.base_dir,
        )


@dataclass(frozen=True)
class DuplicateId:
    utt_id: str


@dataclass(frozen=True)
class UnknownEmotion:
    utt_id: str
    value: str


@dataclass(frozen=True)
class UnknownGender:
    utt_id: str
    value: str


@dataclass(frozen=True)
class EmptyField:
    utt_id: str
    field: str


def validate_manifest(manifest: Manifest, emotions: Sequence[str] | None = EMOTIONS) -> list:
    """Check manifest invariants; returns a list of violations (empty when valid).

    ``emotions=None`` accepts any non-empty label, for synthetic corpora with
    generic class names.
    """
    violations: list = []
    seen: set[str] = set()
    reported: set[str] = set()
    for rec in manifest.records:
        if not rec.utt_id:
            violations.append(EmptyField(rec.utt_id, "utt_id"))
        if not rec.speaker_id:
            violations.append(EmptyField(rec.utt_id, "speaker_id"))
        if rec.utt_id in seen and rec.utt_id not in reported:
            violations.append(DuplicateId(rec.utt_id))
            reported.add(rec.utt_id)
        seen.add(rec.utt_id)
        if rec.emotion is not None:
            if emotions is None:
                if not rec.emotion:
                    violations.append(UnknownEmotion(rec.utt_id, rec.emotion))
            elif rec.emotion not in emotions:
                violations.append(UnknownEmotion(rec.utt_id, rec.emotion))
        if rec.gender is not None and rec.gender not in GENDERS:
            violations.append(UnknownGender(rec.utt_id, rec.gender))
    return violations


def dumps_manifest(manifest: Manifest) -> str:
    return "".join(json.dumps(r.to_json(), ensure_ascii=False) + "\n" for r in manifest.records)


def save_manifest(path, manifest: Manifest) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding="utf-8")


def load_manifest(path, corpus_name: str | None = None) -> Manifest:
    path = Path(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise MalformedLine(lineno, line.rstrip("\n")) from None
            if not isinstance(obj, dict) or set(obj) - set(MANIFEST_KEYS) or "utt_id" not in obj or "speaker_id" not in obj:
                raise MalformedLine(lineno, line.rstrip("\n"))
            for k, v in obj.items():
                if v is not None and not isinstance(v, str):
                    raise MalformedLine(lineno, line.rstrip("\n"))
            records.append(UtteranceRecord.from_json(obj))
    name = corpus_name if corpus_name is not None else path.name.split(".")[0]
    return Manifest(tuple(records), name, path.parent)


# ---------------------------------------------------------------------------
# Trials and scores
# ---------------------------------------------------------------------------

TARGET = "target"
NONTARGET = "nontarget"


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: str

    @property
    def is_target(self) -> bool:
        return self.label == TARGET


@dataclass(frozen=True)
class TrialList:
    trials: tuple[Trial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))

    def __iter__(self):
        return iter(self.trials)

    def __len__(self):
        return len(self.trials)

    def __getitem__(self, i):
        return self.trials[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.is_target for t in self.trials], dtype=bool)


@dataclass(frozen=True)
class ScoreSet:
    entries: tuple[tuple[str, str, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((e, t, float(s)) for e, t, s in self.entries))
        for e, t, s in self.entries:
            if not math.isfinite(s):
                raise NonFiniteValue(f"non-finite score for ({e}, {t})")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def scores(self) -> np.ndarray:
        return np.array([s for _, _, s in self.entries], dtype=np.float64)


def dumps_trials(trials: TrialList) -> str:
    return "".join(f"{t.enroll_id} {t.test_id} {t.label}\n" for t in trials)


def save_trials(path, trials: TrialList) -> None:
    Path(path).write_text(dumps_trials(trials), encoding="utf-8")


def load_trials(path, manifest: Manifest | None = None) -> TrialList:
    """Read a trials file; when ``manifest`` is given every id must resolve."""
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3 or parts[2] not in (TARGET, NONTARGET):
                raise MalformedLine(lineno, line.rstrip("\n"))
            enroll, test, label = parts
            if manifest is not None:
                for uid in (enroll, test):
                    if uid not in manifest:
                        raise UnknownUtterance(uid, lineno)
            out.append(Trial(enroll, test, label))
    return TrialList(tuple(out))


def dumps_scores(scores: ScoreSet) -> str:
    return "".join(f"{e} {t} {s:.6f}\n" for e, t, s in scores)


def save_scores(path, scores: ScoreSet) -> None:
    Path(path).write_text(dumps_scores(scores), encoding="utf-8")


def load_scores(path) -> ScoreSet:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise MalformedLine(lineno, line.rstrip("\n"))
            try:
                value = float(parts[2])
            except ValueError:
                raise MalformedLine(lineno, line.rstrip("\n")) from None
            if not math.isfinite(value):
                raise NonFiniteValue(f"non-finite score on line {lineno}", path=str(path))
            out.append((parts[0], parts[1], value))
    return ScoreSet(tuple(out))
