"""Synthetic corpora with a tunable speaker/emotion entanglement knob.

Generative model, per speaker ``i`` and utterance with emotion class ``e``::

    s_i      ~ N(0, I)                                 speaker latent
    emotion  = rho * M s_i + c_e + eps
    speaker  = s_i + eps'
    frame_t  = content_t + P s_i + R c_e + eps''_t

``M``, ``P``, ``R`` are fixed seeded gaussian maps and the class centres
``c_e`` are orthogonal directions, so ``rho`` alone controls how much speaker
identity leaks into the emotion embedding. All noise terms have standard
deviation ``noise_sigma``.

:class:`SynthExtractor` inverts the frame model (least squares on the
utterance-mean frame), standing in for the out-of-process speaker and emotion
extractors when anonymized frames need embeddings.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import (
    EMOTIONS,
    EmbeddingVector,
    FrameMatrix,
    Manifest,
    Trial,
    TrialList,
    UtteranceRecord,
    load_embedding,
    load_frames,
    load_manifest,
    save_embedding,
    save_frames,
    save_manifest,
)
from .errors import InvalidConfig, NotEnoughSpeakers, NotEnoughUtterances, ValidationError

# substream tags mixed into the corpus seed
_LATENTS, _SPEAKERS, _UTTS = 0, 1, 2


@dataclass(frozen=True)
class SynthConfig:
    num_speakers: int = 40
    utts_per_speaker: int = 30
    emotion_classes: int = 4
    speaker_dim: int = 16
    emotion_dim: int = 16
    frame_dim: int = 48
    rho: float = 0.8
    noise_sigma: float = 0.3
    frames_per_utt: tuple[int, int] = (20, 40)
    seed: int = 0
    # speakers and utterances draw from this seed when set; latent maps always use ``seed``
    speaker_seed: int | None = None
    center_scale: float = 3.0
    content_sigma: float = 1.0
    speaker_frame_gain: float = 1.0
    emotion_frame_gain: float = 1.0
    words_per_utt: tuple[int, int] = (5, 12)
    vocab_size: int = 200
    speaker_prefix: str = "spk"
    # class prior; None means uniform
    emotion_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames_per_utt", tuple(self.frames_per_utt))
        object.__setattr__(self, "words_per_utt", tuple(self.words_per_utt))
        for name in ("num_speakers", "utts_per_speaker", "emotion_classes", "speaker_dim", "emotion_dim", "frame_dim", "vocab_size"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidConfig("rho must lie in [0, 1]")
        if self.noise_sigma < 0 or self.content_sigma < 0:
            raise InvalidConfig("noise levels must be >= 0")
        if self.emotion_classes > self.emotion_dim:
            raise InvalidConfig("emotion_classes must not exceed emotion_dim")
        lo, hi = self.frames_per_utt
        if not 1 <= lo <= hi:
            raise InvalidConfig("frames_per_utt must be a range 1 <= lo <= hi")
        if self.emotion_weights is not None:
            w = tuple(float(x) for x in self.emotion_weights)
            if len(w) != self.emotion_classes or min(w) < 0 or sum(w) <= 0:
                raise InvalidConfig("emotion_weights needs one non-negative weight per class")
            object.__setattr__(self, "emotion_weights", w)
        wlo, whi = self.words_per_utt
        if not 1 <= wlo <= whi:
            raise InvalidConfig("words_per_utt must be a range 1 <= lo <= hi")

    @property
    def emotion_labels(self) -> tuple[str, ...]:
        if self.emotion_classes == len(EMOTIONS):
            return EMOTIONS
        return tuple(f"E{i}" for i in range(self.emotion_classes))

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise InvalidConfig(f"unknown synth config keys {sorted(unknown)}")
        return cls(**obj)


@dataclass
class SynthTruth:
    M: np.ndarray
    P: np.ndarray
    R: np.ndarray
    centers: np.ndarray  # (classes, emotion_dim)
    speaker_latents: dict[str, np.ndarray]
    classes: tuple[str, ...]
    rho: float

    def to_json(self) -> dict:
        return {
            "M": self.M.tolist(),
            "P": self.P.tolist(),
            "R": self.R.tolist(),
            "centers": self.centers.tolist(),
            "speaker_latents": {k: v.tolist() for k, v in self.speaker_latents.items()},
            "classes": list(self.classes),
            "rho": self.rho,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SynthTruth":
        return cls(
            np.array(obj["M"]),
            np.array(obj["P"]),
            np.array(obj["R"]),
            np.array(obj["centers"]),
            {k: np.array(v) for k, v in obj["speaker_latents"].items()},
            tuple(obj["classes"]),
            float(obj["rho"]),
        )


@dataclass
class SynthCorpus:
    manifest: Manifest
    speaker_embs: dict[str, EmbeddingVector]
    emotion_embs: dict[str, EmbeddingVector]
    frames: dict[str, FrameMatrix]
    truth: SynthTruth
    config: SynthConfig | None = None
    extra: dict = field(default_factory=dict)

    def write(self, out_dir) -> Path:
        """Write manifest.jsonl, VPFX artifacts and truth.json under ``out_dir``."""
        out = Path(out_dir)
        for sub in ("frames", "spk", "emo"):
            (out / sub).mkdir(parents=True, exist_ok=True)
        records = []
        for rec in self.manifest:
            uid = rec.utt_id
            fpath = spath = epath = None
            if uid in self.frames:
                fpath = f"frames/{uid}.vpfx"
                save_frames(out / fpath, self.frames[uid])
            if uid in self.speaker_embs:
                spath = f"spk/{uid}.vpfx"
                save_embedding(out / spath, self.speaker_embs[uid])
            if uid in self.emotion_embs:
                epath = f"emo/{uid}.vpfx"
                save_embedding(out / epath, self.emotion_embs[uid])
            records.append(
                UtteranceRecord(rec.utt_id, rec.speaker_id, rec.emotion, rec.transcript, rec.gender, fpath, spath, epath)
            )
        save_manifest(out / "manifest.jsonl", Manifest(tuple(records), self.manifest.corpus_name))
        meta = {"truth": self.truth.to_json()}
        if self.config is not None:
            meta["config"] = asdict(self.config)
        (out / "truth.json").write_text(json.dumps(meta, sort_keys=True), encoding="utf-8")
        return out


def load_corpus(corpus_dir) -> SynthCorpus:
    d = Path(corpus_dir)
    manifest = load_manifest(d / "manifest.jsonl", corpus_name=d.name)
    meta = json.loads((d / "truth.json").read_text(encoding="utf-8"))
    spk, emo, frames = {}, {}, {}
    for rec in manifest:
        if rec.features_path:
            frames[rec.utt_id] = load_frames(manifest.resolve(rec.features_path))
        if rec.speaker_emb_path:
            spk[rec.utt_id] = load_embedding(manifest.resolve(rec.speaker_emb_path))
        if rec.emotion_emb_path:
            emo[rec.utt_id] = load_embedding(manifest.resolve(rec.emotion_emb_path))
    cfg = SynthConfig.from_dict(meta["config"]) if "config" in meta else None
    return SynthCorpus(manifest, spk, emo, frames, SynthTruth.from_json(meta["truth"]), cfg)


def _centers(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((cfg.emotion_dim, cfg.emotion_classes)))
    # orthonormal columns: pairwise distance is scale * sqrt(2)
    scale = max(cfg.center_scale, 4.0 * cfg.noise_sigma / np.sqrt(2.0))
    return scale * q.T


def generate_corpus(config: SynthConfig | None = None, corpus_name: str = "synth") -> SynthCorpus:
    cfg = config or SynthConfig()
    lat = np.random.default_rng([cfg.seed, _LATENTS])
    M = lat.standard_normal((cfg.emotion_dim, cfg.speaker_dim)) / np.sqrt(cfg.speaker_dim)
    P = cfg.speaker_frame_gain * lat.standard_normal((cfg.frame_dim, cfg.speaker_dim)) / np.sqrt(cfg.speaker_dim)
    R = cfg.emotion_frame_gain * lat.standard_normal((cfg.frame_dim, cfg.emotion_dim)) / np.sqrt(cfg.emotion_dim)
    centers = _centers(cfg, lat)
    classes = cfg.emotion_labels

    records = []
    spk_embs, emo_embs, frames = {}, {}, {}
    latents = {}
    sigma = cfg.noise_sigma
    width = max(3, len(str(cfg.num_speakers - 1)))
    uwidth = max(3, len(str(cfg.utts_per_speaker - 1)))
    sseed = cfg.seed if cfg.speaker_seed is None else cfg.speaker_seed
    prior = None if cfg.emotion_weights is None else np.asarray(cfg.emotion_weights) / sum(cfg.emotion_weights)
    index = 0
    for i in range(cfg.num_speakers):
        spk = f"{cfg.speaker_prefix}{i:0{width}d}"
        s = np.random.default_rng([sseed, _SPEAKERS, i]).standard_normal(cfg.speaker_dim)
        latents[spk] = s
        gender = "F" if i % 2 == 0 else "M"
        ms, ps = M @ s, P @ s
        for j in range(cfg.utts_per_speaker):
            rng = np.random.default_rng([sseed, _UTTS, index])
            index += 1
            uid = f"{spk}-u{j:0{uwidth}d}"
            if prior is None:
                e = int(rng.integers(cfg.emotion_classes))
            else:
                e = int(rng.choice(cfg.emotion_classes, p=prior))
            emo = cfg.rho * ms + centers[e] + sigma * rng.standard_normal(cfg.emotion_dim)
            spv = s + sigma * rng.standard_normal(cfg.speaker_dim)
            T = int(rng.integers(cfg.frames_per_utt[0], cfg.frames_per_utt[1] + 1))
            content = cfg.content_sigma * rng.standard_normal((T, cfg.frame_dim))
            fr = content + ps + R @ centers[e] + sigma * rng.standard_normal((T, cfg.frame_dim))
            nwords = int(rng.integers(cfg.words_per_utt[0], cfg.words_per_utt[1] + 1))
            words = " ".join(f"w{w}" for w in rng.integers(cfg.vocab_size, size=nwords))
            records.append(UtteranceRecord(uid, spk, classes[e], words, gender))
            spk_embs[uid] = EmbeddingVector(spv, "speaker")
            emo_embs[uid] = EmbeddingVector(emo, "emotion")
            frames[uid] = FrameMatrix(fr)
    truth = SynthTruth(M, P, R, centers, latents, classes, cfg.rho)
    return SynthCorpus(Manifest(tuple(records), corpus_name), spk_embs, emo_embs, frames, truth, cfg)


class SynthExtractor:
    """Least-squares readout of (speaker, emotion) embeddings from frames."""

    def __init__(self, truth: SynthTruth):
        self.truth = truth
        self.sdim = truth.P.shape[1]
        self.readout = np.linalg.pinv(np.hstack([truth.P, truth.R]))

    def extract(self, frames: FrameMatrix) -> tuple[EmbeddingVector, EmbeddingVector]:
        if frames.num_frames == 0:
            raise ValidationError("cannot extract embeddings from an empty utterance")
        z = self.readout @ frames.data.astype(np.float64).mean(axis=0)
        s_hat, c_hat = z[: self.sdim], z[self.sdim:]
        emo = self.truth.rho * (self.truth.M @ s_hat) + c_hat
        return EmbeddingVector(s_hat, "speaker"), EmbeddingVector(emo, "emotion")


def generate_trials(manifest: Manifest, num_target: int, num_nontarget: int, seed: int = 0) -> TrialList:
    """Sample distinct same-speaker and cross-speaker pairs without replacement.

    Pairs are oriented in manifest order; the returned list is shuffled.
    """
    ids = manifest.utt_ids
    spk = np.array([r.speaker_id for r in manifest])
    if len(set(spk.tolist())) < 2 and num_nontarget > 0:
        raise NotEnoughSpeakers("nontarget trials need at least two speakers")
    a, b = np.triu_indices(len(ids), k=1)
    same = spk[a] == spk[b]
    tar_a, tar_b = a[same], b[same]
    non_a, non_b = a[~same], b[~same]
    if num_target > tar_a.size:
        raise NotEnoughUtterances(f"{num_target} target pairs requested, {tar_a.size} available")
    if num_nontarget > non_a.size:
        raise NotEnoughUtterances(f"{num_nontarget} nontarget pairs requested, {non_a.size} available")
    rng = np.random.default_rng(seed)
    ti = np.sort(rng.choice(tar_a.size, size=num_target, replace=False))
    ni = np.sort(rng.choice(non_a.size, size=num_nontarget, replace=False))
    trials = [Trial(ids[tar_a[k]], ids[tar_b[k]], "target") for k in ti]
    trials += [Trial(ids[non_a[k]], ids[non_b[k]], "nontarget") for k in ni]
    order = rng.permutation(len(trials))
    return TrialList(tuple(trials[k] for k in order))


def split_speakers(manifest: Manifest, num_eval: int, seed: int = 0) -> tuple[Manifest, Manifest]:
    """Disjoint (train, eval) manifests with ``num_eval`` randomly chosen eval speakers."""
    speakers = manifest.speakers()
    if not 0 < num_eval < len(speakers):
        raise InvalidConfig(f"num_eval must be in (0, {len(speakers)})")
    chosen = set(np.random.default_rng(seed).choice(len(speakers), size=num_eval, replace=False).tolist())
    eval_spk = {s for k, s in enumerate(speakers) if k in chosen}
    train = Manifest(tuple(r for r in manifest if r.speaker_id not in eval_spk), f"{manifest.corpus_name}-train", manifest.base_dir)
    ev = Manifest(tuple(r for r in manifest if r.speaker_id in eval_spk), f"{manifest.corpus_name}-eval", manifest.base_dir)
    return train, ev


def corrupt_transcripts(manifest: Manifest, error_rate: float, seed: int = 0, vocab_size: int = 200) -> dict[str, str]:
    """Fake ASR output: each word independently substituted, deleted or followed by an insertion."""
    out = {}
    for k, rec in enumerate(manifest):
        rng = np.random.default_rng([seed, k])
        words = (rec.transcript or "").split()
        hyp = []
        for w in words:
            u = rng.random()
            if u < error_rate / 3:
                hyp.append(f"w{rng.integers(vocab_size)}")
            elif u < 2 * error_rate / 3:
                continue
            elif u < error_rate:
                hyp.extend([w, f"w{rng.integers(vocab_size)}"])
            else:
                hyp.append(w)
        out[rec.utt_id] = " ".join(hyp)
    return out
