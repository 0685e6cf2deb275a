"""Anonymization strategies, full evaluation and report rendering.

A run goes: source corpus -> :func:`run_anonymization` (one strategy, per
utterance, bounded worker pool) -> embeddings for the anonymized utterances
(external extractors, or :class:`~vpemo.synth.SynthExtractor` on synthetic
data) -> :func:`run_full_eval` -> :func:`render_report`.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import shlex
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .attacker import train_centroid, score_trials
from .datamodel import (
    EmbeddingVector,
    FrameMatrix,
    Manifest,
    TrialList,
    UtteranceRecord,
    load_embedding,
    load_frames,
    read_vpfx,
    save_embedding,
    save_frames,
    save_manifest,
)
from .errors import (
    EmptyReport,
    ExternalStageFailed,
    FormatError,
    InvalidConfig,
    MissingArtifact,
    NoCandidates,
    NoTrials,
    ValidationError,
)
from .knnvc import KnnVcConfig, TargetPool, build_pool, convert_frames
from .metrics import average, compute_eer, compute_uar, corpus_wer, normalize_text
from .probe import ProbeConfig, SeedReport, embed, predict, train_probe
from .proxy import PromptCorpus, ProxyConfig, select_prompt

log = logging.getLogger(__name__)

STRATEGIES = ("knnvc", "proxy_prompt", "random_prompt", "passthrough", "noise", "external")
ASSIGNMENTS = ("per_utterance", "per_speaker", "per_dataset")
BACKENDS = ("centroid", "probe")

# rng substream tags
_ASSIGN, _NOISE, _PROMPT = 11, 12, 13


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    strategy: str = "passthrough"
    target_assignment: str = "per_utterance"
    seed: int = 0
    knnvc: KnnVcConfig = field(default_factory=KnnVcConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    external_cmd: str | None = None
    # stand-in for prompt cloning: anonymized frames := the chosen prompt's frames
    clone_prompt_frames: bool = False
    attacker_backend: str = "centroid"
    attacker_input: str = "speaker"
    emotion_recognizer: str = "centroid"
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    workers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidConfig(f"strategy must be one of {STRATEGIES}")
        if self.target_assignment not in ASSIGNMENTS:
            raise InvalidConfig(f"target_assignment must be one of {ASSIGNMENTS}")
        if (self.strategy == "external") != (self.external_cmd is not None):
            raise InvalidConfig("external_cmd is required iff strategy is 'external'")
        if self.attacker_backend not in BACKENDS or self.emotion_recognizer not in BACKENDS:
            raise InvalidConfig(f"backends must be one of {BACKENDS}")
        if self.attacker_input not in ("speaker", "emotion"):
            raise InvalidConfig("attacker_input must be 'speaker' or 'emotion'")
        if self.workers < 1:
            raise InvalidConfig("workers must be >= 1")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "PipelineConfig":
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidConfig(f"unknown pipeline config keys {sorted(unknown)}")
        subs = {"knnvc": KnnVcConfig, "proxy": ProxyConfig, "probe": ProbeConfig}
        for key, kls in subs.items():
            if key in obj and isinstance(obj[key], Mapping):
                try:
                    obj[key] = kls(**obj[key])
                except TypeError as exc:
                    raise InvalidConfig(f"{key}: {exc}") from None
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# corpus access
# ---------------------------------------------------------------------------


class Corpus:
    """A manifest plus its artifacts, kept in memory or loaded lazily from manifest paths."""

    def __init__(self, manifest: Manifest, frames=None, speaker_embs=None, emotion_embs=None):
        self.manifest = manifest
        self._frames = dict(frames or {})
        self._spk = dict(speaker_embs or {})
        self._emo = dict(emotion_embs or {})

    @classmethod
    def from_synth(cls, corpus, manifest: Manifest | None = None) -> "Corpus":
        m = manifest if manifest is not None else corpus.manifest
        ids = set(m.utt_ids)
        pick = lambda d: {k: v for k, v in d.items() if k in ids}  # noqa: E731
        return cls(m, pick(corpus.frames), pick(corpus.speaker_embs), pick(corpus.emotion_embs))

    def subset(self, manifest: Manifest) -> "Corpus":
        ids = set(manifest.utt_ids)
        pick = lambda d: {k: v for k, v in d.items() if k in ids}  # noqa: E731
        return Corpus(manifest, pick(self._frames), pick(self._spk), pick(self._emo))

    def _get(self, cache: dict, uid: str, attr: str, kind: str, loader):
        if uid in cache:
            return cache[uid]
        rec = self.manifest[uid]
        path = getattr(rec, attr)
        if path is None:
            raise MissingArtifact(uid, kind)
        value = loader(self.manifest.resolve(path))
        cache[uid] = value
        return value

    def has(self, uid: str, kind: str) -> bool:
        cache, attr = {"features": (self._frames, "features_path"),
                       "speaker": (self._spk, "speaker_emb_path"),
                       "emotion": (self._emo, "emotion_emb_path")}[kind]
        return uid in cache or (uid in self.manifest and getattr(self.manifest[uid], attr) is not None)

    def frames(self, uid: str) -> FrameMatrix:
        return self._get(self._frames, uid, "features_path", "features", load_frames)

    def speaker_emb(self, uid: str) -> EmbeddingVector:
        return self._get(self._spk, uid, "speaker_emb_path", "speaker_emb", load_embedding)

    def emotion_emb(self, uid: str) -> EmbeddingVector:
        return self._get(self._emo, uid, "emotion_emb_path", "emotion_emb", load_embedding)

    def embedding(self, uid: str, kind: str) -> EmbeddingVector:
        return self.speaker_emb(uid) if kind == "speaker" else self.emotion_emb(uid)

    def matrix(self, kind: str, manifest: Manifest | None = None) -> tuple[list[str], np.ndarray]:
        m = manifest if manifest is not None else self.manifest
        ids = m.utt_ids
        return ids, np.stack([self.embedding(u, kind).data.astype(np.float64) for u in ids])


# ---------------------------------------------------------------------------
# anonymization
# ---------------------------------------------------------------------------


@dataclass
class AnonymizationResult:
    manifest: Manifest
    frames: dict[str, FrameMatrix]
    speaker_embs: dict[str, EmbeddingVector]
    emotion_embs: dict[str, EmbeddingVector]
    assignments: list[dict]

    def corpus(self) -> Corpus:
        return Corpus(self.manifest, self.frames, self.speaker_embs, self.emotion_embs)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        for sub in ("frames", "spk", "emo"):
            (out / sub).mkdir(parents=True, exist_ok=True)
        records = []
        for rec in self.manifest:
            uid = rec.utt_id
            paths = [None, None, None]
            for k, (sub, store) in enumerate((("frames", self.frames), ("spk", self.speaker_embs), ("emo", self.emotion_embs))):
                if uid in store:
                    paths[k] = f"{sub}/{uid}.vpfx"
                    (save_frames if sub == "frames" else save_embedding)(out / paths[k], store[uid])
            records.append(replace(rec, features_path=paths[0], speaker_emb_path=paths[1], emotion_emb_path=paths[2]))
        save_manifest(out / "manifest.jsonl", Manifest(tuple(records), self.manifest.corpus_name))
        with (out / "assignments.jsonl").open("w", encoding="utf-8") as fh:
            for a in self.assignments:
                fh.write(json.dumps(a, sort_keys=True) + "\n")
        return out


def _rng(seed: int, tag: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, index])


def _choose_targets(source: Manifest, candidates: Sequence[str], owner: Callable[[str], str], cfg: PipelineConfig) -> list[str]:
    """One target (speaker or prompt id) per source utterance, honouring target_assignment.

    ``owner`` maps a candidate to its speaker so a source is never assigned its own voice.
    """
    if not candidates:
        raise NoCandidates("target corpus is empty")

    def pick(rng, exclude_speaker):
        pool = [c for c in candidates if owner(c) != exclude_speaker] or list(candidates)
        return pool[int(rng.integers(len(pool)))]

    out = []
    if cfg.target_assignment == "per_dataset":
        choice = pick(_rng(cfg.seed, _ASSIGN, 0), None)
        return [choice] * len(source)
    speakers = {s: i for i, s in enumerate(source.speakers())}
    per_spk: dict[str, str] = {}
    for idx, rec in enumerate(source):
        if cfg.target_assignment == "per_speaker":
            if rec.speaker_id not in per_spk:
                per_spk[rec.speaker_id] = pick(_rng(cfg.seed, _ASSIGN, speakers[rec.speaker_id]), rec.speaker_id)
            out.append(per_spk[rec.speaker_id])
        else:
            out.append(pick(_rng(cfg.seed, _ASSIGN, idx), rec.speaker_id))
    return out


def _global_rms(source: Corpus) -> float:
    acc, n = 0.0, 0
    for rec in source.manifest:
        if source.has(rec.utt_id, "features"):
            d = source.frames(rec.utt_id).data.astype(np.float64)
            acc += float((d * d).sum())
            n += d.size
    return float(np.sqrt(acc / n)) if n else 1.0


def _run_external(cmd: str, uid: str, frames: FrameMatrix | None, src_path: Path | None) -> FrameMatrix:
    with tempfile.TemporaryDirectory(prefix="vpemo-ext-") as tmp:
        tmp = Path(tmp)
        inp = src_path
        if inp is None:
            if frames is None:
                raise MissingArtifact(uid, "features")
            inp = tmp / "input.vpfx"
            save_frames(inp, frames)
        out = tmp / "output.vpfx"
        argv = [a.format(input=str(inp), output=str(out), utt_id=uid) for a in shlex.split(cmd)]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExternalStageFailed(uid, proc.returncode, proc.stderr)
        if not out.exists():
            raise ExternalStageFailed(uid, proc.returncode, "no output file produced")
        try:
            kind, arr = read_vpfx(out)
        except FormatError as exc:
            raise ExternalStageFailed(uid, proc.returncode, f"invalid VPFX output: {exc}") from None
        if kind != "frames":
            raise ExternalStageFailed(uid, proc.returncode, f"expected frames, got {kind}")
        return FrameMatrix(arr)


def run_anonymization(
    source: Corpus,
    targets: Corpus | None,
    config: PipelineConfig,
    extractor=None,
) -> AnonymizationResult:
    """Anonymize every utterance of ``source`` with ``config.strategy``.

    ``extractor`` (anything with ``extract(FrameMatrix) -> (speaker, emotion)``)
    fills in embeddings for output frames. Output order and values do not
    depend on ``config.workers``.
    """
    cfg = config
    man = source.manifest
    n = len(man)
    strategy = cfg.strategy
    log.info("anonymizing %d utterances with %s (%s)", n, strategy, cfg.target_assignment)
    assignments: list[dict] = [{"utt_id": r.utt_id, "strategy": strategy} for r in man]
    frames_out: dict[str, FrameMatrix] = {}
    spk_out: dict[str, EmbeddingVector] = {}
    emo_out: dict[str, EmbeddingVector] = {}

    if strategy in ("knnvc", "proxy_prompt", "random_prompt") and targets is None:
        raise ValidationError(f"strategy {strategy} needs a target/prompt corpus")

    task: Callable[[int], tuple]
    if strategy == "passthrough":
        def task(i):
            uid = man.records[i].utt_id
            fr = source.frames(uid) if source.has(uid, "features") else None
            sp = source.speaker_emb(uid) if source.has(uid, "speaker") else None
            em = source.emotion_emb(uid) if source.has(uid, "emotion") else None
            return fr, sp, em, {}

    elif strategy == "noise":
        rms = _global_rms(source)

        def task(i):
            uid = man.records[i].utt_id
            rng = _rng(cfg.seed, _NOISE, i)
            fr = sp = em = None
            if source.has(uid, "features"):
                shape = source.frames(uid).data.shape
                fr = FrameMatrix(rms * rng.standard_normal(shape))
            elif source.has(uid, "speaker") or source.has(uid, "emotion"):
                if source.has(uid, "speaker"):
                    sp = EmbeddingVector(rng.standard_normal(source.speaker_emb(uid).dim), "speaker")
                if source.has(uid, "emotion"):
                    em = EmbeddingVector(rng.standard_normal(source.emotion_emb(uid).dim), "emotion")
            else:
                raise MissingArtifact(uid, "features")
            return fr, sp, em, {"noise_rms": rms}

    elif strategy == "knnvc":
        by_spk = targets.manifest.by_speaker()
        chosen = _choose_targets(man, list(by_spk), lambda s: s, cfg)
        pools: dict[str, TargetPool] = {}
        for spk in dict.fromkeys(chosen):
            recs = by_spk[spk]
            pools[spk] = build_pool([targets.frames(r.utt_id) for r in recs], cfg.knnvc, [r.utt_id for r in recs])

        def task(i):
            uid = man.records[i].utt_id
            if not source.has(uid, "features"):
                raise MissingArtifact(uid, "features")
            out = convert_frames(source.frames(uid).data, pools[chosen[i]], cfg.knnvc)
            return FrameMatrix(out), None, None, {"target_speaker": chosen[i], "k": cfg.knnvc.k}

    elif strategy in ("proxy_prompt", "random_prompt"):
        towner = {r.utt_id: r.speaker_id for r in targets.manifest}
        if strategy == "proxy_prompt":
            prompt_ids = [r.utt_id for r in targets.manifest if targets.has(r.utt_id, "emotion")]
            bank = PromptCorpus(prompt_ids, [towner[u] for u in prompt_ids],
                                np.stack([targets.emotion_emb(u).data for u in prompt_ids]) if prompt_ids else np.zeros((0, 1)))
            if not prompt_ids:
                raise NoCandidates("no prompt candidate has an emotion embedding")
        else:
            chosen = _choose_targets(man, targets.manifest.utt_ids, towner.__getitem__, cfg)

        def task(i):
            rec = man.records[i]
            uid = rec.utt_id
            if strategy == "proxy_prompt":
                if not source.has(uid, "emotion"):
                    raise MissingArtifact(uid, "emotion_emb")
                sel = select_prompt(source.emotion_emb(uid), bank, cfg.proxy, _rng(cfg.seed, _PROMPT, i),
                                    source_speaker=rec.speaker_id if cfg.proxy.exclude_same_speaker else None,
                                    source_id=uid)
                prompt = sel.chosen_id
                info = {"prompt": prompt, "similarity": sel.similarity, "rank": sel.rank}
            else:
                prompt = chosen[i]
                info = {"prompt": prompt}
            info["prompt_speaker"] = towner[prompt]
            fr = None
            if cfg.clone_prompt_frames:
                fr = targets.frames(prompt)
            return fr, None, None, info

    else:  # external
        def task(i):
            rec = man.records[i]
            uid = rec.utt_id
            src_path = man.resolve(rec.features_path) if rec.features_path and uid not in source._frames else None
            fr = source.frames(uid) if src_path is None and source.has(uid, "features") else None
            out = _run_external(cfg.external_cmd, uid, fr, src_path)
            return out, None, None, {"command": cfg.external_cmd}

    if cfg.workers == 1:
        results = [task(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(task, range(n)))

    for i, (fr, sp, em, info) in enumerate(results):
        uid = man.records[i].utt_id
        assignments[i].update(info)
        if fr is not None:
            frames_out[uid] = fr
            if extractor is not None:
                sp, em = extractor.extract(fr)
        if sp is not None:
            spk_out[uid] = sp
        if em is not None:
            emo_out[uid] = em
    anon_manifest = Manifest(
        tuple(replace(r, features_path=None, speaker_emb_path=None, emotion_emb_path=None) for r in man),
        f"{man.corpus_name}-{strategy}",
    )
    return AnonymizationResult(anon_manifest, frames_out, spk_out, emo_out, assignments)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


class EmotionRecognizer:
    """Nearest class centroid (cosine) or a probe classifier over emotion embeddings."""

    def __init__(self, backend: str = "centroid", probe_config: ProbeConfig | None = None):
        if backend not in BACKENDS:
            raise InvalidConfig(f"unknown recognizer backend {backend!r}")
        self.backend = backend
        self.probe_config = probe_config or ProbeConfig()
        self.classes: list = []

    def fit(self, X: np.ndarray, labels: Sequence[str]) -> "EmotionRecognizer":
        if self.backend == "centroid":
            self.classes = sorted(set(labels))
            unit = X / np.linalg.norm(X, axis=1, keepdims=True)
            lab = np.array(labels)
            cents = np.stack([unit[lab == c].mean(axis=0) for c in self.classes])
            self.centroids = cents / np.linalg.norm(cents, axis=1, keepdims=True)
        else:
            self.model, _ = train_probe(X, self.probe_config, labels=list(labels))
            self.classes = list(self.model.classes)
        return self

    def predict(self, X: np.ndarray) -> list:
        if self.backend == "centroid":
            return [self.classes[i] for i in (X @ self.centroids.T).argmax(axis=1)]
        return predict(X, self.model)


@dataclass
class SystemRow:
    system: str
    eer: dict = field(default_factory=dict)  # subset -> fraction
    uar: dict = field(default_factory=dict)
    wer: dict = field(default_factory=dict)

    @property
    def eer_avg(self) -> float | None:
        return average(list(self.eer.values())) if self.eer else None

    @property
    def uar_avg(self) -> float | None:
        return average(list(self.uar.values())) if self.uar else None

    @property
    def wer_avg(self) -> float | None:
        return average(list(self.wer.values())) if self.wer else None


@dataclass
class EvalReport:
    rows: list[SystemRow] = field(default_factory=list)
    seed_reports: list[SeedReport] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "seed_reports": [s.to_json() for s in self.seed_reports],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "EvalReport":
        return cls(
            [SystemRow(**r) for r in obj.get("rows", [])],
            [SeedReport.from_json(s) for s in obj.get("seed_reports", [])],
            dict(obj.get("meta", {})),
        )

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.rows + other.rows, self.seed_reports + other.seed_reports, {**self.meta, **other.meta})


@dataclass
class EvalInputs:
    """Everything :func:`run_full_eval` consumes.

    ``attacker_train`` is anonymized data with original speaker labels;
    ``privacy`` maps subset name -> (anonymized eval corpus, trials);
    ``emotion_train`` is the recognizer's (original) training data;
    ``utility`` maps subset name -> anonymized corpus whose manifest carries
    reference emotions; ``asr`` maps subset name -> (reference manifest,
    {utt_id: hypothesis text}).
    """

    attacker_train: Corpus | None = None
    privacy: dict = field(default_factory=dict)
    emotion_train: Corpus | None = None
    utility: dict = field(default_factory=dict)
    asr: dict = field(default_factory=dict)


def _attacker_embed(train: Corpus, cfg: PipelineConfig) -> Callable[[np.ndarray], np.ndarray]:
    kind = cfg.attacker_input
    ids, X = train.matrix(kind)
    if cfg.attacker_backend == "centroid":
        model = train_centroid(train.manifest, dict(zip(ids, X)))
        return model.transform
    labels = [train.manifest[u].speaker_id for u in ids]
    model, _ = train_probe(X, cfg.probe, labels=labels)
    return lambda M: embed(M, model)


def run_full_eval(system: str, inputs: EvalInputs, config: PipelineConfig | None = None) -> SystemRow:
    """Privacy EER per trial subset, emotion UAR and WER per utility subset."""
    cfg = config or PipelineConfig()
    row = SystemRow(system)
    if inputs.privacy:
        if inputs.attacker_train is None:
            raise ValidationError("privacy evaluation needs attacker training data")
        transform = _attacker_embed(inputs.attacker_train, cfg)
        for name, (corpus, trials) in inputs.privacy.items():
            needed = list(dict.fromkeys([t.enroll_id for t in trials] + [t.test_id for t in trials]))
            if not needed:
                raise NoTrials("empty trial list", subset=name)
            X = np.stack([corpus.embedding(u, cfg.attacker_input).data.astype(np.float64) for u in needed])
            source = dict(zip(needed, transform(X)))
            scores = score_trials(source, trials)
            try:
                row.eer[name] = compute_eer(scores, trials).eer
            except NoTrials as exc:
                raise NoTrials(str(exc), subset=name) from None
            log.info("%s %s: EER %.3f%%", system, name, 100 * row.eer[name])
    if inputs.utility:
        if inputs.emotion_train is None:
            raise ValidationError("utility evaluation needs recognizer training data")
        tm = inputs.emotion_train.manifest
        labelled = Manifest(tuple(r for r in tm if r.emotion is not None), tm.corpus_name, tm.base_dir)
        ids, X = inputs.emotion_train.matrix("emotion", labelled)
        rec = EmotionRecognizer(cfg.emotion_recognizer, cfg.probe).fit(X, [labelled[u].emotion for u in ids])
        for name, corpus in inputs.utility.items():
            m = corpus.manifest
            ids_u = [r.utt_id for r in m if r.emotion is not None]
            Xu = np.stack([corpus.emotion_emb(u).data.astype(np.float64) for u in ids_u])
            preds = rec.predict(Xu)
            refs = [m[u].emotion for u in ids_u]
            row.uar[name] = compute_uar(refs, preds, sorted(set(rec.classes) | set(refs))).uar
            log.info("%s %s: UAR %.3f%%", system, name, 100 * row.uar[name])
    for name, (ref_manifest, hyps) in inputs.asr.items():
        pairs = []
        for r in ref_manifest:
            if r.transcript is None:
                continue
            if r.utt_id not in hyps:
                raise MissingArtifact(r.utt_id, "hypothesis transcript")
            pairs.append((normalize_text(r.transcript), normalize_text(hyps[r.utt_id])))
        row.wer[name] = corpus_wer(pairs).wer
    return row


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

_GROUPS = (("eer", "Privacy - EER (%)"), ("uar", "Utility - UAR mean (%)"), ("wer", "Utility - WER (%)"))


def _fmt(v: float | None, digits: int) -> str:
    return "-" if v is None else f"{100.0 * v:.{digits}f}"


def _columns(report: EvalReport) -> dict[str, list[str]]:
    cols: dict[str, list[str]] = {k: [] for k, _ in _GROUPS}
    for row in report.rows:
        for key, _ in _GROUPS:
            for name in getattr(row, key):
                if name not in cols[key]:
                    cols[key].append(name)
    return cols


def _table(report: EvalReport) -> tuple[list[str], list[str], list[list[str]]]:
    cols = _columns(report)
    groups, subs = ["System"], [""]
    for key, title in _GROUPS:
        if not cols[key]:
            continue
        span = cols[key] + ["avg."]
        groups += [title] + [""] * (len(span) - 1)
        subs += span
    body = []
    for row in report.rows:
        cells = [row.system]
        for key, _ in _GROUPS:
            if not cols[key]:
                continue
            vals = getattr(row, key)
            cells += [_fmt(vals.get(n), 3) for n in cols[key]]
            cells.append(_fmt(average(list(vals.values())) if vals else None, 2))
        body.append(cells)
    return groups, subs, body


def _seed_table(reports: Sequence[SeedReport]) -> list[list[str]]:
    return [[r.train_set, r.test_set, str(r.num_trials)] + r.row().split(" | ") for r in reports]


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Render Table-1 style system rows and Table-2 style seed reports."""
    if not report.rows and not report.seed_reports:
        raise EmptyReport("nothing to render")
    if fmt == "json":
        return json.dumps(report.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    lines: list[str] = []
    if fmt == "markdown":
        if report.rows:
            groups, subs, body = _table(report)
            lines.append("| " + " | ".join(groups) + " |")
            lines.append("|" + "|".join(["---"] * len(groups)) + "|")
            lines.append("| " + " | ".join(subs) + " |")
            lines += ["| " + " | ".join(r) + " |" for r in body]
        if report.seed_reports:
            if lines:
                lines.append("")
            lines.append("| Train Set | Test Set | #trials | ASV EER (%) mean | min | max |")
            lines.append("|---|---|---|---|---|---|")
            lines += ["| " + " | ".join(r) + " |" for r in _seed_table(report.seed_reports)]
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if report.rows:
            groups, subs, body = _table(report)
            header, current = [], ""
            for g, s in zip(groups, subs):
                current = g or current
                header.append(f"{current}: {s}" if s else current)
            w.writerow(header)
            w.writerows(body)
        if report.seed_reports:
            w.writerow(["train_set", "test_set", "num_trials", "mean_pm_std", "min", "max"])
            w.writerows(_seed_table(report.seed_reports))
        return buf.getvalue()
    raise ValidationError(f"unknown report format {fmt!r}")


def tradeoff_points(report: EvalReport) -> tuple[list[tuple[float, float]], list[str]]:
    """(avg EER %, avg UAR %) per system with both metrics."""
    pts, labels = [], []
    for row in report.rows:
        if row.eer and row.uar:
            pts.append((100.0 * row.eer_avg, 100.0 * row.uar_avg))
            labels.append(row.system)
    return pts, labels
