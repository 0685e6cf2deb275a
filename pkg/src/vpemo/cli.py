"""Command-line entry point: ``vpemo <synth|anonymize|eval|probe|tsne|report>``.

Configuration files are JSON objects with optional sections ``synth``,
``split``, ``targets``, ``pipeline``, ``probe`` and ``tsne``; see the README.
Logs go to stderr. Exit codes: 0 ok, 2 validation error, 3 external stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .datamodel import Manifest, load_manifest, load_trials, save_manifest, save_trials
from .errors import ExternalStageFailed, InvalidConfig, ValidationError, VpemoError
from .pipeline import (
    Corpus,
    EvalInputs,
    EvalReport,
    PipelineConfig,
    render_report,
    run_anonymization,
    run_full_eval,
)
from .probe import ProbeConfig, run_seeds, save_probe, train_probe
from .synth import (
    SynthConfig,
    SynthExtractor,
    SynthTruth,
    corrupt_transcripts,
    generate_corpus,
    generate_trials,
    split_speakers,
)
from .viz import TsneConfig, export_scatter, tsne

log = logging.getLogger("vpemo")


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise InvalidConfig("config must be a JSON object")
    return obj


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _named(values, what: str) -> dict[str, str]:
    out = {}
    for v in values or []:
        name, sep, path = v.partition("=")
        if not sep or not name or not path:
            raise ValidationError(f"{what} expects NAME=PATH, got {v!r}")
        out[name] = path
    return out


def _write_hyps(path: Path, hyps: dict[str, str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{u} {t}\n" for u, t in hyps.items()), encoding="utf-8")


def _read_hyps(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            uid, _, text = line.partition(" ")
            out[uid] = text
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, conf) -> int:
    if args.out is None:
        raise ValidationError("synth needs --out DIR")
    out = Path(args.out)
    scfg = SynthConfig.from_dict({**conf.get("synth", {}), "seed": args.seed})
    split = {"eval_speakers": 10, "num_target": 500, "num_nontarget": 500, "asr_error_rate": 0.1, **conf.get("split", {})}
    corpus = generate_corpus(scfg, "synth")
    corpus.write(out)
    full = load_manifest(out / "manifest.jsonl", "synth")
    train, evl = split_speakers(full, split["eval_speakers"], seed=args.seed)
    save_manifest(out / "train.jsonl", train)
    save_manifest(out / "eval.jsonl", evl)
    (out / "trials").mkdir(exist_ok=True)
    for gender, name in (("F", "synth-f"), ("M", "synth-m")):
        sub = evl.subset([r.utt_id for r in evl if r.gender == gender], name)
        save_manifest(out / f"{name}.jsonl", sub)
        trials = generate_trials(sub, split["num_target"], split["num_nontarget"], seed=args.seed)
        save_trials(out / f"trials/{name}.txt", trials)
    _write_hyps(out / "asr/eval.hyp", corrupt_transcripts(evl, split["asr_error_rate"], seed=args.seed, vocab_size=scfg.vocab_size))
    tconf = conf.get("targets")
    if tconf is not None:
        tcfg = SynthConfig.from_dict({**asdict(scfg), "speaker_prefix": "tgt", "speaker_seed": args.seed + 1000, **tconf})
        generate_corpus(tcfg, "targets").write(out / "targets")
    log.info("wrote synthetic corpus to %s (%d utterances)", out, len(full))
    return 0


def cmd_anonymize(args, conf) -> int:
    if args.out is None:
        raise ValidationError("anonymize needs --out DIR")
    pconf = {**conf.get("pipeline", {}), "seed": args.seed, "workers": args.workers}
    if args.strategy:
        pconf["strategy"] = args.strategy
    cfg = PipelineConfig.from_dict(pconf)
    source = Corpus(load_manifest(args.source))
    targets = Corpus(load_manifest(args.targets)) if args.targets else None
    extractor = None
    if args.truth:
        meta = json.loads(Path(args.truth).read_text(encoding="utf-8"))
        extractor = SynthExtractor(SynthTruth.from_json(meta["truth"]))
    result = run_anonymization(source, targets, cfg, extractor)
    result.write(args.out)
    log.info("anonymized %d utterances into %s", len(result.manifest), args.out)
    return 0


def cmd_eval(args, conf) -> int:
    pconf = {**conf.get("pipeline", {}), "seed": args.seed, "workers": args.workers}
    cfg = PipelineConfig.from_dict(pconf)
    anon = Corpus(load_manifest(args.anon))
    inputs = EvalInputs()
    if args.attacker_train:
        inputs.attacker_train = anon.subset(anon.manifest.subset(load_manifest(args.attacker_train).utt_ids))
    for name, path in _named(args.trials, "--trials").items():
        inputs.privacy[name] = (anon, load_trials(path))
    if args.emotion_train:
        inputs.emotion_train = Corpus(load_manifest(args.emotion_train))
    for name, path in _named(args.utility, "--utility").items():
        ref = load_manifest(path)
        ids = anon.manifest.subset(ref.utt_ids, name)
        inputs.utility[name] = anon.subset(Manifest(tuple(replace(r, emotion=ref[r.utt_id].emotion) for r in ids), name, ids.base_dir))
    for name, value in _named(args.asr, "--asr").items():
        ref_path, sep, hyp_path = value.partition(":")
        if not sep:
            raise ValidationError("--asr expects NAME=REF_MANIFEST:HYP_FILE")
        inputs.asr[name] = (load_manifest(ref_path), _read_hyps(hyp_path))
    row = run_full_eval(args.system, inputs, cfg)
    report = EvalReport([row], meta={"seed": args.seed})
    _emit(render_report(report, "json"), args.out)
    return 0


def cmd_probe(args, conf) -> int:
    pconf = ProbeConfig(**{**conf.get("probe", {})})
    train = Corpus(load_manifest(args.train))
    evl = Corpus(load_manifest(args.eval))
    trials = load_trials(args.trials)
    ids, X = train.matrix(args.kind)
    y = [train.manifest[u].speaker_id for u in ids]
    eval_ids, E = evl.matrix(args.kind)
    seeds = [args.seed + i for i in range(args.num_seeds)]
    report = run_seeds(X, y, pconf, seeds, trials, dict(zip(eval_ids, E)),
                       train_set=train.manifest.corpus_name, test_set=evl.manifest.corpus_name)
    if args.save_model:
        model, _ = train_probe(X, replace(pconf, seed=args.seed), labels=y)
        save_probe(args.save_model, model, pconf)
    _emit(render_report(EvalReport(seed_reports=[report], meta={"seed": args.seed}), "json"), args.out)
    return 0


def cmd_tsne(args, conf) -> int:
    if args.out is None:
        raise ValidationError("tsne needs --out PREFIX")
    tcfg = TsneConfig(**{**conf.get("tsne", {}), "seed": args.seed})
    corpus = Corpus(load_manifest(args.manifest))
    ids, X = corpus.matrix(args.kind)
    labels = [getattr(corpus.manifest[u], "speaker_id" if args.label == "speaker" else "emotion") for u in ids]
    res = tsne(X, tcfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = export_scatter(res.points, labels, args.out, title=f"t-SNE of {args.kind} embeddings")
    summary = {"initial_kl": res.initial_kl, "final_kl": res.final_kl, "kl_trace": res.kl_trace,
               "csv": str(csv_path), "svg": str(svg_path), "config": res.config}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


def cmd_report(args, conf) -> int:
    report = EvalReport()
    for path in args.reports:
        report = report.merge(EvalReport.from_json(json.loads(Path(path).read_text(encoding="utf-8"))))
    _emit(render_report(report, args.format), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="master seed (default 0)")
    p.add_argument("--workers", type=int, default=d(1), help="worker threads (default 1)")
    p.add_argument("--config", default=d(None), help="JSON config file")
    p.add_argument("--out", default=d(None), help="output path (stdout when omitted, where applicable)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpemo", description="Speaker anonymization evaluation toolkit")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    add("synth", cmd_synth, "generate a synthetic corpus, splits, trials and ASR hypotheses")

    p = add("anonymize", cmd_anonymize, "anonymize a manifest with one strategy")
    p.add_argument("--source", required=True, help="source manifest")
    p.add_argument("--targets", help="target speaker / prompt corpus manifest")
    p.add_argument("--strategy", help="overrides pipeline.strategy")
    p.add_argument("--truth", help="synthetic truth.json; re-extracts embeddings from output frames")

    p = add("eval", cmd_eval, "privacy and utility evaluation of one system")
    p.add_argument("--system", required=True)
    p.add_argument("--anon", required=True, help="anonymized manifest with embeddings")
    p.add_argument("--attacker-train", help="manifest naming the attacker's training utterances")
    p.add_argument("--trials", action="append", metavar="NAME=PATH")
    p.add_argument("--emotion-train", help="manifest with original emotion embeddings for the recognizer")
    p.add_argument("--utility", action="append", metavar="NAME=MANIFEST", help="reference emotions")
    p.add_argument("--asr", action="append", metavar="NAME=REF:HYP")

    p = add("probe", cmd_probe, "speaker probe on embeddings over several seeds")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--kind", choices=("emotion", "speaker"), default="emotion")
    p.add_argument("--num-seeds", type=int, default=5)
    p.add_argument("--save-model")

    p = add("tsne", cmd_tsne, "t-SNE scatter of embeddings")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=("emotion", "speaker"), default="emotion")
    p.add_argument("--label", choices=("speaker", "emotion"), default="speaker")

    p = add("report", cmd_report, "render one or more JSON reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--format", choices=("markdown", "json", "csv"), default="markdown")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.workers < 1:
            raise ValidationError("--workers must be >= 1")
        conf = _load_config(args.config)
        return args.func(args, conf)
    except ExternalStageFailed as exc:
        log.error("%s", exc)
        return 3
    except (ValidationError, VpemoError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
