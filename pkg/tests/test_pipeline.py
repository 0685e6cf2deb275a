import json
import sys
from dataclasses import replace

import numpy as np
import pytest

from oracles import cosine_ranking
from vpemo.datamodel import EmbeddingVector, FrameMatrix, Manifest, UtteranceRecord, load_manifest
from vpemo.errors import EmptyReport, ExternalStageFailed, InvalidConfig, MissingArtifact, NoTrials
from vpemo.knnvc import KnnVcConfig
from vpemo.pipeline import (
    Corpus,
    EvalInputs,
    EvalReport,
    PipelineConfig,
    SystemRow,
    render_report,
    run_anonymization,
    run_full_eval,
    tradeoff_points,
)
from vpemo.probe import SeedReport
from vpemo.proxy import ProxyConfig
from vpemo.synth import SynthConfig, SynthExtractor, corrupt_transcripts, generate_corpus, generate_trials, split_speakers

LOOSE = KnnVcConfig(min_pool_frames=0, enforce_pool_size=False)
SMALL = SynthConfig(num_speakers=8, utts_per_speaker=6, frames_per_utt=(5, 10))


@pytest.fixture(scope="module")
def small():
    return generate_corpus(SMALL)


def test_config_rules():
    with pytest.raises(InvalidConfig):
        PipelineConfig(strategy="external")
    with pytest.raises(InvalidConfig):
        PipelineConfig(strategy="knnvc", external_cmd="x")
    with pytest.raises(InvalidConfig):
        PipelineConfig(strategy="morph")
    cfg = PipelineConfig.from_dict({"strategy": "knnvc", "knnvc": {"k": 2}, "proxy": {"top_n": 3}})
    assert cfg.knnvc.k == 2 and cfg.proxy.top_n == 3 and cfg.target_assignment == "per_utterance"
    with pytest.raises(InvalidConfig):
        PipelineConfig.from_dict({"nope": 1})


def test_passthrough_identical(small):
    res = run_anonymization(Corpus.from_synth(small), None, PipelineConfig())
    for u in small.manifest.utt_ids:
        assert res.frames[u].data.tobytes() == small.frames[u].data.tobytes()
        assert res.speaker_embs[u] == small.speaker_embs[u]
        assert res.emotion_embs[u] == small.emotion_embs[u]
    assert [a["utt_id"] for a in res.assignments] == small.manifest.utt_ids


def test_knnvc_own_pool_k1(small):
    spk = small.manifest.speakers()[0]
    own = small.manifest.subset([r.utt_id for r in small.manifest if r.speaker_id == spk])
    corpus = Corpus.from_synth(small, own)
    cfg = PipelineConfig(strategy="knnvc", knnvc=replace(LOOSE, k=1), target_assignment="per_dataset")
    # the only candidate target speaker is the source speaker itself, so it is used as a fallback
    res = run_anonymization(corpus, corpus, cfg)
    pool_rows = {tuple(r) for u in own.utt_ids for r in small.frames[u].data}
    for u in own.utt_ids:
        assert all(tuple(r) in pool_rows for r in res.frames[u].data)


def test_knnvc_assignment_scopes(small):
    tgt = generate_corpus(replace(SMALL, speaker_seed=7, speaker_prefix="tgt", num_speakers=4))
    S, T = Corpus.from_synth(small), Corpus.from_synth(tgt)
    per_spk = run_anonymization(S, T, PipelineConfig(strategy="knnvc", knnvc=LOOSE, target_assignment="per_speaker"))
    by_spk = {}
    for a, rec in zip(per_spk.assignments, small.manifest):
        by_spk.setdefault(rec.speaker_id, set()).add(a["target_speaker"])
    assert all(len(v) == 1 for v in by_spk.values())
    per_ds = run_anonymization(S, T, PipelineConfig(strategy="knnvc", knnvc=LOOSE, target_assignment="per_dataset"))
    assert len({a["target_speaker"] for a in per_ds.assignments}) == 1
    per_utt = run_anonymization(S, T, PipelineConfig(strategy="knnvc", knnvc=LOOSE))
    assert len({a["target_speaker"] for a in per_utt.assignments}) > 1
    assert all(a["target_speaker"].startswith("tgt") for a in per_utt.assignments)


def test_source_speaker_never_own_target(small):
    S = Corpus.from_synth(small)
    res = run_anonymization(S, S, PipelineConfig(strategy="knnvc", knnvc=LOOSE))
    for a, rec in zip(res.assignments, small.manifest):
        assert a["target_speaker"] != rec.speaker_id


def test_proxy_prompt_within_top_n(small):
    prompts = generate_corpus(replace(SMALL, speaker_seed=3, speaker_prefix="p"))
    S, P = Corpus.from_synth(small), Corpus.from_synth(prompts)
    cfg = PipelineConfig(strategy="proxy_prompt", proxy=ProxyConfig(top_n=3))
    res = run_anonymization(S, P, cfg)
    ids = prompts.manifest.utt_ids
    cand = [prompts.emotion_embs[u].data.astype(np.float64).tolist() for u in ids]
    for a in res.assignments:
        order, _ = cosine_ranking(small.emotion_embs[a["utt_id"]].data.astype(np.float64).tolist(), cand)
        assert a["prompt"] in {ids[i] for i in order[:3]}
        assert 1 <= a["rank"] <= 3
    assert res.frames == {}


def test_random_prompt_and_clone(small):
    prompts = generate_corpus(replace(SMALL, speaker_seed=3, speaker_prefix="p"))
    cfg = PipelineConfig(strategy="random_prompt", clone_prompt_frames=True)
    res = run_anonymization(Corpus.from_synth(small), Corpus.from_synth(prompts), cfg, SynthExtractor(small.truth))
    for a in res.assignments:
        assert res.frames[a["utt_id"]] == prompts.frames[a["prompt"]]
        assert a["utt_id"] in res.emotion_embs


def test_missing_artifact():
    m = Manifest((UtteranceRecord("a", "s"),), "x")
    with pytest.raises(MissingArtifact) as ei:
        run_anonymization(Corpus(m), Corpus(m), PipelineConfig(strategy="knnvc", knnvc=LOOSE))
    with pytest.raises(MissingArtifact):
        run_anonymization(Corpus(m), None, PipelineConfig(strategy="noise"))


def _external_script(tmp_path, body):
    script = tmp_path / "stage.py"
    script.write_text(body)
    return f"{sys.executable} {script} {{input}} {{output}} {{utt_id}}"


def test_external_roundtrip(tmp_path, small):
    cmd = _external_script(tmp_path, "import shutil, sys\nshutil.copy(sys.argv[1], sys.argv[2])\n")
    sub = small.manifest.subset(small.manifest.utt_ids[:3])
    res = run_anonymization(Corpus.from_synth(small, sub), None, PipelineConfig(strategy="external", external_cmd=cmd, workers=2))
    for u in sub.utt_ids:
        assert res.frames[u] == small.frames[u]


def test_external_failures(tmp_path, small):
    sub = small.manifest.subset(small.manifest.utt_ids[:1])
    cmd = _external_script(tmp_path, "import sys\nsys.stderr.write('boom')\nsys.exit(7)\n")
    with pytest.raises(ExternalStageFailed) as ei:
        run_anonymization(Corpus.from_synth(small, sub), None, PipelineConfig(strategy="external", external_cmd=cmd))
    assert ei.value.exit_code == 7 and "boom" in ei.value.stderr
    cmd = _external_script(tmp_path, "import sys\nopen(sys.argv[2], 'wb').write(b'junk')\n")
    with pytest.raises(ExternalStageFailed):
        run_anonymization(Corpus.from_synth(small, sub), None, PipelineConfig(strategy="external", external_cmd=cmd))


def test_workers_do_not_change_output(small):
    tgt = generate_corpus(replace(SMALL, speaker_seed=7, speaker_prefix="tgt", num_speakers=3))
    S, T = Corpus.from_synth(small), Corpus.from_synth(tgt)
    outs = [run_anonymization(S, T, PipelineConfig(strategy=s, knnvc=LOOSE, workers=w))
            for s in ("knnvc", "noise") for w in (1, 4)]
    for a, b in ((outs[0], outs[1]), (outs[2], outs[3])):
        assert a.assignments == b.assignments
        assert all(a.frames[u] == b.frames[u] for u in a.frames)


def test_write_layout(tmp_path, small):
    res = run_anonymization(Corpus.from_synth(small), None, PipelineConfig(strategy="noise", seed=2))
    res.write(tmp_path / "out")
    m = load_manifest(tmp_path / "out" / "manifest.jsonl")
    back = Corpus(m)
    u = m.utt_ids[0]
    assert back.frames(u) == res.frames[u]
    log = [json.loads(line) for line in (tmp_path / "out" / "assignments.jsonl").read_text().splitlines()]
    assert [row["utt_id"] for row in log] == m.utt_ids


def _eval_inputs(corpus, anon, seed=0):
    train, ev = split_speakers(corpus.manifest, 10, seed=seed)
    A = anon.corpus() if hasattr(anon, "corpus") else anon
    trials = generate_trials(ev, 300, 300, seed=seed)
    hyps = corrupt_transcripts(ev, 0.1, seed=seed)
    return EvalInputs(
        attacker_train=A.subset(train),
        privacy={"synth": (A.subset(ev), trials)},
        emotion_train=Corpus.from_synth(corpus, train),
        utility={"synth": A.subset(ev)},
        asr={"synth": (ev, hyps)},
    )


def test_full_eval_passthrough_and_noise():
    c = generate_corpus(SynthConfig(rho=0.8, frames_per_utt=(5, 10)))
    S = Corpus.from_synth(c)
    row = run_full_eval("origin", _eval_inputs(c, run_anonymization(S, None, PipelineConfig())))
    assert row.eer["synth"] < 0.2 and row.uar["synth"] >= 0.9
    assert 0.05 < row.wer["synth"] < 0.15
    noise = run_anonymization(S, None, PipelineConfig(strategy="noise"), SynthExtractor(c.truth))
    row = run_full_eval("noise", _eval_inputs(c, noise))
    assert abs(row.eer["synth"] - 0.5) <= 0.05


def test_probe_backends_run():
    c = generate_corpus(SynthConfig(num_speakers=20, utts_per_speaker=10, frames_per_utt=(2, 3)))
    S = Corpus.from_synth(c)
    cfg = PipelineConfig(attacker_backend="probe", emotion_recognizer="probe",
                         probe=__import__("vpemo.probe", fromlist=["ProbeConfig"]).ProbeConfig(epochs=5, hidden_dim=16))
    row = run_full_eval("p", _eval_inputs(c, run_anonymization(S, None, cfg)), cfg)
    assert 0.0 <= row.eer["synth"] <= 1.0 and 0.0 <= row.uar["synth"] <= 1.0


def test_eval_error_names_subset():
    c = generate_corpus(SMALL)
    S = Corpus.from_synth(c)
    from vpemo.datamodel import TrialList
    inputs = EvalInputs(attacker_train=S, privacy={"empty-set": (S, TrialList(()))})
    with pytest.raises(NoTrials) as ei:
        run_full_eval("x", inputs)
    assert ei.value.subset == "empty-set"


ORIGIN = SystemRow("Origin", {"libri-dev-f": 0.10511, "libri-dev-m": 0.00931, "libri-test-f": 0.08761, "libri-test-m": 0.00418},
                   {"IEMOCAP-dev": 0.690796, "IEMOCAP-test": 0.710618}, {"libri-dev": 0.01807, "libri-test": 0.01844})
KNN = SystemRow("kNN-VC", {"libri-dev-f": 0.18351, "libri-dev-m": 0.13663, "libri-test-f": 0.16239, "libri-test-m": 0.12496},
                {"IEMOCAP-dev": 0.477042, "IEMOCAP-test": 0.506086}, {"libri-dev": 0.02991, "libri-test": 0.02962})


def test_render_markdown_layout():
    text = render_report(EvalReport([ORIGIN, KNN]))
    lines = text.splitlines()
    assert "Privacy - EER (%)" in lines[0] and "Utility - UAR mean (%)" in lines[0] and "Utility - WER (%)" in lines[0]
    assert lines[2].count("avg.") == 3
    cells = lambda line: [c.strip() for c in line.strip("|").split("|")]  # noqa: E731
    origin = cells(lines[3])
    assert "10.511" in origin and "5.16" in origin and "70.07" in origin and "1.83" in origin
    knn = cells(lines[4])
    assert "15.19" in knn and "49.16" in knn


def test_render_json_roundtrip_and_csv():
    rep = EvalReport([ORIGIN, KNN], [SeedReport.from_eers([(0, 0.2), (1, 0.18)], train_set="a", test_set="b", num_trials=10)], {"k": 1})
    back = EvalReport.from_json(json.loads(render_report(rep, "json")))
    assert back == rep
    csv_text = render_report(rep, "csv")
    assert csv_text.splitlines()[0].startswith("System,Privacy - EER (%): libri-dev-f")
    md = render_report(EvalReport(seed_reports=rep.seed_reports))
    assert "| a | b | 10 | 19.000 ± 1.414 | 18.000 | 20.000 |" in md
    with pytest.raises(EmptyReport):
        render_report(EvalReport())


def test_tradeoff_points():
    pts, labels = tradeoff_points(EvalReport([ORIGIN, KNN]))
    assert labels == ["Origin", "kNN-VC"]
    assert pts[1][0] == pytest.approx(15.18725) and pts[1][1] == pytest.approx(49.1564)
