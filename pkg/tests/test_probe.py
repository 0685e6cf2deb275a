import math

import numpy as np
import pytest

from vpemo.datamodel import EmbeddingVector, Trial, TrialList
from vpemo.errors import ClassTooSmall, DimMismatch, TooFewClasses, ValidationError
from vpemo.probe import (
    ProbeConfig,
    ProbeModel,
    SeedReport,
    cross_entropy,
    extract_speaker_embedding,
    forward,
    grad_check,
    init_model,
    load_probe,
    loss_and_grads,
    predict,
    run_seeds,
    save_probe,
    stratified_split,
    train_probe,
)


def test_zero_model_uniform():
    m = ProbeModel.zeros(3, 5, 4)
    logits, hidden = forward(np.array([1.0, -2.0, 0.5]), m)
    assert np.all(logits == 0) and np.all(hidden == 0)
    assert cross_entropy(m, np.ones((2, 3)), np.array([0, 3])) == pytest.approx(math.log(4))


def test_relu_hidden():
    m = ProbeModel.zeros(2, 2, 2)
    m.W1[:] = np.eye(2)
    _, hidden = forward(EmbeddingVector(np.array([1.0, -1.0])), m, mode="train", rng=np.random.default_rng(0), dropout=0.0)
    assert hidden.tolist() == [1.0, 0.0]


def test_eval_equals_dropout_expectation(rng):
    m = init_model(6, 32, 3, rng)
    x = rng.standard_normal(6)
    eval_logits, _ = forward(x, m)
    X = np.repeat(x[None, :], 10_000, axis=0)
    train_logits, _ = forward(X, m, mode="train", rng=np.random.default_rng(1), dropout=0.5)
    mean = train_logits.mean(axis=0)
    # compare the linear part (logits minus bias)
    rel = np.abs((mean - m.b2) - (eval_logits - m.b2)) / np.abs(eval_logits - m.b2)
    assert rel.max() < 0.02


def test_forward_errors(rng):
    m = init_model(3, 4, 2, rng)
    with pytest.raises(DimMismatch):
        forward(np.ones(2), m)
    with pytest.raises(ValidationError):
        forward(np.ones(3), m, mode="train")


def test_grad_check_random(rng):
    m = init_model(8, 16, 4, rng)
    X = rng.standard_normal((5, 8))
    y = rng.integers(0, 4, 5)
    assert grad_check(m, X, y) < 1e-4


def test_zero_model_b2_closed_form(rng):
    m = ProbeModel.zeros(4, 6, 3)
    X = rng.standard_normal((7, 4))
    y = rng.integers(0, 3, 7)
    _, grads = loss_and_grads(m, X, y)
    onehot = np.eye(3)[y]
    np.testing.assert_allclose(grads["b2"], (np.full((7, 3), 1 / 3) - onehot).mean(axis=0), atol=1e-12)
    eps = 1e-4
    for c in range(3):
        mp, mm = m.copy(), m.copy()
        mp.b2[c] += eps
        mm.b2[c] -= eps
        fd = (cross_entropy(mp, X, y) - cross_entropy(mm, X, y)) / (2 * eps)
        assert grads["b2"][c] == pytest.approx(fd, abs=1e-6)


def test_grad_check_rejects_eps(rng):
    m = init_model(2, 3, 2, rng)
    with pytest.raises(ValidationError):
        grad_check(m, np.ones((1, 2)), np.array([0]), eps=0.0)


def test_separable_blobs_converge(rng):
    y = np.repeat([0, 1], 100)
    X = rng.standard_normal((200, 4)) * 0.5
    X[y == 1] += 3.0
    model, log = train_probe(X, ProbeConfig(epochs=50), labels=list(y))
    assert log.best_val_acc >= 0.95
    assert len(log.epochs) == 50 and 1 <= log.best_epoch <= 50


def test_shuffled_labels_chance(rng):
    X = rng.standard_normal((2000, 8))
    y = list(rng.permutation(np.repeat(["a", "b", "c", "d"], 500)))
    _, log = train_probe(X, ProbeConfig(epochs=20), labels=y)
    assert abs(log.best_val_acc - 0.25) <= 0.1


def test_class_errors(rng):
    with pytest.raises(TooFewClasses):
        train_probe(rng.standard_normal((5, 2)), labels=["a"] * 5)
    with pytest.raises(ClassTooSmall):
        train_probe(rng.standard_normal((5, 2)), labels=["a"] * 4 + ["b"])


def test_pair_input_and_predict(rng):
    data = [(EmbeddingVector(rng.standard_normal(3) + (4 if i % 2 else -4)), "odd" if i % 2 else "even") for i in range(40)]
    model, _ = train_probe(data, ProbeConfig(epochs=30, hidden_dim=8))
    assert model.classes == ("even", "odd")
    assert predict(np.array([[4.0, 4, 4], [-4.0, -4, -4]]), model) == ["odd", "even"]


def test_stratified_split_keeps_both_sides():
    labels = ["a"] * 10 + ["b"] * 2
    s = stratified_split(labels, 0.1, np.random.default_rng(0))
    assert len(s.val) == 2 and len(s.train) == 10
    assert {labels[i] for i in s.val} == {"a", "b"}


def test_training_deterministic(rng):
    X = rng.standard_normal((60, 5))
    y = list(np.repeat(["x", "y", "z"], 20))
    a, la = train_probe(X, ProbeConfig(epochs=5, seed=3), labels=y)
    b, lb = train_probe(X, ProbeConfig(epochs=5, seed=3), labels=y)
    assert all(np.array_equal(a.params()[k], b.params()[k]) for k in a.params())
    assert la.to_jsonl() == lb.to_jsonl()


def test_speaker_embedding_properties(rng):
    assert np.all(extract_speaker_embedding(np.ones(3), ProbeModel.zeros(3, 5, 2)).data == 0)
    m = ProbeModel.zeros(3, 2, 2)
    x = np.array([1.0, 2.0, 2.0])
    m.W1[0] = x / 3.0
    m.W1[1] = -x
    emb = extract_speaker_embedding(x, m)
    assert emb.dim == 2 and emb.kind == "speaker"
    assert emb.data[0] == pytest.approx(3.0) and emb.data[1] == 0.0
    m = init_model(4, 16, 3, rng)
    for _ in range(20):
        assert np.all(extract_speaker_embedding(rng.standard_normal(4) * 5, m).data >= 0)


def test_seed_report_layout():
    r = SeedReport.from_eers([(0, 0.19280)], train_set="libri-train-360", test_set="lib-dev-f", num_trials=15270)
    assert r.std == 0.0 and r.min == r.max == r.mean
    r = SeedReport.from_eers([(0, 0.1662), (1, 0.23131), (2, 0.18)])
    assert r.row().startswith(f"{100 * r.mean:.3f} ± ")
    assert r.row().endswith("| 16.620 | 23.131")
    assert SeedReport.from_json(r.to_json()) == r


def test_run_seeds_small(rng):
    centers = rng.standard_normal((6, 4)) * 3
    spk = np.repeat(np.arange(6), 20)
    X = centers[spk] + rng.standard_normal((120, 4)) * 0.3
    ev = {f"e{i}": centers[i // 5] + rng.standard_normal(4) * 0.3 for i in range(30)}
    trials = TrialList(tuple(
        Trial(f"e{a}", f"e{b}", "target" if a // 5 == b // 5 else "nontarget")
        for a in range(0, 30, 3) for b in range(1, 30, 4)
    ))
    rep = run_seeds(X, [f"s{s}" for s in spk], ProbeConfig(epochs=10, hidden_dim=16), [0, 1], trials, ev)
    assert len(rep.per_seed_eer) == 2 and rep.num_trials == len(trials)
    assert rep.mean < 0.2


def test_checkpoint_roundtrip(tmp_path, rng):
    m = init_model(3, 4, 2, rng, classes=("a", "b"))
    save_probe(tmp_path / "p.bin", m, ProbeConfig())
    back, header = load_probe(tmp_path / "p.bin")
    assert back.classes == ("a", "b") and header["hidden_dim"] == 4
    np.testing.assert_allclose(back.W1, m.W1, rtol=1e-6)
