import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from vpemo import metrics
from vpemo.datamodel import decode_vpfx, encode_vpfx
from vpemo.proxy import ProxyConfig, PromptCorpus, select_prompt

finite32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)
# dyadic grid so the monotone map below stays exact and keeps ties as ties
scores = st.lists(st.integers(-400, 400).map(lambda k: k / 8), min_size=1, max_size=40)
words = st.lists(st.sampled_from("a b c d e".split()), min_size=0, max_size=8)


@given(hnp.arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(1, 5)), elements=finite32),
       st.sampled_from(["frames", "speaker", "emotion"]))
def test_vpfx_roundtrip(arr, kind):
    got_kind, got = decode_vpfx(encode_vpfx(arr, kind))
    assert got_kind == kind
    assert got.tobytes() == arr.tobytes()


def _warp(x):
    x = np.asarray(x)
    return x ** 3 + 5 * x - 2


@given(scores, scores)
def test_eer_bounded_and_monotone_invariant(tar, non):
    base = metrics.eer_from_scores(tar, non).eer
    assert 0.0 <= base <= 1.0
    moved = metrics.eer_from_scores(_warp(tar), _warp(non)).eer
    assert abs(base - moved) < 1e-9


@given(words.filter(bool))
def test_wer_identity(ref):
    assert metrics.compute_wer(ref, ref).wer == 0.0


@given(words.filter(bool), words.filter(bool))
def test_edit_count_symmetric(a, b):
    ab, ba = metrics.compute_wer(a, b), metrics.compute_wer(b, a)
    assert ab.errors == ba.errors
    assert ab.insertions == ba.deletions


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.randoms())
def test_uar_permutation_invariant(pairs, rnd):
    refs, preds = zip(*pairs)
    before = metrics.compute_uar(refs, preds, range(4)).uar
    rnd.shuffle(pairs)
    refs, preds = zip(*pairs)
    assert metrics.compute_uar(refs, preds, range(4)).uar == before


@given(st.text(max_size=40))
def test_normalize_idempotent(s):
    once = metrics.normalize_text(s)
    assert metrics.normalize_text(" ".join(once)) == once


@settings(max_examples=50)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_select_prompt_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    vecs = rng.normal(size=(12, 4))
    corpus = PromptCorpus([f"u{i}" for i in range(12)], [f"s{i % 3}" for i in range(12)], vecs)
    src = rng.normal(size=4)
    cfg = ProxyConfig(pool_size=8, top_n=3)
    a = select_prompt(src, corpus, cfg, np.random.default_rng(seed), source_speaker="s0")
    b = select_prompt(src * scale, corpus, cfg, np.random.default_rng(seed), source_speaker="s0")
    assert a.chosen_id == b.chosen_id and a.rank == b.rank
