import csv
import io
import re

import numpy as np
import pytest

from oracles import purity, two_means
from vpemo.datamodel import EmbeddingVector
from vpemo.errors import InvalidConfig, LengthMismatch, PerplexityTooLarge, TooManyPoints
from vpemo.viz import TsneConfig, export_scatter, joint_probabilities, label_colors, scatter_svg, top_components, tsne


def test_joint_probabilities_properties(rng):
    X = rng.standard_normal((40, 5))
    P, ent = joint_probabilities(X, 8.0)
    assert np.allclose(P, P.T) and (P >= 0).all() and P.sum() == pytest.approx(1.0)
    assert np.all(np.abs(ent - np.log(8.0)) <= 1e-5)
    assert np.all(np.diag(P) == 0)


def test_top_components_match_svd(rng):
    X = rng.standard_normal((100, 6)) * np.array([5, 3, 1, 1, 0.5, 0.1])
    X -= X.mean(axis=0)
    comps = top_components(X, 2)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    for k in range(2):
        assert abs(comps[:, k] @ vt[k]) == pytest.approx(1.0, abs=1e-6)


def test_two_clusters_separate(rng):
    a = rng.standard_normal((100, 10))
    b = rng.standard_normal((100, 10)) + 8.0
    X = np.vstack([a, b])
    truth = [0] * 100 + [1] * 100
    res = tsne([EmbeddingVector(x) for x in X], TsneConfig(iterations=500))
    assert purity(truth, two_means(res.points.tolist())) >= 0.9
    assert res.final_kl < res.initial_kl
    assert res.config["effective_perplexity"] == 30.0


def test_kl_decreases_random(rng):
    res = tsne(rng.standard_normal((50, 4)), TsneConfig(seed=1))
    assert res.final_kl < res.initial_kl
    assert [it for it, _ in res.kl_trace][:3] == [0, 50, 100]


def test_rejections(rng):
    with pytest.raises(PerplexityTooLarge):
        tsne(rng.standard_normal((2, 3)))
    with pytest.raises(PerplexityTooLarge):
        tsne(rng.standard_normal((10, 3)), TsneConfig(perplexity=10))
    with pytest.raises(TooManyPoints):
        tsne(np.zeros((5001, 1)))
    with pytest.raises(InvalidConfig):
        TsneConfig(init="umap")
    with pytest.raises(InvalidConfig):
        TsneConfig(min_gain=2.0, max_gain=1.0)


def test_deterministic(rng):
    X = rng.standard_normal((30, 3))
    a = tsne(X, TsneConfig(perplexity=5, iterations=100, init="random", seed=4))
    b = tsne(X, TsneConfig(perplexity=5, iterations=100, init="random", seed=4))
    assert a.points.tobytes() == b.points.tobytes()


def test_export_three_points(tmp_path):
    csv_path, svg_path = export_scatter([[0, 0], [1, 1], [2, 0]], ["a", "b", "a"], tmp_path / "plot")
    rows = list(csv.reader(io.StringIO(csv_path.read_text())))
    assert rows[0] == ["x", "y", "label"] and len(rows) == 4
    svg = svg_path.read_text()
    assert svg.count("<circle") == 3
    colors = label_colors(["b", "a"])
    assert f'fill="{colors["a"]}"' in svg and colors["a"] != colors["b"]


def test_export_empty(tmp_path):
    csv_path, svg_path = export_scatter(np.zeros((0, 2)), [], tmp_path / "empty.svg")
    assert csv_path.read_text() == "x,y,label\n"
    svg = svg_path.read_text()
    assert "<circle" not in svg and svg.count("<line") == 2


def test_export_length_mismatch(tmp_path):
    with pytest.raises(LengthMismatch):
        export_scatter([[0, 0]], ["a", "b"], tmp_path / "x")


def test_tradeoff_point_coordinates():
    svg = scatter_svg([(15.19, 49.16), (5.16, 70.07)], ["kNN-VC", "Origin"], x_label="EER (%)", y_label="UAR (%)")
    pts = re.findall(r'data-x="([^"]+)" data-y="([^"]+)"><title>([^<]+)<', svg)
    assert ("15.19", "49.16", "kNN-VC") in pts


def test_auto_learning_rate(rng):
    res = tsne(rng.standard_normal((50, 4)), TsneConfig(learning_rate="auto", iterations=60))
    assert res.config["effective_learning_rate"] == 50.0
    with pytest.raises(InvalidConfig):
        TsneConfig(learning_rate="fast")
