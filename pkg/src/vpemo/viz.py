"""Exact t-SNE and scatter export (CSV + standalone SVG)."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .datamodel import EmbeddingVector
from .errors import InvalidConfig, LengthMismatch, PerplexityTooLarge, TooManyPoints

MAX_POINTS = 5000
ENTROPY_TOL = 1e-5


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float | str = 200.0  # or "auto": max(N / (4 * early_exaggeration), 50)
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch: int = 250
    init: str = "pca"
    seed: int = 0
    min_gain: float = 0.01
    # unbounded gains let a slowly drifting point take one huge late step
    max_gain: float = 20.0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidConfig("iterations must be >= 1")
        if self.perplexity < 1:
            raise InvalidConfig("perplexity must be >= 1")
        if isinstance(self.learning_rate, str) and self.learning_rate != "auto":
            raise InvalidConfig("learning_rate must be a number or 'auto'")
        if not isinstance(self.learning_rate, str) and self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if not 0 < self.min_gain <= self.max_gain:
            raise InvalidConfig("need 0 < min_gain <= max_gain")
        if self.init not in ("pca", "random"):
            raise InvalidConfig("init must be 'pca' or 'random'")


@dataclass
class TsneResult:
    points: np.ndarray  # (N, 2)
    kl_trace: list = field(default_factory=list)  # (iteration, KL) pairs; iteration 0 is the init
    entropies: np.ndarray | None = None  # achieved per-point entropies (nats)
    config: dict = field(default_factory=dict)

    @property
    def initial_kl(self) -> float:
        return self.kl_trace[0][1]

    @property
    def final_kl(self) -> float:
        return self.kl_trace[-1][1]


def _matrix(embeddings) -> np.ndarray:
    rows = [e.data if isinstance(e, EmbeddingVector) else np.asarray(e) for e in embeddings]
    if not rows:
        return np.zeros((0, 1))
    return np.stack(rows).astype(np.float64)


def joint_probabilities(X: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrised affinities P (sums to 1) and the achieved per-point entropies."""
    sq = (X * X).sum(axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(dist2, 0.0)
    cond, _, entropies = kernels.perplexity_search(dist2, float(perplexity), ENTROPY_TOL, 200)
    P = cond + cond.T
    P /= P.sum()
    return P, entropies


def top_components(X: np.ndarray, k: int = 2, tol: float = 1e-9, max_iter: int = 1000) -> np.ndarray:
    """Leading principal directions of centred X by power iteration with deflation."""
    C = X.T @ X / max(1, X.shape[0])
    d = C.shape[0]
    comps = []
    for c in range(k):
        v = np.ones(d) / math.sqrt(d)
        v[c % d] += 0.5  # break symmetry deterministically
        v /= np.linalg.norm(v)
        for _ in range(max_iter):
            w = C @ v
            n = np.linalg.norm(w)
            if n == 0.0:
                break
            w /= n
            if np.linalg.norm(w - v) < tol:
                v = w
                break
            v = w
        i = int(np.argmax(np.abs(v)))
        if v[i] < 0:
            v = -v
        comps.append(v)
        lam = float(v @ C @ v)
        C = C - lam * np.outer(v, v)
    return np.stack(comps, axis=1)


def tsne(embeddings: Sequence, config: TsneConfig | None = None) -> TsneResult:
    cfg = config or TsneConfig()
    X = _matrix(embeddings)
    n = X.shape[0]
    if n > MAX_POINTS:
        raise TooManyPoints(f"{n} points; the exact method is limited to {MAX_POINTS}")
    if n < 3:
        raise PerplexityTooLarge(f"need at least 3 points, got {n}")
    if cfg.perplexity >= n:
        raise PerplexityTooLarge(f"perplexity {cfg.perplexity} must be < N={n}")
    # a perplexity near N makes P almost uniform, which t-SNE cannot fit
    perplexity = min(cfg.perplexity, (n - 1) / 3.0)
    P, entropies = joint_probabilities(X, perplexity)

    if cfg.init == "pca":
        Xc = X - X.mean(axis=0)
        Y = Xc @ top_components(Xc, 2)
        sd = Y[:, 0].std()
        Y = Y / sd * 1e-4 if sd > 0 else np.random.default_rng(cfg.seed).standard_normal((n, 2)) * 1e-4
    else:
        Y = np.random.default_rng(cfg.seed).standard_normal((n, 2)) * 1e-4
    Y = np.ascontiguousarray(Y)

    lr = cfg.learning_rate
    if lr == "auto":
        lr = max(n / (4.0 * cfg.early_exaggeration), 50.0)
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    _, kl0 = kernels.tsne_gradient(Y, P, 1.0)
    trace = [(0, float(kl0))]
    for it in range(1, cfg.iterations + 1):
        exag = cfg.early_exaggeration if it <= cfg.exaggeration_iters else 1.0
        mom = cfg.momentum if it <= cfg.momentum_switch else cfg.final_momentum
        grad, kl = kernels.tsne_gradient(Y, P, exag)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.clip(gains, cfg.min_gain, cfg.max_gain, out=gains)
        update = mom * update - lr * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if it % 50 == 0 or it == cfg.iterations:
            _, kl_now = kernels.tsne_gradient(Y, P, 1.0)
            trace.append((it, float(kl_now)))
    meta = asdict(cfg) | {"method": "exact", "backend": kernels.BACKEND, "effective_perplexity": perplexity,
                           "effective_learning_rate": float(lr)}
    return TsneResult(Y, trace, entropies, meta)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def label_colors(labels: Sequence) -> dict:
    """Colour per label, assigned in sorted label order."""
    uniq = sorted({str(l) for l in labels})
    out = {}
    for i, lab in enumerate(uniq):
        if i < len(_PALETTE):
            out[lab] = _PALETTE[i]
        else:
            hue = (i * 137.508) % 360
            out[lab] = f"hsl({hue:.1f},60%,45%)"
    return out


def scatter_csv(points, labels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "label"])
    for (x, y), lab in zip(points, labels):
        w.writerow([repr(float(x)), repr(float(y)), lab])
    return buf.getvalue()


def scatter_svg(points, labels, width: int = 480, height: int = 480, margin: int = 40,
                x_label: str = "x", y_label: str = "y", title: str = "") -> str:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    colors = label_colors(labels)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
    ]
    if title:
        out.append(f'<title>{_esc(title)}</title>')
    x0, y0, x1, y1 = margin, height - margin, width - margin, margin
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{height - 8}" text-anchor="middle" font-size="12">{_esc(x_label)}</text>')
    out.append(f'<text x="12" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="12" transform="rotate(-90 12 {(y0 + y1) / 2:.1f})">{_esc(y_label)}</text>')
    if len(pts):
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        for (x, y), lab in zip(pts, labels):
            px = x0 + (x - lo[0]) / span[0] * (x1 - x0)
            py = y0 - (y - lo[1]) / span[1] * (y0 - y1)
            out.append(
                f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{colors[str(lab)]}" data-x="{float(x)!r}" data-y="{float(y)!r}"><title>{_esc(str(lab))}</title></circle>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def export_scatter(points, labels, path, **svg_kwargs) -> tuple[Path, Path]:
    """Write ``<path>.csv`` and ``<path>.svg``; returns both paths."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    labels = [str(l) for l in labels]
    if len(pts) != len(labels):
        raise LengthMismatch(f"{len(pts)} points vs {len(labels)} labels")
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path = base.with_suffix(".csv")
    svg_path = base.with_suffix(".svg")
    csv_path.write_text(scatter_csv(pts, labels), encoding="utf-8")
    svg_path.write_text(scatter_svg(pts, labels, **svg_kwargs), encoding="utf-8")
    return csv_path, svg_path
