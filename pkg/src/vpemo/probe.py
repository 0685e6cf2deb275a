"""Two-layer probe classifier with hand-written backprop.

input -> Linear(hidden) -> ReLU -> inverted dropout -> Linear(classes)

The probe serves three roles: a speaker classifier trained on emotion
embeddings (its hidden layer is then the speaker embedding), the backend of
the semi-informed attacker, and an emotion recognizer on synthetic data.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Hashable, Sequence

import numpy as np

from .datamodel import EmbeddingVector, TrialList, decode_vpfx, encode_vpfx
from .errors import (
    ClassTooSmall,
    DimMismatch,
    EmptyInput,
    FormatError,
    InvalidConfig,
    TooFewClasses,
    ValidationError,
)

PARAMS = ("W1", "b1", "W2", "b2")


@dataclass(frozen=True)
class ProbeConfig:
    input_dim: int | None = None  # inferred from data when None
    num_classes: int | None = None
    hidden_dim: int = 192
    dropout: float = 0.5
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 50
    val_fraction: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must be in [0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise InvalidConfig("val_fraction must be in (0, 1)")
        for name in ("hidden_dim", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        for name in ("input_dim", "num_classes"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise InvalidConfig(f"{name} must be >= 1")


@dataclass
class ProbeModel:
    W1: np.ndarray  # (hidden, input)
    b1: np.ndarray
    W2: np.ndarray  # (classes, hidden)
    b2: np.ndarray
    classes: tuple = ()

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAMS}

    def copy(self) -> "ProbeModel":
        return ProbeModel(*(getattr(self, n).copy() for n in PARAMS), classes=self.classes)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, num_classes: int) -> "ProbeModel":
        return cls(
            np.zeros((hidden_dim, input_dim)),
            np.zeros(hidden_dim),
            np.zeros((num_classes, hidden_dim)),
            np.zeros(num_classes),
            tuple(range(num_classes)),
        )


def init_model(input_dim: int, hidden_dim: int, num_classes: int, rng: np.random.Generator, classes=()) -> ProbeModel:
    """Uniform(+-1/sqrt(fan_in)) initialisation."""
    a1 = 1.0 / math.sqrt(input_dim)
    a2 = 1.0 / math.sqrt(hidden_dim)
    return ProbeModel(
        rng.uniform(-a1, a1, size=(hidden_dim, input_dim)),
        rng.uniform(-a1, a1, size=hidden_dim),
        rng.uniform(-a2, a2, size=(num_classes, hidden_dim)),
        rng.uniform(-a2, a2, size=num_classes),
        tuple(classes) if classes else tuple(range(num_classes)),
    )


def _as_batch(x, input_dim: int) -> tuple[np.ndarray, bool]:
    if isinstance(x, EmbeddingVector):
        x = x.data
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise DimMismatch(f"input dim {arr.shape[-1]} != model input dim {input_dim}")
    return arr, single


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: keep with prob 1-p and scale survivors by 1/(1-p)."""
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def forward(x, model: ProbeModel, mode: str = "eval", rng: np.random.Generator | None = None, dropout: float = 0.5):
    """Return (logits, hidden) for one vector or a batch.

    ``hidden`` is the post-ReLU activation before dropout. ``mode="train"``
    applies inverted dropout with probability ``dropout`` drawn from ``rng``.
    """
    X, single = _as_batch(x, model.input_dim)
    hidden = np.maximum(X @ model.W1.T + model.b1, 0.0)
    h = hidden
    if mode == "train":
        if rng is None:
            raise ValidationError("train mode needs an rng")
        h = hidden * dropout_mask(hidden.shape, dropout, rng)
    elif mode != "eval":
        raise ValidationError(f"unknown mode {mode!r}")
    logits = h @ model.W2.T + model.b2
    if single:
        return logits[0], hidden[0]
    return logits, hidden


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(model: ProbeModel, X: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None) -> float:
    h = np.maximum(X @ model.W1.T + model.b1, 0.0)
    if mask is not None:
        h = h * mask
    logp = _log_softmax(h @ model.W2.T + model.b2)
    return float(-logp[np.arange(len(y)), y].mean())


def loss_and_grads(model: ProbeModel, X: np.ndarray, y: np.ndarray, mask: np.ndarray | None = None):
    """Mean softmax cross-entropy and its gradient w.r.t. every parameter."""
    n = X.shape[0]
    z1 = X @ model.W1.T + model.b1
    active = z1 > 0
    h = np.where(active, z1, 0.0)
    if mask is not None:
        h = h * mask
    logits = h @ model.W2.T + model.b2
    logp = _log_softmax(logits)
    rows = np.arange(n)
    loss = float(-logp[rows, y].mean())
    dlogits = np.exp(logp)
    dlogits[rows, y] -= 1.0
    dlogits /= n
    grads = {"W2": dlogits.T @ h, "b2": dlogits.sum(axis=0)}
    dh = dlogits @ model.W2
    if mask is not None:
        dh = dh * mask
    dz1 = dh * active
    grads["W1"] = dz1.T @ X
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads


def grad_check(model: ProbeModel, X, y, eps: float = 1e-4, abs_floor: float = 1e-8) -> float:
    """Largest relative error between analytic and central-difference gradients.

    Dropout is off. Relative error is ``|a - n| / max(|a|, |n|, abs_floor)``.
    A perturbation that flips some ReLU on either side is redone with a step
    100x smaller (up to three times) so the difference never straddles a kink.
    """
    if not eps > 0.0:
        raise ValidationError("eps must be positive")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise EmptyInput("empty batch")
    _, grads = loss_and_grads(model, X, y)
    base_active = (X @ model.W1.T + model.b1) > 0
    probe = model.copy()
    worst = 0.0
    for name in PARAMS:
        theta = getattr(probe, name)
        flat = theta.reshape(-1)
        g = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            step = eps
            for _ in range(4):
                flat[i] = orig + step
                lp = cross_entropy(probe, X, y)
                ap = (X @ probe.W1.T + probe.b1) > 0
                flat[i] = orig - step
                lm = cross_entropy(probe, X, y)
                am = (X @ probe.W1.T + probe.b1) > 0
                flat[i] = orig
                if name not in ("W1", "b1") or ((ap == base_active).all() and (am == base_active).all()):
                    break
                step *= 1e-2
            num = (lp - lm) / (2.0 * step)
            denom = max(abs(g[i]), abs(num), abs_floor)
            worst = max(worst, abs(g[i] - num) / denom)
    return worst


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)  # dicts: epoch, train_loss, val_acc
    best_epoch: int = 0
    best_val_acc: float = 0.0

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e) + "\n" for e in self.epochs)


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray


def _as_dataset(data, labels=None) -> tuple[np.ndarray, list]:
    if labels is None:
        pairs = list(data)
        if not pairs:
            raise EmptyInput("no training data")
        X = np.stack([p[0].data if isinstance(p[0], EmbeddingVector) else np.asarray(p[0]) for p in pairs])
        labels = [p[1] for p in pairs]
    else:
        X = np.asarray(data)
        labels = list(labels)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise DimMismatch("data and labels disagree")
    return X.astype(np.float64), labels


def stratified_split(labels: Sequence[Hashable], val_fraction: float, rng: np.random.Generator) -> Split:
    """Per-class random split; every class keeps >= 1 sample on each side."""
    by_class: dict = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    train, val = [], []
    for lab in sorted(by_class, key=str):
        idx = rng.permutation(np.asarray(by_class[lab]))
        n_val = min(len(idx) - 1, max(1, int(round(val_fraction * len(idx)))))
        val.extend(idx[:n_val].tolist())
        train.extend(idx[n_val:].tolist())
    return Split(np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(val, dtype=np.int64)))


def accuracy(model: ProbeModel, X: np.ndarray, y: np.ndarray) -> float:
    logits, _ = forward(X, model)
    return float((logits.argmax(axis=1) == y).mean())


class _Adam:
    def __init__(self, model: ProbeModel, lr: float, b1: float, b2: float, eps: float):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {n: np.zeros_like(p) for n, p in model.params().items()}
        self.v = {n: np.zeros_like(p) for n, p in model.params().items()}
        self.t = 0

    def step(self, model: ProbeModel, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name in PARAMS:
            g = grads[name]
            self.m[name] = self.b1 * self.m[name] + (1.0 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1.0 - self.b2) * g * g
            update = self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            getattr(model, name)[...] -= update


def train_probe(
    data,
    config: ProbeConfig | None = None,
    labels=None,
    on_step: Callable[[ProbeModel, int, int], None] | None = None,
) -> tuple[ProbeModel, TrainLog]:
    """Train with Adam on a stratified split; return the best-validation snapshot.

    ``data`` is either a list of (vector, label) pairs or, with ``labels``, a
    2-D array. Ties in validation accuracy keep the earliest epoch.
    """
    config = config or ProbeConfig()
    X, labs = _as_dataset(data, labels)
    classes = sorted(set(labs), key=str)
    if len(classes) < 2:
        raise TooFewClasses(f"need >= 2 classes, got {len(classes)}")
    counts = {c: 0 for c in classes}
    for lab in labs:
        counts[lab] += 1
    for c in classes:
        if counts[c] < 2:
            raise ClassTooSmall(c)
    if config.input_dim is not None and config.input_dim != X.shape[1]:
        raise DimMismatch(f"config input_dim {config.input_dim} != data dim {X.shape[1]}")
    if config.num_classes is not None and config.num_classes != len(classes):
        raise DimMismatch(f"config num_classes {config.num_classes} != {len(classes)} classes in data")
    pos = {c: i for i, c in enumerate(classes)}
    y = np.array([pos[lab] for lab in labs], dtype=np.int64)

    split_ss, init_ss, shuffle_ss, drop_ss = np.random.SeedSequence(config.seed).spawn(4)
    split = stratified_split(labs, config.val_fraction, np.random.default_rng(split_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    drop_rng = np.random.default_rng(drop_ss)
    model = init_model(X.shape[1], config.hidden_dim, len(classes), np.random.default_rng(init_ss), classes)
    opt = _Adam(model, config.learning_rate, config.beta1, config.beta2, config.adam_eps)

    Xtr, ytr = X[split.train], y[split.train]
    Xva, yva = X[split.val], y[split.val]
    log = TrainLog()
    best = model.copy()
    best_acc = -1.0
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(ytr))
        total = 0.0
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            mask = dropout_mask((len(idx), config.hidden_dim), config.dropout, drop_rng)
            loss, grads = loss_and_grads(model, Xtr[idx], ytr[idx], mask)
            opt.step(model, grads)
            total += loss * len(idx)
            if on_step is not None:
                on_step(model, epoch, step)
        val_acc = accuracy(model, Xva, yva)
        log.epochs.append({"epoch": epoch, "train_loss": total / len(ytr), "val_acc": val_acc})
        if val_acc > best_acc:
            best_acc = val_acc
            best = model.copy()
            log.best_epoch = epoch
    log.best_val_acc = best_acc
    return best, log


def embed(X, model: ProbeModel) -> np.ndarray:
    """Eval-mode hidden activations for a batch."""
    _, hidden = forward(X, model, mode="eval")
    return hidden


def extract_speaker_embedding(x, model: ProbeModel) -> EmbeddingVector:
    _, hidden = forward(x, model, mode="eval")
    return EmbeddingVector(hidden, kind="speaker")


def predict(X, model: ProbeModel) -> list:
    logits, _ = forward(X, model, mode="eval")
    logits = np.atleast_2d(logits)
    return [model.classes[i] for i in logits.argmax(axis=1)]


# ---------------------------------------------------------------------------
# Multi-seed evaluation
# ---------------------------------------------------------------------------


@dataclass
class SeedReport:
    per_seed_eer: list  # (seed, eer) pairs, eer as a fraction
    mean: float
    std: float
    min: float
    max: float
    train_set: str = ""
    test_set: str = ""
    num_trials: int = 0

    @classmethod
    def from_eers(cls, pairs: Sequence[tuple[int, float]], **meta) -> "SeedReport":
        if not pairs:
            raise EmptyInput("no seeds")
        vals = np.array([e for _, e in pairs], dtype=np.float64)
        mean = math.fsum(vals) / len(vals)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        return cls([(int(s), float(e)) for s, e in pairs], mean, std, float(vals.min()), float(vals.max()), **meta)

    def to_json(self) -> dict:
        return asdict(self) | {"per_seed_eer": [list(p) for p in self.per_seed_eer]}

    @classmethod
    def from_json(cls, obj: dict) -> "SeedReport":
        obj = dict(obj)
        obj["per_seed_eer"] = [tuple(p) for p in obj["per_seed_eer"]]
        return cls(**obj)

    def row(self) -> str:
        """``19.280 ± 3.414 | 16.620 | 23.131`` with values in percent."""
        return f"{100 * self.mean:.3f} ± {100 * self.std:.3f} | {100 * self.min:.3f} | {100 * self.max:.3f}"


def run_seeds(
    X_train,
    y_train,
    config: ProbeConfig,
    seeds: Sequence[int],
    trials: TrialList,
    eval_embeddings: dict,
    train_set: str = "",
    test_set: str = "",
) -> SeedReport:
    """Train one probe per seed, score ``trials`` on its hidden embeddings, report EER stats."""
    from .attacker import score_trials
    from .metrics import compute_eer

    if not seeds:
        raise EmptyInput("need at least one seed")
    ids = list(eval_embeddings)
    mat = np.stack([np.asarray(getattr(eval_embeddings[u], "data", eval_embeddings[u]), dtype=np.float64) for u in ids])
    pairs = []
    for seed in seeds:
        model, _ = train_probe(X_train, replace(config, seed=int(seed)), labels=y_train)
        emb = embed(mat, model)
        source = dict(zip(ids, emb))
        scores = score_trials(source, trials)
        pairs.append((int(seed), compute_eer(scores, trials).eer))
    return SeedReport.from_eers(pairs, train_set=train_set, test_set=test_set, num_trials=len(trials))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"VPPM"
_CKPT_HEAD = struct.Struct("<4sII")


def save_probe(path, model: ProbeModel, config: ProbeConfig | None = None) -> None:
    """JSON header (dims, classes, config) followed by four VPFX blocks."""
    header = {
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "num_classes": model.num_classes,
        "classes": [str(c) for c in model.classes],
        "config": asdict(config) if config is not None else None,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    blocks = []
    for name in PARAMS:
        arr = getattr(model, name)
        blob = encode_vpfx(arr if arr.ndim == 2 else arr[None, :], "generic")
        blocks.append(struct.pack("<I", len(blob)) + blob)
    Path(path).write_bytes(_CKPT_HEAD.pack(_CKPT_MAGIC, 1, len(head)) + head + b"".join(blocks))


def load_probe(path) -> tuple[ProbeModel, dict]:
    buf = Path(path).read_bytes()
    if buf[:4] != _CKPT_MAGIC:
        raise FormatError("bad checkpoint magic", offset=0, path=str(path))
    _, version, hlen = _CKPT_HEAD.unpack_from(buf, 0)
    if version != 1:
        raise FormatError(f"unsupported checkpoint version {version}", offset=4, path=str(path))
    off = _CKPT_HEAD.size
    header = json.loads(buf[off:off + hlen].decode("utf-8"))
    off += hlen
    arrays = {}
    for name in PARAMS:
        (blen,) = struct.unpack_from("<I", buf, off)
        off += 4
        _, arr = decode_vpfx(buf[off:off + blen], path=str(path))
        off += blen
        arrays[name] = arr.astype(np.float64)
    arrays["b1"] = arrays["b1"][0]
    arrays["b2"] = arrays["b2"][0]
    return ProbeModel(**arrays, classes=tuple(header["classes"])), header
