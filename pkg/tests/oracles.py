"""Brute-force reference implementations, written independently of the package.

Slow on purpose: plain loops, no shared helpers with vpemo.
"""
import math
from fractions import Fraction
from itertools import combinations


def eer_oracle(tar, non):
    """EER as min over the (FAR, FRR) polyline of max(FAR, FRR).

    Operating points are taken at every distinct score (accept if score >= t)
    plus one point above every score. Consecutive points are joined by
    straight segments; on each segment max(FAR, FRR) is minimised at an end
    point or where the two lines cross.
    """
    scores = sorted(set(list(tar) + list(non)))
    pts = []
    for t in scores:
        far = sum(1 for s in non if s >= t) / len(non)
        frr = sum(1 for s in tar if s < t) / len(tar)
        pts.append((far, frr))
    pts.append((0.0, 1.0))
    best = math.inf
    for (fa0, fr0), (fa1, fr1) in zip(pts, pts[1:]):
        best = min(best, max(fa0, fr0), max(fa1, fr1))
        d0, d1 = fa0 - fr0, fa1 - fr1
        if d0 > 0 > d1:
            a = d0 / (d0 - d1)
            best = min(best, fa0 + a * (fa1 - fa0))
    return best


def edit_distance_oracle(ref, hyp):
    """Minimum S+D+I over every monotone matching of ref and hyp positions."""
    n, m = len(ref), len(hyp)
    best = n + m
    for k in range(min(n, m) + 1):
        for ri in combinations(range(n), k):
            for hj in combinations(range(m), k):
                subs = sum(1 for a, b in zip(ri, hj) if ref[a] != hyp[b])
                best = min(best, subs + (n - k) + (m - k))
    return best


def uar_oracle(refs, preds, classes):
    """Exact rational mean of per-class recall, rounded to float once."""
    recalls = []
    for c in classes:
        total = 0
        hit = 0
        for r, p in zip(refs, preds):
            if r == c:
                total += 1
                if p == c:
                    hit += 1
        if total:
            recalls.append(Fraction(hit, total))
    return float(sum(recalls) / len(recalls))


def knn_oracle(source, pool, k, cosine=True):
    """Per source frame: mean of the k most similar pool frames (ties -> lower index)."""
    out = []
    for x in source:
        sims = []
        for idx, y in enumerate(pool):
            if cosine:
                dot = sum(a * b for a, b in zip(x, y))
                nx = math.sqrt(sum(a * a for a in x))
                ny = math.sqrt(sum(b * b for b in y))
                s = dot / (nx * ny)
            else:
                s = -math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)))
            sims.append((-s, idx))
        sims.sort()
        chosen = [idx for _, idx in sims[:k]]
        dim = len(x)
        out.append([sum(pool[i][d] for i in chosen) / k for d in range(dim)])
    return out


def cosine_ranking(source, candidates):
    """Candidate indices by descending cosine similarity to source."""
    ns = math.sqrt(sum(a * a for a in source))
    sims = []
    for idx, c in enumerate(candidates):
        nc = math.sqrt(sum(b * b for b in c))
        sims.append(sum(a * b for a, b in zip(source, c)) / (ns * nc))
    return sorted(range(len(candidates)), key=lambda i: -sims[i]), sims


def purity(labels_true, labels_pred):
    total = 0
    for p in set(labels_pred):
        members = [t for t, q in zip(labels_true, labels_pred) if q == p]
        total += max(members.count(t) for t in set(members))
    return total / len(labels_true)


def two_means(points, iters=100):
    """Lloyd's 2-means seeded with the two mutually farthest points."""
    n = len(points)
    far = max(((i, j) for i in range(n) for j in range(i + 1, n)),
              key=lambda ij: sum((a - b) ** 2 for a, b in zip(points[ij[0]], points[ij[1]])))
    cents = [list(points[far[0]]), list(points[far[1]])]
    assign = [0] * n
    for _ in range(iters):
        new = [min((0, 1), key=lambda c: sum((a - b) ** 2 for a, b in zip(p, cents[c]))) for p in points]
        if new == assign and _:
            break
        assign = new
        for c in (0, 1):
            members = [p for p, a in zip(points, assign) if a == c]
            if members:
                cents[c] = [sum(col) / len(members) for col in zip(*members)]
    return assign
