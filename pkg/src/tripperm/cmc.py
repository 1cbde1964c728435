"""CMC evaluation: rank every gallery sample by squared distance to each probe.

Ties are broken by gallery position: among equally distant gallery samples,
the earlier one ranks higher.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import SplitSpec
from .embedding import EmbeddingModel, embed, pairwise_sq_dists
from .errors import ComparisonError, EvaluationError, ProtocolError

DEFAULT_RANKS = (1, 5, 10, 20, 50, 100)


@dataclass(frozen=True)
class RankResult:
    probe_identity: int
    rank: int
    correct_distance: float
    best_distance: float


@dataclass(frozen=True)
class CmcCurve:
    ranks: tuple
    scores: tuple
    probe_count: int
    gallery_count: int

    def __post_init__(self):
        if len(self.ranks) != len(self.scores):
            raise ValueError("ranks and scores differ in length")
        if list(self.ranks) != sorted(set(self.ranks)):
            raise ValueError("ranks must be strictly ascending")

    def score(self, r: int) -> float:
        return self.scores[self.ranks.index(r)]

    def as_dict(self):
        return dict(zip(self.ranks, self.scores))

    def save_csv(self, path):
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "score"])
            for r, s in zip(self.ranks, self.scores):
                w.writerow([r, repr(s)])


def load_curve_csv(path, probe_count=0, gallery_count=0) -> CmcCurve:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["rank", "score"]:
        raise ValueError(f"{path}: not a rank,score CSV")
    ranks = tuple(int(r[0]) for r in rows[1:])
    scores = tuple(float(r[1]) for r in rows[1:])
    return CmcCurve(ranks, scores, probe_count, gallery_count)


def rank_of_match(distances, correct_index: int, gallery_order=None) -> int:
    """1-based rank of the correct gallery entry.

    ``1 + #{strictly closer} + #{equally close and earlier in gallery_order}``.
    """
    d = np.asarray(distances, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise EvaluationError("non-finite distance")
    if not 0 <= correct_index < len(d):
        raise EvaluationError(f"correct_index {correct_index} outside gallery of size {len(d)}")
    if gallery_order is None:
        position = np.arange(len(d))
    else:
        order = np.asarray(gallery_order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(len(d))):
            raise EvaluationError("gallery_order must be a permutation of gallery indices")
        position = np.empty(len(d), dtype=np.int64)
        position[order] = np.arange(len(d))
    dc = d[correct_index]
    closer = np.count_nonzero(d < dc)
    tied_before = np.count_nonzero((d == dc) & (position < position[correct_index]))
    return int(1 + closer + tied_before)


def resolve_ranks(ranks, gallery_count):
    if ranks is None:
        ranks = DEFAULT_RANKS
    elif ranks == "all":
        ranks = range(1, gallery_count + 1)
    return tuple(sorted({int(r) for r in ranks if 1 <= int(r) <= gallery_count}))


def curve_from_ranks(rank_values, gallery_count: int, ranks=None) -> CmcCurve:
    rank_values = np.asarray(rank_values, dtype=np.int64)
    n = len(rank_values)
    if n == 0:
        raise EvaluationError("no probes to evaluate")
    rs = resolve_ranks(ranks, gallery_count)
    scores = tuple(float(np.count_nonzero(rank_values <= r)) / n for r in rs)
    return CmcCurve(rs, scores, n, gallery_count)


def evaluate_cmc(model: EmbeddingModel, split: SplitSpec, ranks=None):
    """Embed probes and gallery once, rank each probe's match, build the curve.

    ``ranks`` defaults to 1, 5, 10, 20, 50, 100 clipped to the gallery size;
    ``"all"`` gives every rank up to the gallery size.
    Returns ``(curve, rank_results)``.
    """
    gallery_ids = [s.identity for s in split.gallery]
    lookup = {}
    for g, ident in enumerate(gallery_ids):
        lookup.setdefault(ident, []).append(g)
    for s in split.probe:
        if len(lookup.get(s.identity, [])) != 1:
            raise ProtocolError(f"probe identity {s.identity} has no unique gallery match")

    Fp = np.atleast_2d(embed(model, split.probe_matrix))
    Fg = np.atleast_2d(embed(model, split.gallery_matrix))
    D = pairwise_sq_dists(Fp, Fg)
    results = []
    for i, s in enumerate(split.probe):
        g = lookup[s.identity][0]
        r = rank_of_match(D[i], g)
        results.append(RankResult(s.identity, r, float(D[i, g]), float(D[i].min())))
    curve = curve_from_ranks([r.rank for r in results], len(split.gallery), ranks)
    return curve, results


def null_standard_error(r: int, gallery_count: int, probe_count: int) -> float:
    """Std error of CMC(r) when each probe's rank is uniform on 1..G."""
    p = r / gallery_count
    return math.sqrt(p * (1 - p) / probe_count)


# --- comparison ---------------------------------------------------------------

@dataclass
class ComparisonTable:
    ranks: tuple
    labels: tuple
    scores: dict   # label -> tuple of scores aligned with ranks
    best: dict     # rank -> tuple of best labels (ties all marked)

    def to_dict(self):
        return {
            "ranks": list(self.ranks),
            "curves": {lab: dict(zip(map(str, self.ranks), self.scores[lab])) for lab in self.labels},
            "best": {str(r): list(v) for r, v in self.best.items()},
        }

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def render(self, percent=True) -> str:
        """Rows are labels, columns ranks; best entry per rank marked with ``*``."""
        def cell(lab, i):
            v = self.scores[lab][i] * (100 if percent else 1)
            txt = f"{v:.1f}" if percent else f"{v:.4f}"
            return txt + ("*" if lab in self.best[self.ranks[i]] else "")

        head = ["rank"] + [str(r) for r in self.ranks]
        body = [[lab] + [cell(lab, i) for i in range(len(self.ranks))] for lab in self.labels]
        widths = [max(len(x) for x in col) for col in zip(head, *body)]
        fmt = lambda row: "  ".join(x.rjust(w) if j else x.ljust(w) for j, (x, w) in enumerate(zip(row, widths)))
        lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(b) for b in body]
        unit = "CMC [%]" if percent else "CMC"
        return f"{unit}, best per rank marked *\n" + "\n".join(lines) + "\n"


def compare_curves(curves: dict) -> ComparisonTable:
    if not curves:
        raise ComparisonError("no curves to compare")
    labels = tuple(curves)
    ranks = curves[labels[0]].ranks
    for lab in labels:
        if curves[lab].ranks != ranks:
            raise ComparisonError(f"curve {lab!r} has ranks {curves[lab].ranks}, expected {ranks}")
    scores = {lab: tuple(curves[lab].scores) for lab in labels}
    best = {}
    for i, r in enumerate(ranks):
        top = max(scores[lab][i] for lab in labels)
        best[r] = tuple(lab for lab in labels if scores[lab][i] == top)
    return ComparisonTable(ranks, labels, scores, best)
