"""Exhaustive triplet enumeration under the three view-permutation formulations.

Formulation I   anchor in A, positive and negative in B.
Formulation II  anchor in either view, positive and negative in the other one.
Formulation III anchor in either view, positive in the other, negative in any view.

For ``P`` shared identities the three sets hold ``P(P-1)``, ``2P(P-1)`` and
``4P(P-1)`` triplets. Triplets refer to sample positions in the source dataset.
"""
from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dataset import VIEWS, Dataset, View
from .errors import IncompleteIdentityError


@functools.total_ordering
class Formulation(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"

    def __lt__(self, other):
        if not isinstance(other, Formulation):
            return NotImplemented
        order = list(Formulation)
        return order.index(self) < order.index(other)

    @property
    def anchor_views(self):
        return (View.A,) if self is Formulation.I else VIEWS

    def negative_views(self, anchor_view: View):
        if self is Formulation.III:
            return VIEWS
        return (anchor_view.other,)


FORMULATIONS = tuple(Formulation)


class Triplet(NamedTuple):
    anchor: int
    positive: int
    negative: int


@dataclass(frozen=True, eq=False)
class TripletSet:
    formulation: Formulation
    indices: np.ndarray  # (M, 3) int64 sample positions
    source: Dataset

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        for a, p, n in self.indices:
            yield Triplet(int(a), int(p), int(n))

    def __getitem__(self, i) -> Triplet:
        a, p, n = self.indices[i]
        return Triplet(int(a), int(p), int(n))

    @property
    def M(self) -> int:
        return len(self.indices)

    def as_set(self):
        return {tuple(int(x) for x in row) for row in self.indices}

    def keys(self):
        """Triplets as ``((id, view), (id, view), (id, view))`` tuples, in emission order."""
        samples = self.source.samples
        return [tuple(samples[int(i)].key for i in row) for row in self.indices]


def expected_count(P: int, formulation: Formulation) -> int:
    if P < 0:
        raise ValueError("P must be non-negative")
    factor = {Formulation.I: 1, Formulation.II: 2, Formulation.III: 4}[Formulation(formulation)]
    return factor * P * (P - 1) if P > 1 else 0


def enumerate_triplets(train: Dataset, formulation: Formulation) -> TripletSet:
    """All admissible triplets of ``train``.

    Emission order is lexicographic in (anchor identity, anchor view,
    negative identity, negative view) with A before B.
    """
    formulation = Formulation(formulation)
    shared = set(train.shared_identities)
    incomplete = sorted(set(train.identities()) - shared)
    if incomplete:
        raise IncompleteIdentityError(
            f"training identities lacking a sample in one view: {incomplete[:10]}"
        )
    ids = sorted(shared)
    rows = []
    for j in ids:
        for x in formulation.anchor_views:
            anchor = train.position(j, x)
            positive = train.position(j, x.other)
            for k in ids:
                if k == j:
                    continue
                for z in formulation.negative_views(x):
                    rows.append((anchor, positive, train.position(k, z)))
    indices = np.array(rows, dtype=np.int64).reshape(-1, 3)
    indices.flags.writeable = False
    return TripletSet(formulation, indices, train)


TRIPLET_CSV_HEADER = [
    "anchor_identity", "anchor_view",
    "positive_identity", "positive_view",
    "negative_identity", "negative_view",
]


def save_triplets(tset: TripletSet, path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIPLET_CSV_HEADER)
        for keys in tset.keys():
            writer.writerow([x for ident, view in keys for x in (ident, view.value)])


def load_triplet_keys(path):
    """Read a triplet CSV back as ``((id, view), (id, view), (id, view))`` tuples."""
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRIPLET_CSV_HEADER:
        raise ValueError(f"{path}: not a triplet CSV")
    out = []
    for r in rows[1:]:
        out.append(tuple((int(r[i]), View(r[i + 1])) for i in (0, 2, 4)))
    return out


# --- batching ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BatchPlan:
    batch_size: int
    seed: int
    epoch: int
    epoch_order: np.ndarray

    def batches(self):
        order = self.epoch_order
        return [order[i:i + self.batch_size] for i in range(0, len(order), self.batch_size)]


def plan_epoch(n_triplets: int, batch_size: int, seed: int, epoch: int) -> BatchPlan:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng([seed, epoch])
    return BatchPlan(batch_size, seed, epoch, rng.permutation(n_triplets))


def make_batches(tset: TripletSet, batch_size: int, seed: int, epoch: int):
    """Shuffle all triplet indices for ``(seed, epoch)`` and chunk them.

    The last chunk may be short. An empty set gives an empty list.
    """
    return plan_epoch(len(tset), batch_size, seed, epoch).batches()
