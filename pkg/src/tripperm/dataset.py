"""Two-view single-shot re-id datasets: samples, manifests, synthesis and the PRID split.

A dataset holds at most one sample per (identity, view). Identities seen in
both views are the *shared* identities; their count is ``P``.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, ManifestError, ProtocolError, UniquenessError


class View(str, enum.Enum):
    A = "A"
    B = "B"

    @property
    def other(self) -> "View":
        return View.B if self is View.A else View.A


VIEWS = (View.A, View.B)


@dataclass(frozen=True, eq=False)
class Sample:
    identity: int
    view: View
    data: np.ndarray
    source_tag: Optional[str] = None

    def __post_init__(self):
        if int(self.identity) != self.identity or self.identity < 0:
            raise ValueError(f"identity must be a non-negative integer, got {self.identity!r}")
        object.__setattr__(self, "identity", int(self.identity))
        object.__setattr__(self, "view", View(self.view))
        data = np.array(self.data, dtype=np.float64).reshape(-1)
        if data.size < 1:
            raise DimensionError("sample vector must have dimension >= 1")
        if not np.all(np.isfinite(data)):
            raise ValueError(f"non-finite feature for identity {self.identity}, view {self.view.value}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def key(self):
        return (self.identity, self.view)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.key == other.key
            and self.source_tag == other.source_tag
            and self.data.shape == other.data.shape
            and bool(np.all(self.data.view(np.uint64) == other.data.view(np.uint64)))
        )

    def __hash__(self):
        return hash((self.key, self.source_tag, self.data.tobytes()))


class Dataset:
    """Immutable ordered collection of samples with a (identity, view) index."""

    def __init__(self, samples: Iterable[Sample], d: Optional[int] = None):
        samples = tuple(samples)
        if d is None:
            if not samples:
                raise DimensionError("cannot infer dimension of an empty dataset")
            d = samples[0].data.size
        index = {}
        for pos, s in enumerate(samples):
            if s.data.size != d:
                raise DimensionError(
                    f"sample {pos} (identity {s.identity}, view {s.view.value}) has dimension "
                    f"{s.data.size}, expected {d}"
                )
            if s.key in index:
                raise UniquenessError(
                    f"duplicate sample for identity {s.identity}, view {s.view.value}"
                )
            index[s.key] = pos
        self._samples = samples
        self._d = int(d)
        self._index = index
        if samples:
            matrix = np.stack([s.data for s in samples])
        else:
            matrix = np.zeros((0, self._d))
        matrix.flags.writeable = False
        self._matrix = matrix

    @property
    def samples(self):
        return self._samples

    @property
    def d(self) -> int:
        return self._d

    @property
    def index(self):
        return dict(self._index)

    @property
    def matrix(self) -> np.ndarray:
        """All sample vectors stacked in sample order, shape ``(len(self), d)``."""
        return self._matrix

    def __len__(self):
        return len(self._samples)

    def __iter__(self):
        return iter(self._samples)

    def __getitem__(self, pos) -> Sample:
        return self._samples[pos]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._d == other._d and self._samples == other._samples

    def __repr__(self):
        return f"Dataset(n={len(self)}, d={self.d}, P={self.P})"

    def position(self, identity: int, view) -> int:
        return self._index[(identity, View(view))]

    def has(self, identity: int, view) -> bool:
        return (identity, View(view)) in self._index

    def identities(self, view=None):
        if view is None:
            return sorted({s.identity for s in self._samples})
        view = View(view)
        return sorted(s.identity for s in self._samples if s.view is view)

    @property
    def shared_identities(self):
        """Sorted identities that have a sample in both views."""
        a = {i for (i, v) in self._index if v is View.A}
        b = {i for (i, v) in self._index if v is View.B}
        return sorted(a & b)

    @property
    def P(self) -> int:
        return len(self.shared_identities)

    def subset(self, keep) -> "Dataset":
        """Samples whose key satisfies ``keep(sample)``, order preserved."""
        return Dataset([s for s in self._samples if keep(s)], d=self._d)

    def restrict(self, identities) -> "Dataset":
        identities = set(identities)
        return self.subset(lambda s: s.identity in identities)

    def shared_only(self) -> "Dataset":
        return self.restrict(self.shared_identities)


@dataclass(frozen=True)
class SplitSpec:
    train_identities: frozenset
    probe: tuple
    gallery: tuple
    d: int = field(default=0)

    def __post_init__(self):
        probe_ids = [s.identity for s in self.probe]
        if set(probe_ids) & set(self.train_identities):
            raise ProtocolError("probe and training identities overlap")
        if any(s.view is not View.A for s in self.probe):
            raise ProtocolError("probe samples must come from view A")
        if any(s.view is not View.B for s in self.gallery):
            raise ProtocolError("gallery samples must come from view B")
        gallery_ids = [s.identity for s in self.gallery]
        for pid in probe_ids:
            n = gallery_ids.count(pid)
            if n != 1:
                raise ProtocolError(f"probe identity {pid} has {n} gallery matches, expected 1")

    @property
    def probe_matrix(self):
        return np.stack([s.data for s in self.probe]) if self.probe else np.zeros((0, self.d))

    @property
    def gallery_matrix(self):
        return np.stack([s.data for s in self.gallery]) if self.gallery else np.zeros((0, self.d))


# --- manifest I/O -----------------------------------------------------------

def manifest_header(d: int):
    return ["identity", "view", "source_tag"] + [f"f{i}" for i in range(d)]


def save_manifest(dataset: Dataset, path) -> None:
    """Write ``dataset`` as CSV. Floats use ``repr`` so reloading is bit-exact."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(manifest_header(dataset.d))
        for s in dataset:
            tag = "" if s.source_tag is None else s.source_tag
            writer.writerow([s.identity, s.view.value, tag] + [repr(float(x)) for x in s.data])


def load_manifest(path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ManifestError("empty manifest, header expected", line=1)
    header = rows[0]
    if header[:3] != ["identity", "view", "source_tag"]:
        raise ManifestError(f"bad header {header[:3]!r}", line=1)
    d = len(header) - 3
    if d < 1:
        raise ManifestError("manifest declares no feature columns", line=1)
    if header[3:] != [f"f{i}" for i in range(d)]:
        raise ManifestError("feature columns must be named f0..f{d-1} in order", line=1)

    samples = []
    seen = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3 + d:
            raise DimensionError(
                f"line {lineno}: expected {d} feature values, found {len(row) - 3}"
            )
        ident, view, tag = row[:3]
        try:
            ident = int(ident)
        except ValueError:
            raise ManifestError(f"identity {ident!r} is not an integer", line=lineno) from None
        if ident < 0:
            raise ManifestError(f"identity {ident} is negative", line=lineno)
        if view not in ("A", "B"):
            raise ManifestError(f"view must be A or B, got {view!r}", line=lineno)
        try:
            values = [float(x) for x in row[3:]]
        except ValueError as exc:
            raise ManifestError(f"bad feature value ({exc})", line=lineno) from None
        if not all(np.isfinite(values)):
            raise ManifestError("non-finite feature value", line=lineno)
        key = (ident, view)
        if key in seen:
            raise UniquenessError(
                f"line {lineno}: identity {ident}, view {view} already given on line {seen[key]}"
            )
        seen[key] = lineno
        samples.append(Sample(ident, View(view), np.array(values), tag or None))
    return Dataset(samples, d=d)


# --- synthesis ----------------------------------------------------------------

def synth_dataset(
    p_shared: int,
    extra_b: int = 0,
    d: int = 2,
    view_shift: Optional[Sequence[float]] = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
    extra_a: int = 0,
    latent_scale: float = 1.0,
) -> Dataset:
    """Gaussian-latent two-view dataset.

    Identities ``0..p_shared-1`` appear in both views (A then B), followed by
    ``extra_a`` identities seen only in A and ``extra_b`` seen only in B. A
    view-B sample is its latent plus ``view_shift``; both views get isotropic
    noise of std ``noise_sigma``.
    """
    if p_shared < 1:
        raise ValueError("p_shared must be >= 1")
    if extra_a < 0 or extra_b < 0:
        raise ValueError("extra_a and extra_b must be non-negative")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    shift = np.zeros(d) if view_shift is None else np.asarray(view_shift, dtype=np.float64)
    if shift.shape != (d,):
        raise DimensionError(f"view_shift has shape {shift.shape}, expected ({d},)")

    rng = np.random.default_rng(seed)
    n_ids = p_shared + extra_a + extra_b
    latents = latent_scale * rng.standard_normal((n_ids, d))
    noise_a = noise_sigma * rng.standard_normal((n_ids, d))
    noise_b = noise_sigma * rng.standard_normal((n_ids, d))

    samples = []
    for i in range(p_shared):
        samples.append(Sample(i, View.A, latents[i] + noise_a[i], "synthetic"))
        samples.append(Sample(i, View.B, latents[i] + shift + noise_b[i], "synthetic"))
    for i in range(p_shared, p_shared + extra_a):
        samples.append(Sample(i, View.A, latents[i] + noise_a[i], "synthetic"))
    for i in range(p_shared + extra_a, n_ids):
        samples.append(Sample(i, View.B, latents[i] + shift + noise_b[i], "synthetic"))
    return Dataset(samples, d=d)


# --- PRID-style protocol ------------------------------------------------------

def split_prid_protocol(dataset: Dataset, n_train: int, seed: int = 0):
    """Select ``n_train`` shared identities for training; the rest become probes.

    The probe set is the view-A samples of the held-out shared identities; the
    gallery is every view-B sample except the training identities', so B-only
    identities stay in as distractors.

    Returns ``(train, split)`` where ``train`` holds both views of the training
    identities.
    """
    shared = dataset.shared_identities
    if n_train < 0:
        raise ProtocolError("n_train must be non-negative")
    if len(shared) < n_train + 1:
        raise ProtocolError(
            f"need at least {n_train + 1} shared identities for n_train={n_train}, found {len(shared)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(shared))
    train_ids = frozenset(shared[i] for i in order[:n_train])
    held_out = set(shared) - train_ids

    train = dataset.subset(lambda s: s.identity in train_ids)
    probe = tuple(s for s in dataset if s.view is View.A and s.identity in held_out)
    gallery = tuple(s for s in dataset if s.view is View.B and s.identity not in train_ids)
    return train, SplitSpec(train_ids, probe, gallery, d=dataset.d)


def held_out_dataset(dataset: Dataset, split: SplitSpec) -> Dataset:
    """Shared identities that were not used for training (both views)."""
    keep = set(dataset.shared_identities) - set(split.train_identities)
    return dataset.restrict(keep)
