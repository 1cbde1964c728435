"""Feature-space audit: constraints c1-c4, situations s_a-s_d and the prevention ledger.

For an ordered identity pair (j, k), j != k, each constraint compares an
anchor's distance to a negative against its distance to its own other-view
image::

    slack(j, k) = |F(j, anchor) - F(k, neg)|^2 - |F(j, anchor) - F(j, other)|^2

    c1 / s_a   anchor A, negative B
    c2 / s_b   anchor B, negative A
    c3 / s_c   anchor A, negative A
    c4 / s_d   anchor B, negative B

A constraint holds for a pair when ``slack >= tau``; the paired situation is
witnessed when ``slack < tau``. Equality is thus assigned to the satisfied side
in both readings, which makes the complement relation exact.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Dataset, View
from .embedding import EmbeddingModel, embed, sq_dists_rows
from .errors import AuditDegenerateError
from .trainer import violation_fraction
from .tripletgen import Formulation, enumerate_triplets


class ConstraintId(str, enum.Enum):
    c1 = "c1"
    c2 = "c2"
    c3 = "c3"
    c4 = "c4"


class SituationId(str, enum.Enum):
    s_a = "s_a"
    s_b = "s_b"
    s_c = "s_c"
    s_d = "s_d"


# (anchor view, negative view); the positive is always the anchor's other view
GEOMETRY = {
    ConstraintId.c1: (View.A, View.B),
    ConstraintId.c2: (View.B, View.A),
    ConstraintId.c3: (View.A, View.A),
    ConstraintId.c4: (View.B, View.B),
}

COMPLEMENT = {
    ConstraintId.c1: SituationId.s_a,
    ConstraintId.c2: SituationId.s_b,
    ConstraintId.c3: SituationId.s_c,
    ConstraintId.c4: SituationId.s_d,
}
CONSTRAINT_OF = {s: c for c, s in COMPLEMENT.items()}

IMPOSES = {
    Formulation.I: (ConstraintId.c1,),
    Formulation.II: (ConstraintId.c1, ConstraintId.c2),
    Formulation.III: tuple(ConstraintId),
}
PREVENTS = {f: tuple(COMPLEMENT[c] for c in cs) for f, cs in IMPOSES.items()}


@dataclass(frozen=True)
class Witness:
    p: int
    q: int
    lhs_distance: float  # anchor to negative
    rhs_distance: float  # anchor to its other-view image
    slack: float

    def to_dict(self):
        return {"p": self.p, "q": self.q, "lhs_distance": self.lhs_distance,
                "rhs_distance": self.rhs_distance, "slack": self.slack}


@dataclass(frozen=True)
class PairSlacks:
    """Slack values for every ordered pair of distinct identities under one geometry."""
    p: np.ndarray
    q: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def slack(self):
        return self.lhs - self.rhs

    def witnesses(self, mask):
        slack = self.slack
        return [
            Witness(int(self.p[i]), int(self.q[i]), float(self.lhs[i]), float(self.rhs[i]), float(slack[i]))
            for i in np.flatnonzero(mask)
        ]


class EmbeddedPairs:
    """Embeds the shared identities of a dataset once and serves pair slacks."""

    def __init__(self, model: EmbeddingModel, dataset: Dataset):
        self.identities = np.array(dataset.shared_identities, dtype=np.int64)
        P = len(self.identities)
        if P < 2:
            raise AuditDegenerateError(f"audit needs at least 2 shared identities, found {P}")
        F = np.atleast_2d(embed(model, dataset.matrix))
        self.features = {
            v: F[[dataset.position(int(i), v) for i in self.identities]] for v in (View.A, View.B)
        }
        jj, kk = np.meshgrid(np.arange(P), np.arange(P), indexing="ij")
        off = jj != kk
        # rows ordered by (p, q)
        self._j = jj[off]
        self._k = kk[off]

    @property
    def P(self):
        return len(self.identities)

    def slacks(self, cid: ConstraintId) -> PairSlacks:
        anchor_view, neg_view = GEOMETRY[ConstraintId(cid)]
        Fa = self.features[anchor_view][self._j]
        Fp = self.features[anchor_view.other][self._j]
        Fn = self.features[neg_view][self._k]
        return PairSlacks(
            self.identities[self._j], self.identities[self._k],
            sq_dists_rows(Fa, Fn), sq_dists_rows(Fa, Fp),
        )


def _pairs(model, shared):
    return shared if isinstance(shared, EmbeddedPairs) else EmbeddedPairs(model, shared)


def check_constraint(model, shared, cid: ConstraintId, tau: float):
    """``(satisfied, witnesses)`` for one constraint over all ordered pairs j != k."""
    ps = _pairs(model, shared).slacks(cid)
    holds = ps.slack >= tau
    witnesses = ps.witnesses(~holds)
    return not witnesses, witnesses


def detect_situations(model, shared, tau: float):
    """Witness lists for every situation: pairs (p, q) with ``slack < tau``."""
    pairs = _pairs(model, shared)
    out = {}
    for sid in SituationId:
        ps = pairs.slacks(CONSTRAINT_OF[sid])
        out[sid] = ps.witnesses(ps.slack < tau)
    return out


@dataclass
class AuditReport:
    tau: float
    P: int
    constraints: dict = field(default_factory=dict)  # ConstraintId -> (satisfied, witnesses)
    situations: dict = field(default_factory=dict)   # SituationId -> witnesses
    scope: str = "train"

    def satisfied(self, cid) -> bool:
        return self.constraints[ConstraintId(cid)][0]

    def occurs(self, sid) -> bool:
        return bool(self.situations[SituationId(sid)])

    def to_dict(self):
        return {
            "tau": self.tau,
            "P": self.P,
            "scope": self.scope,
            "constraints": {
                c.value: {"satisfied": sat, "witnesses": [w.to_dict() for w in ws]}
                for c, (sat, ws) in self.constraints.items()
            },
            "situations": {
                s.value: {"occurs": bool(ws), "witnesses": [w.to_dict() for w in ws]}
                for s, ws in self.situations.items()
            },
        }

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def audit(model: EmbeddingModel, dataset: Dataset, tau: float, scope: str = "train") -> AuditReport:
    pairs = EmbeddedPairs(model, dataset)
    report = AuditReport(tau=tau, P=pairs.P, scope=scope)
    for cid in ConstraintId:
        report.constraints[cid] = check_constraint(model, pairs, cid, tau)
    report.situations = detect_situations(model, pairs, tau)
    return report


@dataclass(frozen=True)
class ComplementCheck:
    constraint: ConstraintId
    situation: SituationId
    constraint_holds: bool
    situation_absent: bool
    mismatched_pairs: tuple = ()

    @property
    def passed(self):
        return self.constraint_holds == self.situation_absent and not self.mismatched_pairs


def verify_complement_theorems(model, shared, tau: float):
    """Check (c_i holds for all pairs) <=> (paired situation has no witness).

    Also compares violator and witness pair sets; any mismatch is reported as
    a counterexample. With the shared boundary convention this never fails.
    """
    pairs = _pairs(model, shared)
    situations = detect_situations(model, pairs, tau)
    results = []
    for cid in ConstraintId:
        sat, violators = check_constraint(model, pairs, cid, tau)
        sid = COMPLEMENT[cid]
        a = {(w.p, w.q) for w in violators}
        b = {(w.p, w.q) for w in situations[sid]}
        results.append(ComplementCheck(cid, sid, sat, not situations[sid], tuple(sorted(a ^ b))))
    return results


# --- prevention ledger -------------------------------------------------------

@dataclass(frozen=True)
class LedgerRow:
    formulation: Formulation
    violation_fraction: float
    asserted: bool
    occurs: dict  # SituationId -> bool

    @property
    def prevented(self):
        return PREVENTS[self.formulation]


@dataclass
class PreventionLedger:
    tau: float
    P: int
    rows: list

    def to_dict(self):
        return {
            "tau": self.tau,
            "P": self.P,
            "rows": [
                {
                    "formulation": r.formulation.value,
                    "imposes": [c.value for c in IMPOSES[r.formulation]],
                    "prevents": [s.value for s in r.prevented],
                    "violation_fraction": r.violation_fraction,
                    "asserted": r.asserted,
                    "flag": None if r.asserted else "constraints not fully satisfied",
                    "occurs": {s.value: v for s, v in r.occurs.items()},
                }
                for r in self.rows
            ],
        }

    def render(self) -> str:
        head = ["set", "imposes", "prevents", "violations", "s_a", "s_b", "s_c", "s_d", "status"]
        body = []
        for r in self.rows:
            body.append([
                r.formulation.value,
                ",".join(c.value for c in IMPOSES[r.formulation]),
                ",".join(s.value for s in r.prevented),
                f"{r.violation_fraction:.4f}",
                *("yes" if r.occurs[s] else "no" for s in SituationId),
                "asserted" if r.asserted else "constraints not fully satisfied",
            ])
        widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
        fmt = lambda row: "  ".join(str(x).ljust(w) for x, w in zip(row, widths)).rstrip()
        lines = [f"prevention ledger (tau={self.tau:g}, P={self.P}, training identities)", fmt(head)]
        lines.append("  ".join("-" * w for w in widths))
        lines.extend(fmt(row) for row in body)
        return "\n".join(lines) + "\n"


def prevention_ledger(trained_models, shared: Dataset, tau: float) -> PreventionLedger:
    """Situation occurrence per formulation on the training identities.

    When a model has zero violations on its own training triplets, the
    situations its formulation prevents are asserted absent; otherwise the row
    is flagged and nothing is asserted.
    """
    pairs_cache = {}
    rows = []
    P = shared.P
    for f in sorted(Formulation(k) for k in trained_models):
        model = trained_models[f]
        vf = violation_fraction(model, enumerate_triplets(shared, f), tau)
        pairs = pairs_cache.setdefault(id(model), EmbeddedPairs(model, shared))
        found = detect_situations(model, pairs, tau)
        occurs = {s: bool(found[s]) for s in SituationId}
        asserted = vf == 0.0
        if asserted:
            broken = [s.value for s in PREVENTS[f] if occurs[s]]
            if broken:
                raise AssertionError(
                    f"formulation {f.value} has zero training violations but situations {broken} occur"
                )
        rows.append(LedgerRow(f, vf, asserted, occurs))
    return PreventionLedger(tau, P, rows)
