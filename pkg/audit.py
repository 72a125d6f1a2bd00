"""
Privacy audits
==============
Three checks of the claim that any T colluding servers learn nothing about θ:

- structure: the (server, subset, count) digest of the queries is identical
  for every θ;
- counting: for every code instance, the coded symbols a coalition sees never
  outnumber the code dimension, so the visible composite rows are independent
  and uniformly distributed once scrambled;
- statistics: chi-square homogeneity tests over low-dimensional projections
  of sampled coalition views, Bonferroni-corrected.

The first two are exact. The third is evidence, not proof.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import chi2_contingency

from config import Config
from gf import mat_rank, stack_rows
from params import ProblemSpec, compute_plan
from runtime import CollusionSizeError, derive_seed, pooled_slots
from scheme import (
    Mutation,
    Subset,
    allocate_mds,
    build_ledger,
    build_queries,
    draw_scramblers,
    shape_digest,
)

logger = logging.getLogger(__name__)

AUDIT_STREAM = 3
STRUCTURE_STREAM = 4
MIN_CELL_TOTAL = 10


class InsufficientSamplesError(Exception):
    """Too few sessions for meaningful chi-square cell counts"""
    pass


@dataclass(frozen=True)
class StructureCheck:
    passed: bool
    fingerprints: Tuple[str, ...]

    def to_dict(self):
        return {
            'passed': self.passed,
            'fingerprints': list(self.fingerprints),
        }


def check_structure(spec: ProblemSpec, seed, mutation: Mutation = Mutation.NONE) -> StructureCheck:
    """Build the queries for every θ and compare their shape digests"""
    plan = compute_plan(spec)
    fingerprints = []
    for theta in range(spec.K):
        ledger = build_ledger(plan, theta, mutation)
        allocation = allocate_mds(plan, theta, ledger)
        secrets = draw_scramblers(plan, derive_seed(seed, STRUCTURE_STREAM, theta), theta)
        queries, _ = build_queries(plan, theta, secrets, ledger, allocation, mutation=mutation)
        fingerprints.append(shape_digest(queries).fingerprint)
    passed = len(set(fingerprints)) == 1
    if not passed:
        logger.warning(f"🚨 Query shapes differ across theta: {[f[:12] for f in fingerprints]}")
    return StructureCheck(passed=passed, fingerprints=tuple(fingerprints))


@dataclass(frozen=True)
class CountingEntry:
    theta: int
    colluders: Tuple[int, ...]
    code: Subset
    level: int
    visible: int
    dimension: int
    independent: bool
    case: Optional[str]

    @property
    def passed(self):
        return self.visible <= self.dimension and self.independent

    @property
    def tight(self):
        return self.visible == self.dimension

    def to_dict(self, order):
        return {
            'theta': str(order[self.theta] + 1),
            'colluders': [str(server + 1) for server in self.colluders],
            'code': sorted(str(order[i] + 1) for i in self.code),
            'level': str(self.level),
            'visible': str(self.visible),
            'dimension': str(self.dimension),
            'independent': self.independent,
            'case': self.case,
            'passed': self.passed,
            'tight': self.tight,
        }


def check_counting(spec: ProblemSpec, theta: int, colluders: Sequence[int], plan=None) -> List[CountingEntry]:
    """
    For each code instance, count the distinct coordinates that reach the
    coalition (systematic downloads of the code's own subset plus the parities
    summed with θ) and compare with its dimension.
    """
    if len(set(colluders)) != spec.T:
        raise CollusionSizeError(f"expected {spec.T} distinct servers, got {tuple(colluders)}")
    plan = plan or compute_plan(spec)
    ledger = build_ledger(plan, theta)
    allocation = allocate_mds(plan, theta, ledger)
    colluders = tuple(sorted(colluders))

    visible: Dict[Subset, set] = {code: set() for code in allocation.codes()}
    cases: Dict[Subset, Optional[str]] = {}
    for server in colluders:
        for route in ledger.slots[server]:
            for symbol in route.routes:
                if symbol.code is not None:
                    visible[symbol.code].add(symbol.index)
                    if theta in route.subset:
                        cases[symbol.code] = route.case

    entries = []
    for code, generator in allocation.codes().items():
        coordinates = sorted(visible[code])
        independent = True
        if coordinates and len(coordinates) <= generator.k:
            independent = mat_rank(spec.field, generator.G[coordinates, :]) == len(coordinates)
        entries.append(CountingEntry(
            theta=theta,
            colluders=colluders,
            code=code,
            level=len(code),
            visible=len(coordinates),
            dimension=generator.k,
            independent=independent,
            case=cases.get(code),
        ))
    return entries


def coalitions(servers: int, collusion: int, seed=0) -> List[Tuple[int, ...]]:
    """Every T-subset for small N; a fixed sample of them otherwise"""
    every = list(combinations(range(servers), collusion))
    if servers <= Config.MAX_AUDIT_SERVERS:
        return every
    rng = np.random.default_rng(derive_seed(seed, AUDIT_STREAM))
    picked = rng.choice(len(every), size=min(len(every), 64), replace=False)
    return [every[index] for index in sorted(picked)]


@dataclass(frozen=True)
class ProjectionTest:
    theta_pair: Tuple[int, int]
    colluders: Tuple[int, ...]
    projection: str
    statistic: float
    dof: int
    p_value: float

    def to_dict(self, order):
        return {
            'theta_pair': [str(order[theta] + 1) for theta in self.theta_pair],
            'colluders': [str(server + 1) for server in self.colluders],
            'projection': self.projection,
            'statistic': f"{self.statistic:.6f}",
            'dof': str(self.dof),
            'p_value': f"{self.p_value:.6g}",
        }


@dataclass(frozen=True)
class StatReport:
    samples: int
    significance: Fraction
    threshold: float
    tests: Tuple[ProjectionTest, ...]

    @property
    def rejections(self):
        return [test for test in self.tests if test.p_value < self.threshold]

    @property
    def passed(self):
        return not self.rejections

    @property
    def min_p_value(self):
        return min((test.p_value for test in self.tests), default=1.0)

    def to_dict(self, order):
        return {
            'samples': str(self.samples),
            'significance': str(self.significance),
            'threshold': f"{self.threshold:.6g}",
            'test_count': str(len(self.tests)),
            'tests': [test.to_dict(order) for test in self.tests],
            'rejections': [test.to_dict(order) for test in self.rejections],
            'min_p_value': f"{self.min_p_value:.6g}",
            'passed': self.passed,
        }


def homogeneity_test(first: Sequence[int], second: Sequence[int]) -> Tuple[float, int, float]:
    """
    Chi-square test that two samples of category labels share one
    distribution. Empty categories are dropped and sparse ones pooled; with
    fewer than two categories left there is nothing to test.
    """
    categories = sorted(set(first) | set(second))
    counts_a = Counter(first)
    counts_b = Counter(second)
    table = np.array([[counts_a[c] for c in categories], [counts_b[c] for c in categories]], dtype=np.int64)
    totals = table.sum(axis=0)
    dense = table[:, totals >= MIN_CELL_TOTAL]
    sparse = table[:, (totals > 0) & (totals < MIN_CELL_TOTAL)].sum(axis=1, keepdims=True)
    if sparse.sum() > 0:
        dense = np.hstack([dense, sparse])
    if dense.shape[1] < 2:
        return 0.0, 0, 1.0
    statistic, p_value, dof, _ = chi2_contingency(dense, correction=False)
    return float(statistic), int(dof), float(p_value)


def _projections(field_spec, slots) -> Dict[str, object]:
    """Category labels of one pooled view, keyed by projection name"""
    labels: Dict[str, object] = {}
    messages = sorted({message for slot in slots for message in slot.coefficients})
    for position, slot in enumerate(slots):
        for message, row in slot.coefficients.items():
            values = np.asarray(row)
            labels[f"value[{position},{message}]"] = int(values[0])
            nonzero = np.flatnonzero(values)
            labels[f"first_nonzero[{position},{message}]"] = int(nonzero[0]) if nonzero.size else len(values)
    for message in messages:
        rows = [slot.coefficients[message] for slot in slots if message in slot.coefficients]
        labels[f"rank[{message}]"] = mat_rank(field_spec, stack_rows(field_spec, rows))
    return labels


def _sample_views(plan, theta, samples, seed, replicate, mutation):
    """Server-indexed slot lists of ``samples`` independent first iterations"""
    ledger = build_ledger(plan, theta, mutation)
    allocation = allocate_mds(plan, theta, ledger)
    views = []
    for trial in range(samples):
        secrets = draw_scramblers(plan, derive_seed(seed, AUDIT_STREAM, theta, replicate, trial), theta)
        queries, _ = build_queries(plan, theta, secrets, ledger, allocation, mutation=mutation)
        views.append(queries)
    return views


def stat_privacy_test(
    spec: ProblemSpec,
    samples: int,
    significance: Fraction = Config.SIGNIFICANCE,
    seed=0,
    mutation: Mutation = Mutation.NONE,
    include_self_pairs: bool = False,
    colluder_sets: Optional[Sequence[Tuple[int, ...]]] = None,
) -> StatReport:
    """
    Draw ``samples`` sessions per θ, project every coalition's pooled view,
    and test each projection for homogeneity between every pair of θ values.
    Self pairs compare two independent sample sets of the same θ.
    """
    if samples < Config.MIN_STAT_SAMPLES:
        raise InsufficientSamplesError(f"need at least {Config.MIN_STAT_SAMPLES} samples per theta, got {samples}")
    plan = compute_plan(spec)
    colluder_sets = list(colluder_sets or coalitions(spec.N, spec.T, seed))

    pairs = list(combinations(range(spec.K), 2))
    if include_self_pairs:
        pairs += [(theta, theta) for theta in range(spec.K)]

    logger.info(f"🔍 Sampling {samples} sessions per theta for {len(colluder_sets)} coalitions")
    labels: Dict[Tuple[int, int], Dict[Tuple[int, ...], List[Dict[str, int]]]] = {}
    for replicate, theta in sorted({(0, a) for a, _ in pairs} | {(1 if a == b else 0, b) for a, b in pairs}):
        views = _sample_views(plan, theta, samples, seed, replicate, mutation)
        labels[(theta, replicate)] = {
            colluders: [_projections(spec.field, pooled_slots([queries], colluders)) for queries in views]
            for colluders in colluder_sets
        }

    tests = []
    for a, b in pairs:
        first_key = (a, 0)
        second_key = (b, 1 if a == b else 0)
        for colluders in colluder_sets:
            first = labels[first_key][colluders]
            second = labels[second_key][colluders]
            for name in sorted(first[0]):
                statistic, dof, p_value = homogeneity_test(
                    [view[name] for view in first], [view[name] for view in second]
                )
                tests.append(ProjectionTest((a, b), colluders, name, statistic, dof, p_value))

    threshold = float(significance) / max(len(tests), 1)
    report = StatReport(samples=samples, significance=Fraction(significance), threshold=threshold, tests=tuple(tests))
    if report.passed:
        logger.info(f"✅ {len(tests)} homogeneity tests, none rejects at {threshold:.3g}")
    else:
        logger.warning(f"🚨 {len(report.rejections)} of {len(tests)} homogeneity tests reject at {threshold:.3g}")
    return report


@dataclass(frozen=True)
class AuditReport:
    spec: ProblemSpec
    structure: StructureCheck
    counting: Tuple[CountingEntry, ...]
    stats: Optional[StatReport] = None
    mutation: Mutation = Mutation.NONE
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def counting_passed(self):
        return all(entry.passed for entry in self.counting)

    @property
    def tight_instances(self):
        return sum(1 for entry in self.counting if entry.tight)

    @property
    def passed(self):
        stats_passed = self.stats.passed if self.stats is not None else True
        return self.structure.passed and self.counting_passed and stats_passed

    def to_dict(self):
        order = self.spec.order
        return {
            'spec': self.spec.to_dict(),
            'mutation': self.mutation.value,
            'structure_check': self.structure.to_dict(),
            'counting_check': {
                'passed': self.counting_passed,
                'tight_instances': str(self.tight_instances),
                'entries': [entry.to_dict(order) for entry in self.counting],
            },
            'stats': self.stats.to_dict(order) if self.stats is not None else None,
            'notes': list(self.notes),
            'passed': self.passed,
        }


def run_audit(
    spec: ProblemSpec,
    seed=0,
    stats: bool = False,
    samples: int = Config.STAT_SAMPLES,
    significance: Fraction = Config.SIGNIFICANCE,
    mutation: Mutation = Mutation.NONE,
) -> AuditReport:
    """Structure check, counting over every (θ, coalition), and optionally the statistics"""
    plan = compute_plan(spec)
    structure = check_structure(spec, seed, mutation)
    counting = []
    for theta in range(spec.K):
        for colluders in coalitions(spec.N, spec.T, seed):
            counting.extend(check_counting(spec, theta, colluders, plan))
    notes = []
    if spec.N > Config.MAX_AUDIT_SERVERS:
        notes.append(f"coalitions sampled: N={spec.N} exceeds {Config.MAX_AUDIT_SERVERS}")
    stat_report = None
    if stats:
        stat_report = stat_privacy_test(spec, samples, significance, seed, mutation)
    report = AuditReport(
        spec=spec,
        structure=structure,
        counting=tuple(counting),
        stats=stat_report,
        mutation=mutation,
        notes=tuple(notes),
    )
    logger.info(
        f"Audit: structure={'pass' if structure.passed else 'FAIL'}, "
        f"counting={'pass' if report.counting_passed else 'FAIL'} ({report.tight_instances} tight)"
    )
    return report
