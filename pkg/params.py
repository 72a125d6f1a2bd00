"""
Capacity planning
=================
Everything that follows from (N, T, K, L, p) alone: the capacity and its
converse bound, the V-matrix system giving the per-server singleton counts,
sub-packetization, and the comparisons against classical PIR/TPIR.
All arithmetic is exact (``fractions.Fraction``); no floats.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from typing import Dict, List, Optional, Sequence, Tuple

from config import Config
from gf import FieldSpec
from validators import validate_collusion, validate_priors

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_MESSAGES = 6


class SpecValidationError(ValueError):
    """Problem parameters violate the instance invariants"""
    pass


class InfeasiblePlanError(Exception):
    """V^-1 L (or an s-sum count derived from it) is not a nonnegative integer"""

    def __init__(self, offending, lift):
        self.offending = offending
        self.lift = lift
        entries = ', '.join(f"M[{index + 1}]={value}" for index, value in offending)
        super().__init__(f"lengths are not directly schedulable ({entries}); minimal lift factor {lift}")


class PlanConsistencyError(Exception):
    """A closed form disagrees with its exact cross-check"""
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """
    One Sem-TPIR instance in canonical order (lengths descending).
    ``order[i]`` is the caller's 0-based index of canonical message i.
    """
    servers: int
    collusion: int
    lengths: Tuple[int, ...]
    priors: Tuple[Fraction, ...]
    field: FieldSpec
    order: Tuple[int, ...]

    def __post_init__(self):
        error = validate_collusion(self.servers, self.collusion)
        if error:
            raise SpecValidationError(error)
        if not self.lengths:
            raise SpecValidationError("at least one message is required")
        if any(length < 1 for length in self.lengths):
            raise SpecValidationError("message lengths must be at least 1")
        if any(a < b for a, b in zip(self.lengths, self.lengths[1:])):
            raise SpecValidationError("lengths must be in descending order; use ProblemSpec.create")
        error = validate_priors(self.priors, len(self.lengths))
        if error:
            raise SpecValidationError(error)
        if sorted(self.order) != list(range(len(self.lengths))):
            raise SpecValidationError("order must be a permutation of the message indices")

    @classmethod
    def create(cls, servers, collusion, lengths, priors=None, field=None):
        """Sort messages by length (stable, descending) and record the permutation"""
        lengths = [int(length) for length in lengths]
        if priors is None:
            priors = [Fraction(1, len(lengths))] * len(lengths) if lengths else []
        priors = [Fraction(prior) for prior in priors]
        if len(priors) != len(lengths):
            raise SpecValidationError(f"expected {len(lengths)} priors, got {len(priors)}")
        order = sorted(range(len(lengths)), key=lambda index: (-lengths[index], index))
        return cls(
            servers=servers,
            collusion=collusion,
            lengths=tuple(lengths[index] for index in order),
            priors=tuple(priors[index] for index in order),
            field=field or FieldSpec(Config.FIELD_MODULUS),
            order=tuple(order),
        )

    @property
    def N(self):
        return self.servers

    @property
    def T(self):
        return self.collusion

    @property
    def K(self):
        return len(self.lengths)

    @property
    def expected_length(self) -> Fraction:
        return sum((prior * length for prior, length in zip(self.priors, self.lengths)), Fraction(0))

    @property
    def sum_ratio(self) -> Fraction:
        """(N-T)/T, the growth factor between consecutive s-sum levels"""
        return Fraction(self.N - self.T, self.T)

    def canonical_index(self, user_index):
        if not 0 <= user_index < self.K:
            raise SpecValidationError(f"message index must lie in [1, {self.K}], got {user_index + 1}")
        return self.order.index(user_index)

    def user_index(self, canonical):
        return self.order[canonical]

    def scaled(self, factor):
        return ProblemSpec(
            servers=self.servers,
            collusion=self.collusion,
            lengths=tuple(length * factor for length in self.lengths),
            priors=self.priors,
            field=self.field,
            order=self.order,
        )

    def to_dict(self):
        # User order, so documents round-trip through the caller's indices
        user_lengths = [0] * self.K
        user_priors = [Fraction(0)] * self.K
        for canonical, user in enumerate(self.order):
            user_lengths[user] = self.lengths[canonical]
            user_priors[user] = self.priors[canonical]
        return {
            'servers': str(self.servers),
            'collusion': str(self.collusion),
            'lengths': [str(length) for length in user_lengths],
            'priors': [str(prior) for prior in user_priors],
            'field': self.field.to_dict(),
        }


@dataclass(frozen=True)
class SubpacketPlan:
    spec: ProblemSpec
    alpha: int
    U: Tuple[int, ...]
    nu: Tuple[int, ...]
    D: int
    U_of_theta: Tuple[int, ...]
    M: Tuple[int, ...]

    @property
    def total_downloads(self):
        return self.alpha * self.D

    def session_rate(self, theta) -> Fraction:
        return Fraction(self.spec.lengths[theta], self.total_downloads)

    def rate(self) -> Fraction:
        return self.spec.expected_length / self.total_downloads

    def to_dict(self):
        return {
            'alpha': str(self.alpha),
            'U': [str(value) for value in self.U],
            'nu': [str(value) for value in self.nu],
            'D': str(self.D),
            'U_of_theta': [str(value) for value in self.U_of_theta],
            'M': [str(value) for value in self.M],
        }


@dataclass(frozen=True)
class ComparisonEntry:
    name: str
    statement: str
    condition_values: Tuple[Fraction, ...]
    holds: bool
    verdict: str
    sem_rate: Fraction
    other_rate: Fraction

    def to_dict(self):
        return {
            'name': self.name,
            'statement': self.statement,
            'condition_values': [str(value) for value in self.condition_values],
            'holds': self.holds,
            'verdict': self.verdict,
            'sem_rate': str(self.sem_rate),
            'other_rate': str(self.other_rate),
        }


@dataclass(frozen=True)
class RateReport:
    rate: Fraction
    capacity: Fraction
    expected_length: Fraction
    per_theta_rates: Tuple[Fraction, ...]
    comparisons: Tuple[ComparisonEntry, ...] = field(default_factory=tuple)
    lift: int = 1

    def to_dict(self):
        return {
            'rate': str(self.rate),
            'capacity': str(self.capacity),
            'expected_length': str(self.expected_length),
            'per_theta_rates': [str(rate) for rate in self.per_theta_rates],
            'comparisons': [entry.to_dict() for entry in self.comparisons],
            'lift': str(self.lift),
        }


def download_denominator(spec: ProblemSpec) -> Fraction:
    """Σ (T/N)^(i-1) L_i over the canonical (descending) order"""
    ratio = Fraction(spec.T, spec.N)
    return sum((ratio ** i * length for i, length in enumerate(spec.lengths)), Fraction(0))


def capacity(spec: ProblemSpec) -> Fraction:
    return spec.expected_length / download_denominator(spec)


def sem_pir_capacity(spec: ProblemSpec, effective_servers: Optional[Fraction] = None) -> Fraction:
    """
    Non-colluding semantic PIR capacity E[L] / Σ L_i / n^(i-1) with
    n = effective_servers (defaults to N); n = N/T gives the T-colluding value.
    """
    n = Fraction(effective_servers if effective_servers is not None else spec.N)
    return spec.expected_length / sum((length / n ** i for i, length in enumerate(spec.lengths)), Fraction(0))


def tpir_capacity(servers, collusion, messages) -> Fraction:
    ratio = Fraction(collusion, servers)
    return 1 / sum((ratio ** i for i in range(messages)), Fraction(0))


def pir_capacity(servers, messages) -> Fraction:
    return tpir_capacity(servers, 1, messages)


def zero_padding_rate(spec: ProblemSpec, padded_collusion) -> Fraction:
    """Pad every message to L_1 and run the equal-length capacity-achieving scheme"""
    ratio = Fraction(padded_collusion, spec.N)
    return spec.expected_length / (spec.lengths[0] * sum((ratio ** i for i in range(spec.K)), Fraction(0)))


def build_v_matrix(spec: ProblemSpec) -> Tuple[List[List[Fraction]], List[List[Fraction]]]:
    """
    V maps per-server singleton counts ν to fresh desired-message symbols U;
    returns (V, V^-1), the inverse in closed form.
    """
    N, T, K = spec.N, spec.T, spec.K
    V = [[Fraction(0)] * K for _ in range(K)]
    V_inv = [[Fraction(0)] * K for _ in range(K)]
    for i in range(K):
        V[i][i] = Fraction(N ** (i + 1), T ** i)
        V_inv[i][i] = Fraction(T ** i, N ** (i + 1))
        for j in range(i + 1, K):
            V[i][j] = Fraction((N - T) * N ** j, T ** j)
            V_inv[i][j] = Fraction(-(N - T) * T ** (j - 1), N ** (j + 1))
    return V, V_inv


def _apply(matrix, vector):
    return [sum((a * b for a, b in zip(row, vector)), Fraction(0)) for row in matrix]


def sum_count_factors(spec: ProblemSpec):
    """((N-T)/T)^(s-1) for each level s = 1..K"""
    return [spec.sum_ratio ** level for level in range(spec.K)]


def _count_terms(spec, values):
    """Every s-sum count ((N-T)/T)^(s-1)·v_k with level s <= k (1-based)"""
    factors = sum_count_factors(spec)
    return [
        (k, factors[level] * values[k])
        for k in range(spec.K)
        for level in range(k + 1)
    ]


def _lift_factor(spec, M):
    denominators = [value.denominator for value in M]
    denominators += [term.denominator for _, term in _count_terms(spec, M)]
    return math.lcm(*denominators)


def feasibility_lift(spec: ProblemSpec) -> Tuple[ProblemSpec, int]:
    """
    Smallest λ making λ·V^-1 L integral together with every s-sum count
    derived from it; returns the spec with lengths λL and λ.
    """
    _, V_inv = build_v_matrix(spec)
    M = _apply(V_inv, spec.lengths)
    if any(value < 0 for value in M):
        raise PlanConsistencyError(f"negative singleton counts for descending lengths: {M}")
    lift = _lift_factor(spec, M)
    if lift > 1:
        logger.info(f"Lengths {spec.lengths} need lift factor {lift}")
    return spec.scaled(lift), lift


def _divisors_descending(value):
    small = [d for d in range(1, math.isqrt(value) + 1) if value % d == 0]
    return sorted(set(small + [value // d for d in small]), reverse=True)


def compute_plan(spec: ProblemSpec) -> SubpacketPlan:
    N, T, K = spec.N, spec.T, spec.K
    _, V_inv = build_v_matrix(spec)
    M = _apply(V_inv, spec.lengths)

    offending = [(index, value) for index, value in enumerate(M) if value.denominator != 1 or value < 0]
    offending += [
        (k, term) for k, term in _count_terms(spec, M)
        if term.denominator != 1 and all(k != index for index, _ in offending)
    ]
    if offending:
        raise InfeasiblePlanError(offending, _lift_factor(spec, M))

    M_int = [int(value) for value in M]
    common = math.gcd(*spec.lengths, *M_int)
    alpha = next(
        divisor for divisor in _divisors_descending(common)
        if all(term.denominator == 1 for _, term in _count_terms(spec, [Fraction(m, divisor) for m in M_int]))
    )
    nu = [m // alpha for m in M_int]
    U = [length // alpha for length in spec.lengths]

    D = sum((Fraction(N ** (i + 1), T ** i) * nu[i] for i in range(K)), Fraction(0))
    if D.denominator != 1:
        raise PlanConsistencyError(f"per-iteration download count {D} is not an integer")

    U_of_theta = []
    for theta in range(K):
        fresh = Fraction(N ** (theta + 1), T ** theta) * nu[theta]
        fresh += (N - T) * sum((Fraction(N, T) ** i * nu[i] for i in range(theta + 1, K)), Fraction(0))
        if fresh != U[theta]:
            raise PlanConsistencyError(f"fresh symbols for message {theta + 1}: closed form {fresh}, sub-packet {U[theta]}")
        U_of_theta.append(int(fresh))

    if alpha * D != download_denominator(spec):
        raise PlanConsistencyError(f"alpha*D = {alpha * D} but the converse bound is {download_denominator(spec)}")

    plan = SubpacketPlan(
        spec=spec,
        alpha=alpha,
        U=tuple(U),
        nu=tuple(nu),
        D=int(D),
        U_of_theta=tuple(U_of_theta),
        M=tuple(M_int),
    )
    logger.debug(f"Plan for N={N}, T={T}, L={spec.lengths}: alpha={alpha}, nu={plan.nu}, D={plan.D}")
    return plan


def converse_bound(spec: ProblemSpec, check_permutations: bool = True) -> Fraction:
    """
    Largest Σ (T/N)^(j-1) L_(i_j) over orderings of the messages; attained by
    the descending order, confirmed by enumeration for small K.
    """
    bound = download_denominator(spec)
    if check_permutations and spec.K <= BRUTE_FORCE_MAX_MESSAGES:
        ratio = Fraction(spec.T, spec.N)
        brute = max(
            sum((ratio ** j * length for j, length in enumerate(ordering)), Fraction(0))
            for ordering in permutations(spec.lengths)
        )
        if brute != bound:
            raise PlanConsistencyError(f"permutation maximum {brute} differs from descending order {bound}")
    return bound


def _verdict(sem_rate, other_rate):
    if sem_rate > other_rate:
        return 'higher'
    if sem_rate == other_rate:
        return 'equal'
    return 'lower'


def compare_tpir(spec: ProblemSpec) -> ComparisonEntry:
    ratio = Fraction(spec.T, spec.N)
    mean = spec.expected_length
    value = sum(((length - mean) * ratio ** i for i, length in enumerate(spec.lengths)), Fraction(0))
    sem_rate = capacity(spec)
    return ComparisonEntry(
        name='tpir',
        statement='Σ (L_i - E[L]) (T/N)^(i-1) <= 0',
        condition_values=(value,),
        holds=value <= 0,
        verdict=_verdict(sem_rate, tpir_capacity(spec.N, spec.T, spec.K)),
        sem_rate=sem_rate,
        other_rate=tpir_capacity(spec.N, spec.T, spec.K),
    )


def compare_pir(spec: ProblemSpec) -> ComparisonEntry:
    mean = spec.expected_length
    value = sum(
        ((mean - spec.T ** i * length) / Fraction(spec.N) ** i for i, length in enumerate(spec.lengths)),
        Fraction(0),
    )
    sem_rate = capacity(spec)
    other_rate = pir_capacity(spec.N, spec.K)
    return ComparisonEntry(
        name='pir',
        statement='Σ (E[L] - T^(i-1) L_i) / N^(i-1) >= 0',
        condition_values=(value,),
        holds=value >= 0,
        verdict=_verdict(sem_rate, other_rate),
        sem_rate=sem_rate,
        other_rate=other_rate,
    )


def compare_zero_padding(spec: ProblemSpec, padded_collusion: int) -> ComparisonEntry:
    if padded_collusion not in (1, spec.T):
        raise SpecValidationError(f"zero padding is compared at T'=1 or T'={spec.T}, got {padded_collusion}")
    sem_rate = capacity(spec)
    other_rate = zero_padding_rate(spec, padded_collusion)
    if padded_collusion == spec.T:
        # Always holds: padding only adds downloads
        ratio = Fraction(spec.T, spec.N)
        value = spec.lengths[0] * sum((ratio ** i for i in range(spec.K)), Fraction(0)) - download_denominator(spec)
        values: Sequence[Fraction] = (value,)
        statement = 'L_1 Σ (T/N)^(i-1) - Σ (T/N)^(i-1) L_i >= 0'
        holds = value >= 0
        name = 'zero_padding_tpir'
    else:
        values = tuple(
            Fraction(spec.lengths[0] - spec.T ** i * spec.lengths[i]) for i in range(1, spec.K)
        )
        statement = 'L_1 > T^(i-1) L_i for i = 2..K'
        holds = all(value > 0 for value in values)
        name = 'zero_padding_pir'
    return ComparisonEntry(
        name=name,
        statement=statement,
        condition_values=tuple(values),
        holds=holds,
        verdict=_verdict(sem_rate, other_rate),
        sem_rate=sem_rate,
        other_rate=other_rate,
    )


def rate_report(spec: ProblemSpec, lift: bool = True) -> RateReport:
    """Scheme rate, capacity, per-retrieval rates and the four comparisons"""
    factor = 1
    planned = spec
    if lift:
        planned, factor = feasibility_lift(spec)
    plan = compute_plan(planned)
    per_theta = tuple(plan.session_rate(theta) for theta in range(spec.K))
    mean_rate = sum((prior * rate for prior, rate in zip(spec.priors, per_theta)), Fraction(0))
    if mean_rate != capacity(spec):
        raise PlanConsistencyError(f"prior-weighted session rate {mean_rate} differs from capacity {capacity(spec)}")
    comparisons = [compare_tpir(spec), compare_zero_padding(spec, spec.T), compare_pir(spec)]
    if spec.T > 1:
        comparisons.append(compare_zero_padding(spec, 1))
    return RateReport(
        rate=plan.rate(),
        capacity=capacity(spec),
        expected_length=spec.expected_length,
        per_theta_rates=per_theta,
        comparisons=tuple(comparisons),
        lift=factor,
    )


def plan_summary(plan: SubpacketPlan) -> Dict[str, object]:
    """Plan fields plus totals, for reports"""
    summary = plan.to_dict()
    summary['downloads'] = str(plan.total_downloads)
    summary['rate'] = str(plan.rate())
    return summary
