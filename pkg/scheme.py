"""
Query synthesis
===============
Turns a SubpacketPlan and a desired index θ into per-server queries:

1. the combination ledger: for every nonempty subset S of messages, each
   server serves c_S = ((N-T)/T)^(|S|-1) * min(ν_S) sums over S;
2. the MDS allocation: every subset R that excludes θ owns one systematic
   code shared by all its members, whose parities are spent in the sums
   over R ∪ {θ};
3. secret scramblers S_i and the composite coefficient rows the servers see;
4. the decoding script that cancels interference level by level.

Message indices are canonical (0-based, lengths descending) throughout.
"""

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from gf import RankDeficiencyError, mat_inverse
from mds import MdsConstructionError, MdsGenerator, build_mds
from params import SubpacketPlan

logger = logging.getLogger(__name__)

Subset = Tuple[int, ...]


class PlanCorruptionError(Exception):
    """Ledger counts do not match the plan they were built from"""
    pass


class AllocationError(Exception):
    """MDS codes cannot be laid out inside the sub-packets"""
    pass


class ScramblerSamplingError(Exception):
    """No invertible scrambler found within the retry budget"""
    pass


class Mutation(str, Enum):
    """Injected planner defects, used to prove the audits can fail"""
    NONE = 'none'
    EXTRA_SINGLETON = 'extra-singleton'
    RAW_INTERFERENCE = 'raw-interference'


def ordered_subsets(messages: int) -> List[Subset]:
    """Nonempty subsets in size-then-lexicographic order"""
    return [subset for size in range(1, messages + 1) for subset in combinations(range(messages), size)]


def subset_count(plan: SubpacketPlan, subset: Sequence[int]) -> Fraction:
    return plan.spec.sum_ratio ** (len(subset) - 1) * min(plan.nu[i] for i in subset)


def _with(subset, message):
    return tuple(sorted(set(subset) | {message}))


def _without(subset, message):
    return tuple(i for i in subset if i != message)


@dataclass(frozen=True)
class SymbolRoute:
    """One message's symbol inside a slot: a fresh W'_θ index (code None) or a code coordinate"""
    message: int
    code: Optional[Subset]
    index: int


@dataclass(frozen=True)
class SlotRoute:
    server: int
    subset: Subset
    routes: Tuple[SymbolRoute, ...]
    case: Optional[str] = None


@dataclass(frozen=True)
class CombinationLedger:
    theta: int
    servers: int
    counts: Dict[Subset, int]
    slots: Tuple[Tuple[SlotRoute, ...], ...]
    code_dimensions: Dict[Subset, int]
    code_lengths: Dict[Subset, int]
    fresh_total: int
    mutation: Mutation = Mutation.NONE

    @property
    def total_slots(self):
        return sum(len(server_slots) for server_slots in self.slots)

    def server_counts(self, server) -> Dict[Subset, int]:
        return dict(Counter(route.subset for route in self.slots[server]))

    def cases(self) -> Dict[Subset, str]:
        return {
            route.subset: route.case
            for route in self.slots[0] if route.case is not None
        } if self.slots else {}

    def to_dict(self):
        return {
            'theta': str(self.theta + 1),
            'per_server_counts': {
                '+'.join(str(i + 1) for i in subset): str(count)
                for subset, count in self.counts.items() if count
            },
            'total_slots': str(self.total_slots),
            'fresh_total': str(self.fresh_total),
        }


def build_ledger(plan: SubpacketPlan, theta: int, mutation: Mutation = Mutation.NONE) -> CombinationLedger:
    spec = plan.spec
    N, K = spec.N, spec.K
    if not 0 <= theta < K:
        raise PlanCorruptionError(f"theta {theta + 1} outside 1..{K}")

    counts: Dict[Subset, int] = {}
    for subset in ordered_subsets(K):
        count = subset_count(plan, subset)
        if count.denominator != 1:
            raise PlanCorruptionError(f"s-sum count for {subset} is not an integer: {count}")
        counts[subset] = int(count)

    code_dimensions: Dict[Subset, int] = {}
    code_lengths: Dict[Subset, int] = {}
    for subset in ordered_subsets(K):
        if theta in subset or counts[subset] == 0:
            continue
        code_dimensions[subset] = N * counts[subset]
        code_lengths[subset] = N * (counts[subset] + counts[_with(subset, theta)])

    slots: List[List[SlotRoute]] = [[] for _ in range(N)]
    theta_cursor = 0
    for subset in ordered_subsets(K):
        count = counts[subset]
        if count == 0:
            continue
        case = None
        if theta in subset and len(subset) > 1:
            others = min(plan.nu[i] for i in subset if i != theta)
            case = 'II' if plan.nu[theta] < others else 'I'
        for server in range(N):
            for t in range(count):
                offset = server * count + t
                routes = []
                for message in subset:
                    if message == theta:
                        routes.append(SymbolRoute(message, None, theta_cursor + offset))
                    elif theta in subset:
                        code = _without(subset, theta)
                        routes.append(SymbolRoute(message, code, code_dimensions[code] + offset))
                    else:
                        routes.append(SymbolRoute(message, subset, offset))
                slots[server].append(SlotRoute(server, subset, tuple(routes), case))
            if mutation is Mutation.EXTRA_SINGLETON and subset == (theta,):
                slots[server].append(SlotRoute(server, subset, (SymbolRoute(theta, None, server * count),)))
        if theta in subset:
            theta_cursor += N * count

    if mutation is Mutation.EXTRA_SINGLETON:
        counts[(theta,)] += 1
    else:
        downloads = sum(N * count for count in counts.values())
        if downloads != plan.D:
            raise PlanCorruptionError(f"ledger downloads {downloads} differ from plan D={plan.D}")
        if theta_cursor != plan.U_of_theta[theta]:
            raise PlanCorruptionError(
                f"ledger recovers {theta_cursor} symbols of message {theta + 1}, plan expects {plan.U_of_theta[theta]}"
            )

    return CombinationLedger(
        theta=theta,
        servers=N,
        counts=counts,
        slots=tuple(tuple(server_slots) for server_slots in slots),
        code_dimensions=code_dimensions,
        code_lengths=code_lengths,
        fresh_total=theta_cursor,
        mutation=mutation,
    )


@dataclass(frozen=True)
class MdsAssignment:
    """Message ``message``'s share of the code owned by ``subset``"""
    message: int
    subset: Subset
    generator: MdsGenerator
    info_range: Tuple[int, int]
    coded_offset: int
    consumer: Optional[Subset]

    @property
    def level(self):
        return len(self.subset)

    @property
    def parity_range(self):
        return (self.generator.k, self.generator.n)


@dataclass(frozen=True)
class MdsAllocation:
    theta: int
    assignments: Dict[Tuple[int, Subset], MdsAssignment]
    consumed: Dict[int, int]

    def generator(self, subset: Subset) -> MdsGenerator:
        for (_, owner), assignment in self.assignments.items():
            if owner == subset:
                return assignment.generator
        raise KeyError(subset)

    def codes(self) -> Dict[Subset, MdsGenerator]:
        return {owner: assignment.generator for (_, owner), assignment in self.assignments.items()}

    def for_message(self, message) -> List[MdsAssignment]:
        return [assignment for (member, _), assignment in self.assignments.items() if member == message]

    def to_dict(self):
        return {
            'theta': str(self.theta + 1),
            'codes': [
                {
                    'message': str(assignment.message + 1),
                    'subset': [str(i + 1) for i in assignment.subset],
                    'shape': f"{assignment.generator.n}x{assignment.generator.k}",
                    'info_range': [str(assignment.info_range[0] + 1), str(assignment.info_range[1])],
                }
                for assignment in self.assignments.values()
            ],
            'consumed': {str(message + 1): str(count) for message, count in self.consumed.items()},
        }


def allocate_mds(plan: SubpacketPlan, theta: int, ledger: CombinationLedger) -> MdsAllocation:
    if ledger.theta != theta:
        raise AllocationError(f"ledger was built for theta {ledger.theta + 1}, not {theta + 1}")
    spec = plan.spec
    cursor = {message: 0 for message in range(spec.K) if message != theta}
    coded = dict(cursor)
    assignments: Dict[Tuple[int, Subset], MdsAssignment] = {}
    for subset in ordered_subsets(spec.K):
        if subset not in ledger.code_dimensions:
            continue
        k = ledger.code_dimensions[subset]
        n = ledger.code_lengths[subset]
        try:
            generator = build_mds(n, k, spec.field)
        except MdsConstructionError as e:
            raise AllocationError(f"code for {subset}: {e}")
        consumer = _with(subset, theta) if n > k else None
        for message in subset:
            start = cursor[message]
            if start + k > plan.U[message]:
                raise AllocationError(
                    f"message {message + 1} needs {start + k} information symbols, sub-packet has {plan.U[message]}"
                )
            assignments[(message, subset)] = MdsAssignment(
                message=message,
                subset=subset,
                generator=generator,
                info_range=(start, start + k),
                coded_offset=coded[message],
                consumer=consumer,
            )
            cursor[message] = start + k
            coded[message] += n
    logger.debug(f"Allocated {len(assignments)} code shares for theta={theta + 1}: consumed {cursor}")
    return MdsAllocation(theta=theta, assignments=assignments, consumed=cursor)


@dataclass(frozen=True)
class SessionSecrets:
    seed: object
    theta: int
    scramblers: Tuple[object, ...]
    inverses: Tuple[object, ...]
    attempts: Tuple[int, ...] = field(default_factory=tuple)


def draw_scramblers(plan: SubpacketPlan, seed, theta: int) -> SessionSecrets:
    """
    Uniform invertible U_i x U_i matrices by rejection sampling, each with its
    inverse. ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    spec = plan.spec
    rng = np.random.default_rng(seed)
    scramblers = []
    inverses = []
    attempts = []
    for message, size in enumerate(plan.U):
        for attempt in range(1, Config.SCRAMBLER_RETRIES + 1):
            candidate = spec.field.random((size, size), rng)
            try:
                inverse = mat_inverse(spec.field, candidate)
            except RankDeficiencyError:
                continue
            scramblers.append(candidate)
            inverses.append(inverse)
            attempts.append(attempt)
            break
        else:
            raise ScramblerSamplingError(
                f"no invertible {size}x{size} matrix in {Config.SCRAMBLER_RETRIES} draws over GF({spec.field.modulus})"
            )
    return SessionSecrets(
        seed=seed,
        theta=theta,
        scramblers=tuple(scramblers),
        inverses=tuple(inverses),
        attempts=tuple(attempts),
    )


@dataclass(frozen=True)
class QuerySlot:
    server: int
    subset: Subset
    iteration: int
    coefficients: Dict[int, object]

    def to_dict(self, order):
        return {
            'server': str(self.server + 1),
            'subset': sorted(str(order[i] + 1) for i in self.subset),
            'coeffs': {
                str(order[message] + 1): [str(value) for value in np.asarray(row).tolist()]
                for message, row in sorted(self.coefficients.items())
            },
        }


@dataclass(frozen=True)
class QuerySet:
    iteration: int
    servers: Tuple[Tuple[QuerySlot, ...], ...]

    @property
    def total_slots(self):
        return sum(len(slots) for slots in self.servers)

    def to_dict(self, order):
        return {
            'iteration': str(self.iteration),
            'slots': [slot.to_dict(order) for slots in self.servers for slot in slots],
        }


@dataclass(frozen=True)
class CompletionStep:
    """Fill the parities of ``code`` from its systematic downloads"""
    code: Subset
    level: int
    known: Tuple[Tuple[int, int, int], ...]
    targets: Tuple[int, ...]


@dataclass(frozen=True)
class RecoveryStep:
    """One fresh W'_θ symbol: the slot answer minus at most one summed parity"""
    server: int
    position: int
    theta_index: int
    interference: Optional[Tuple[Subset, int]]


@dataclass(frozen=True)
class DecodingScript:
    theta: int
    fresh_count: int
    steps: Tuple[object, ...]

    def completions(self):
        return [step for step in self.steps if isinstance(step, CompletionStep)]

    def recoveries(self):
        return [step for step in self.steps if isinstance(step, RecoveryStep)]

    def to_dict(self):
        return {
            'theta': str(self.theta + 1),
            'fresh_count': str(self.fresh_count),
            'completions': [
                {'code': [str(i + 1) for i in step.code], 'known': str(len(step.known)), 'targets': str(len(step.targets))}
                for step in self.completions()
            ],
            'recoveries': str(len(self.recoveries())),
        }


def build_script(ledger: CombinationLedger, allocation: MdsAllocation) -> DecodingScript:
    """Level-ordered: recoveries at level s only read parities completed at level s-1"""
    theta = ledger.theta
    systematic: Dict[Subset, List[Tuple[int, int, int]]] = {}
    recoveries: Dict[int, List[RecoveryStep]] = {}
    seen = set()
    for server, routes in enumerate(ledger.slots):
        for position, route in enumerate(routes):
            if theta in route.subset:
                fresh = next(symbol for symbol in route.routes if symbol.message == theta)
                if fresh.index in seen:
                    continue
                seen.add(fresh.index)
                interference = next(
                    ((symbol.code, symbol.index) for symbol in route.routes if symbol.message != theta),
                    None,
                )
                recoveries.setdefault(len(route.subset), []).append(
                    RecoveryStep(server, position, fresh.index, interference)
                )
            else:
                coordinate = route.routes[0].index
                systematic.setdefault(route.subset, []).append((coordinate, server, position))

    codes = allocation.codes()
    steps: List[object] = []
    for level in range(1, max(len(subset) for subset in ledger.counts) + 1):
        steps.extend(recoveries.get(level, []))
        for subset, generator in codes.items():
            if len(subset) == level and generator.n > generator.k:
                steps.append(CompletionStep(
                    code=subset,
                    level=level,
                    known=tuple(sorted(systematic.get(subset, []))),
                    targets=tuple(range(generator.k, generator.n)),
                ))
    return DecodingScript(theta=theta, fresh_count=len(seen), steps=tuple(steps))


def build_queries(
    plan: SubpacketPlan,
    theta: int,
    secrets: SessionSecrets,
    ledger: CombinationLedger,
    allocation: MdsAllocation,
    iteration: int = 0,
    mutation: Mutation = Mutation.NONE,
) -> Tuple[QuerySet, DecodingScript]:
    if secrets.theta != theta or ledger.theta != theta or allocation.theta != theta:
        raise PlanCorruptionError("secrets, ledger and allocation must share one theta")
    field = plan.spec.field

    composites = {}
    for key, assignment in allocation.assignments.items():
        message = assignment.message
        start, stop = assignment.info_range
        if mutation is Mutation.RAW_INTERFERENCE and theta == 0:
            basis = field.identity(plan.U[message])[start:stop, :]
        else:
            basis = secrets.scramblers[message][start:stop, :]
        composites[key] = assignment.generator.G @ basis
    desired = secrets.scramblers[theta]

    servers = []
    for server, routes in enumerate(ledger.slots):
        slots = []
        for route in routes:
            coefficients = {}
            for symbol in route.routes:
                if symbol.code is None:
                    coefficients[symbol.message] = desired[symbol.index]
                else:
                    coefficients[symbol.message] = composites[(symbol.message, symbol.code)][symbol.index]
            slots.append(QuerySlot(server=server, subset=route.subset, iteration=iteration, coefficients=coefficients))
        servers.append(tuple(slots))

    return QuerySet(iteration=iteration, servers=tuple(servers)), build_script(ledger, allocation)


@dataclass(frozen=True)
class ShapeDigest:
    entries: Tuple[Tuple[int, Subset, int], ...]

    @property
    def fingerprint(self):
        payload = json.dumps([[server, list(subset), count] for server, subset, count in self.entries])
        return hashlib.sha256(payload.encode()).hexdigest()


def shape_digest(query_set: QuerySet) -> ShapeDigest:
    """(server, subset, slot count) in canonical order; carries nothing θ-dependent"""
    entries = []
    for server, slots in enumerate(query_set.servers):
        counter = Counter(slot.subset for slot in slots)
        for subset in sorted(counter, key=lambda s: (len(s), s)):
            entries.append((server, subset, counter[subset]))
    return ShapeDigest(entries=tuple(entries))


def _label(message):
    return chr(ord('a') + message) if message < 26 else f"w{message + 1}"


def _span(start, count):
    if count == 1:
        return f"{start + 1}"
    return f"[{start + 1}:{start + count}]"


def render_layout(ledger: CombinationLedger, allocation: MdsAllocation, order: Optional[Sequence[int]] = None) -> str:
    """
    Per-server table of downloaded symbol ranges. The desired message is
    numbered by fresh W'_θ index; every other message by its coded symbol
    stream (codes concatenated in allocation order). Row labels use
    ``order`` (canonical -> caller index) when given.
    """
    order = order if order is not None else range(len(allocation.consumed) + 1)
    offsets = {key: assignment.coded_offset for key, assignment in allocation.assignments.items()}
    header = ['subset'] + [f"DB {server + 1}" for server in range(ledger.servers)]
    rows = [header]
    for subset, count in ledger.counts.items():
        if count == 0:
            continue
        row = ['~'.join(f"W{order[i] + 1}" for i in subset)]
        for server in range(ledger.servers):
            routes = [route for route in ledger.slots[server] if route.subset == subset]
            parts = []
            for symbol in routes[0].routes:
                if symbol.code is None:
                    start = symbol.index
                else:
                    start = offsets[(symbol.message, symbol.code)] + symbol.index
                parts.append(f"{_label(symbol.message)}{_span(start, len(routes))}")
            row.append('+'.join(parts))
        rows.append(row)
    widths = [max(len(row[column]) for row in rows) for column in range(len(header))]
    return '\n'.join(' | '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows)
