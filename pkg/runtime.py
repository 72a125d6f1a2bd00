"""
Simulated replicated servers
============================
Servers are pure functions of (message store, query slots); a session runs α
iterations with fresh scramblers, collects every answer and decodes. The
collusion adversary is a view extractor applied after the fact.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from decode import DecodeIntegrityError, RecoveredMessage, recover_message
from gf import FieldSpec, stack_rows, to_ints
from params import ProblemSpec, SubpacketPlan, compute_plan
from scheme import (
    CombinationLedger,
    DecodingScript,
    MdsAllocation,
    Mutation,
    QuerySet,
    SessionSecrets,
    Subset,
    allocate_mds,
    build_ledger,
    build_queries,
    draw_scramblers,
)
from serialization import calculate_checksum

logger = logging.getLogger(__name__)

# Independent random streams derived from one user seed
MESSAGE_STREAM = 0
SCRAMBLER_STREAM = 1
THETA_STREAM = 2


class DimensionMismatchError(Exception):
    """A coefficient row does not fit the message sub-packet it addresses"""
    pass


class CollusionSizeError(Exception):
    """A colluding set must name exactly T distinct servers"""
    pass


def derive_seed(seed, stream, *path) -> np.random.SeedSequence:
    """Child seed for one stream (and optional index path) of a user seed"""
    return np.random.SeedSequence([int(seed), stream, *[int(part) for part in path]])


@dataclass(frozen=True)
class MessageStore:
    """The K messages, replicated at every server; canonical order"""
    field: FieldSpec
    messages: Tuple[object, ...]

    @property
    def lengths(self):
        return tuple(len(message) for message in self.messages)

    def block(self, message, iteration, size):
        stop = (iteration + 1) * size
        if message >= len(self.messages) or stop > len(self.messages[message]):
            raise DimensionMismatchError(
                f"iteration {iteration} block of size {size} exceeds message {message + 1}"
            )
        return self.messages[message][iteration * size:stop]


def generate_messages(spec: ProblemSpec, seed) -> MessageStore:
    """I.i.d. uniform symbols, deterministic per seed"""
    rng = np.random.default_rng(derive_seed(seed, MESSAGE_STREAM))
    messages = tuple(spec.field.random((length,), rng) for length in spec.lengths)
    return MessageStore(field=spec.field, messages=messages)


def answer_query(store: MessageStore, server_slots: Sequence) -> object:
    """
    One server's answers: slot t gets Σ_i <coefficients_i, W_i sub-block>.
    The sub-block is picked from the slot's iteration and the row length.
    """
    field_spec = store.field
    answers = field_spec.zeros(len(server_slots))
    groups: Dict[Tuple[int, int], List[Tuple[int, object]]] = {}
    for position, slot in enumerate(server_slots):
        for message, row in slot.coefficients.items():
            groups.setdefault((slot.iteration, message), []).append((position, row))

    for (iteration, message), members in groups.items():
        widths = {len(row) for _, row in members}
        if len(widths) != 1:
            raise DimensionMismatchError(f"rows for message {message + 1} have lengths {sorted(widths)}")
        block = store.block(message, iteration, widths.pop())
        positions = [position for position, _ in members]
        answers[positions] += stack_rows(field_spec, [row for _, row in members]) @ block
    return answers


@dataclass(frozen=True)
class IterationRecord:
    queries: QuerySet
    answers: Tuple[object, ...]

    @property
    def downloads(self):
        return sum(len(server_answers) for server_answers in self.answers)

    def to_dict(self, order):
        document = self.queries.to_dict(order)
        document['answers'] = [[str(value) for value in to_ints(server_answers)] for server_answers in self.answers]
        return document


@dataclass(frozen=True)
class Transcript:
    spec: ProblemSpec
    plan: SubpacketPlan
    theta: int
    seed: int
    ledger: CombinationLedger
    allocation: MdsAllocation
    script: DecodingScript
    iterations: Tuple[IterationRecord, ...]
    mutation: Mutation = Mutation.NONE
    recovered: Optional[RecoveredMessage] = None
    recovery_verified: bool = False
    # User-side secrets; never part of the serialized transcript
    secrets: Tuple[SessionSecrets, ...] = field(default=(), repr=False, compare=False)

    @property
    def downloads(self) -> int:
        return sum(record.downloads for record in self.iterations)

    @property
    def rate(self) -> Fraction:
        return Fraction(self.spec.lengths[self.theta], self.downloads)

    def to_dict(self):
        order = self.spec.order
        return {
            'spec': self.spec.to_dict(),
            'theta': str(order[self.theta] + 1),
            'seed': str(self.seed),
            'mutation': self.mutation.value,
            'plan': self.plan.to_dict(),
            'iterations': [record.to_dict(order) for record in self.iterations],
            'recovered': self.recovered.to_dict(order) if self.recovered is not None else None,
            'recovery_verified': self.recovery_verified,
            'downloads': str(self.downloads),
            'rate': str(self.rate),
        }

    def checksum(self):
        return calculate_checksum(self.to_dict())


def run_session(
    spec: ProblemSpec,
    theta: int,
    seed: int,
    mutation: Mutation = Mutation.NONE,
    store: Optional[MessageStore] = None,
    plan: Optional[SubpacketPlan] = None,
) -> Transcript:
    """
    One full retrieval of canonical message ``theta``: α iterations, each with
    fresh scramblers, then decode and compare against the store.
    """
    plan = plan or compute_plan(spec)
    store = store or generate_messages(spec, seed)
    if store.lengths != spec.lengths:
        raise DimensionMismatchError(f"store lengths {store.lengths} differ from spec {spec.lengths}")

    ledger = build_ledger(plan, theta, mutation)
    allocation = allocate_mds(plan, theta, ledger)
    records = []
    secrets = []
    script = None
    for iteration in range(plan.alpha):
        session_secrets = draw_scramblers(plan, derive_seed(seed, SCRAMBLER_STREAM, iteration), theta)
        queries, script = build_queries(plan, theta, session_secrets, ledger, allocation, iteration, mutation)
        answers = tuple(answer_query(store, slots) for slots in queries.servers)
        records.append(IterationRecord(queries=queries, answers=answers))
        secrets.append(session_secrets)

    transcript = Transcript(
        spec=spec,
        plan=plan,
        theta=theta,
        seed=seed,
        ledger=ledger,
        allocation=allocation,
        script=script,
        iterations=tuple(records),
        mutation=mutation,
        secrets=tuple(secrets),
    )
    recovered = recover_message(transcript, transcript.secrets)
    if to_ints(recovered.symbols) != to_ints(store.messages[theta]):
        logger.error(f"🚨 Recovered message {theta + 1} differs from the stored message (seed {seed})")
        raise DecodeIntegrityError(f"recovered message {theta + 1} differs from the stored message")
    if transcript.downloads != plan.total_downloads and mutation is Mutation.NONE:
        raise DecodeIntegrityError(f"session downloaded {transcript.downloads}, plan says {plan.total_downloads}")

    logger.debug(f"Session theta={theta + 1} seed={seed}: {transcript.downloads} downloads, exact recovery")
    return replace(transcript, recovered=recovered, recovery_verified=True)


@dataclass(frozen=True)
class PooledView:
    """Every slot the colluding servers received, coefficients included"""
    colluders: Tuple[int, ...]
    slots: Tuple[object, ...]
    answers: Optional[Tuple[object, ...]] = None

    def subset_counts(self) -> Dict[Subset, int]:
        return dict(Counter(slot.subset for slot in self.slots))

    def rows_for(self, message):
        """Stacked coefficient rows addressed to ``message``, in slot order"""
        return [slot.coefficients[message] for slot in self.slots if message in slot.coefficients]


def _check_colluders(colluders: Iterable[int], servers: int, collusion: int) -> Tuple[int, ...]:
    colluders = tuple(colluders)
    if len(colluders) != collusion or len(set(colluders)) != collusion:
        raise CollusionSizeError(f"expected {collusion} distinct servers, got {colluders}")
    if any(not 0 <= server < servers for server in colluders):
        raise CollusionSizeError(f"servers must lie in 1..{servers}, got {[server + 1 for server in colluders]}")
    return tuple(sorted(colluders))


def pooled_slots(query_sets: Sequence[QuerySet], colluders: Sequence[int]) -> Tuple[object, ...]:
    return tuple(slot for queries in query_sets for server in colluders for slot in queries.servers[server])


def collude_view(transcript: Transcript, colluders: Iterable[int], include_answers: bool = False) -> PooledView:
    """
    The query view of a T-server coalition. ``include_answers`` adds the
    coalition's own answers (the answer-augmented view).
    """
    spec = transcript.spec
    colluders = _check_colluders(colluders, spec.N, spec.T)
    slots = pooled_slots([record.queries for record in transcript.iterations], colluders)
    answers = None
    if include_answers:
        answers = tuple(record.answers[server] for record in transcript.iterations for server in colluders)
    return PooledView(colluders=colluders, slots=slots, answers=answers)


def sample_theta(spec: ProblemSpec, seed, index: int = 0) -> int:
    """Draw a canonical θ from the priors"""
    rng = np.random.default_rng(derive_seed(seed, THETA_STREAM, index))
    weights = np.array([float(prior) for prior in spec.priors])
    return int(rng.choice(spec.K, p=weights / weights.sum()))
