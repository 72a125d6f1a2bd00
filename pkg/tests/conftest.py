"""Shared instances for the test suite"""

from fractions import Fraction

import numpy as np
import pytest

from gf import FieldSpec
from params import ProblemSpec, build_v_matrix, compute_plan, feasibility_lift


@pytest.fixture
def three_messages():
    """N=4, T=3, three messages of decreasing length"""
    return ProblemSpec.create(
        servers=4,
        collusion=3,
        lengths=[192, 128, 64],
        priors=[Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)],
    )


@pytest.fixture
def four_messages():
    """N=8, T=2, four messages, α=8"""
    return ProblemSpec.create(servers=8, collusion=2, lengths=[16384, 12288, 8192, 4096])


@pytest.fixture
def two_message_spec():
    """N=10, T=2, one long popular message and one short rare one"""
    return ProblemSpec.create(
        servers=10,
        collusion=2,
        lengths=[1000, 100],
        priors=[Fraction(99, 100), Fraction(1, 100)],
    )


@pytest.fixture
def small_spec():
    """N=3, T=2, L=(9,9) over GF(19): ν=(2,2), D=15"""
    return ProblemSpec.create(servers=3, collusion=2, lengths=[9, 9], field=FieldSpec(19))


@pytest.fixture
def single_message_spec():
    return ProblemSpec.create(servers=3, collusion=1, lengths=[6])


def feasible_specs(count, seed, budget):
    """
    Random feasible instances (N <= 8, T < N, K <= 4) whose per-session work
    alpha * sum(U) stays within ``budget``. Built from a non-increasing ν with
    ν_k divisible by T^k, so L = Vν is integral, descending and schedulable.
    """
    rng = np.random.default_rng(seed)
    specs = []
    attempts = 0
    while len(specs) < count:
        attempts += 1
        assert attempts < 100 * count, "could not find enough small feasible specs"
        servers = int(rng.integers(2, 9))
        collusion = int(rng.integers(1, servers))
        messages = int(rng.integers(1, 5))
        nu = [0] * messages
        nu[-1] = collusion ** (messages - 1) * int(rng.integers(1, 3))
        for k in range(messages - 2, -1, -1):
            nu[k] = nu[k + 1] + collusion ** k * int(rng.integers(0, 3))
        draft = ProblemSpec.create(servers, collusion, [1] * messages)
        V, _ = build_v_matrix(draft)
        lengths = [sum((V[i][j] * nu[j] for j in range(messages)), Fraction(0)) for i in range(messages)]
        if any(length.denominator != 1 for length in lengths):
            continue
        lengths = [int(length) for length in lengths]
        if max(lengths) > 20000:
            continue
        priors = [Fraction(int(w), 1) for w in rng.integers(1, 10, size=messages)]
        total = sum(priors)
        spec = ProblemSpec.create(servers, collusion, lengths, [prior / total for prior in priors])
        plan = compute_plan(spec)
        if plan.alpha * sum(plan.U) > budget:
            continue
        specs.append(spec)
    return specs


def lifted_specs(count, seed, budget):
    """
    Random descending lengths (N < 7, K <= 3) scaled by their minimal lift
    factor. Kept when the lifted lengths sum to at most ``budget``.
    """
    rng = np.random.default_rng(seed)
    specs = []
    attempts = 0
    while len(specs) < count:
        attempts += 1
        assert attempts < 200 * count, "could not find enough small liftable specs"
        servers = int(rng.integers(2, 7))
        collusion = int(rng.integers(1, servers))
        lengths = rng.integers(1, 21, size=int(rng.integers(1, 4))).tolist()
        spec, _ = feasibility_lift(ProblemSpec.create(servers, collusion, lengths))
        if max(spec.lengths) > 20000 or sum(spec.lengths) > budget:
            continue
        specs.append(spec)
    return specs


@pytest.fixture
def round_trip_grid():
    return feasible_specs(10, seed=31, budget=300) + lifted_specs(10, seed=5, budget=300)
