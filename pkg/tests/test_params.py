from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest

from conftest import feasible_specs
from gf import FieldSpec
from params import (
    InfeasiblePlanError,
    ProblemSpec,
    SpecValidationError,
    build_v_matrix,
    capacity,
    compare_pir,
    compare_tpir,
    compare_zero_padding,
    compute_plan,
    converse_bound,
    download_denominator,
    feasibility_lift,
    rate_report,
    sem_pir_capacity,
    tpir_capacity,
)


class TestProblemSpec:

    def test_lengths_are_sorted_and_order_recorded(self):
        spec = ProblemSpec.create(4, 3, [64, 192, 128], [Fraction(1, 6), Fraction(1, 2), Fraction(1, 3)])
        assert spec.lengths == (192, 128, 64)
        assert spec.priors == (Fraction(1, 2), Fraction(1, 3), Fraction(1, 6))
        assert spec.order == (1, 2, 0)
        assert spec.canonical_index(0) == 2
        assert spec.to_dict()['lengths'] == ['64', '192', '128'], "documents keep the caller's order"

    def test_uniform_priors_by_default(self):
        spec = ProblemSpec.create(3, 2, [9, 9])
        assert spec.priors == (Fraction(1, 2), Fraction(1, 2))

    @pytest.mark.parametrize("servers,collusion,lengths,priors", [
        (3, 3, [9, 9], None),
        (3, 0, [9, 9], None),
        (1, 1, [9], None),
        (3, 2, [9, 0], None),
        (3, 2, [], None),
        (3, 2, [9, 9], [Fraction(1, 2), Fraction(1, 3)]),
        (3, 2, [9, 9], [Fraction(1), Fraction(0)]),
        (3, 2, [9, 9], [Fraction(1)]),
    ])
    def test_invalid_instances(self, servers, collusion, lengths, priors):
        with pytest.raises(SpecValidationError):
            ProblemSpec.create(servers, collusion, lengths, priors)


class TestCapacity:

    def test_two_message_value(self, two_message_spec):
        value = capacity(two_message_spec)
        assert value == Fraction(991, 1020)
        assert abs(float(value) - 0.9716) < 5e-5

    def test_single_message_is_one(self, single_message_spec):
        assert capacity(single_message_spec) == 1

    def test_three_messages_denominator(self, three_messages):
        assert download_denominator(three_messages) == 324
        assert capacity(three_messages) == three_messages.expected_length / 324
        assert capacity(three_messages) == Fraction(112, 243)

    def test_equal_lengths_reduce_to_tpir(self):
        spec = ProblemSpec.create(5, 2, [40, 40, 40])
        assert capacity(spec) == tpir_capacity(5, 2, 3)

    def test_non_increasing_in_collusion(self):
        rng = np.random.default_rng(4)
        length_sets = [[50, 30, 10]] + [rng.integers(1, 100, size=int(rng.integers(1, 5))).tolist() for _ in range(10)]
        for lengths in length_sets:
            for servers in range(2, 9):
                values = [capacity(ProblemSpec.create(servers, collusion, lengths)) for collusion in range(1, servers)]
                assert all(a >= b for a, b in zip(values, values[1:])), f"N={servers} L={lengths}: {values}"

    def test_colluding_capacity_is_non_colluding_with_fewer_servers(self, three_messages, four_messages):
        for spec in (three_messages, four_messages):
            assert capacity(spec) == sem_pir_capacity(spec, Fraction(spec.N, spec.T))


class TestVMatrix:

    def test_single_message(self):
        V, V_inv = build_v_matrix(ProblemSpec.create(5, 2, [10]))
        assert V == [[5]]
        assert V_inv == [[Fraction(1, 5)]]

    def test_three_messages_inverse_first_row(self, three_messages):
        _, V_inv = build_v_matrix(three_messages)
        assert V_inv[0] == [Fraction(1, 4), Fraction(-1, 16), Fraction(-3, 64)]

    @pytest.mark.parametrize("servers,collusion,messages", [(4, 3, 3), (8, 2, 4), (3, 1, 2), (7, 4, 4)])
    def test_inverse_is_exact(self, servers, collusion, messages):
        V, V_inv = build_v_matrix(ProblemSpec.create(servers, collusion, [1] * messages))
        for i in range(messages):
            for j in range(messages):
                entry = sum(V[i][m] * V_inv[m][j] for m in range(messages))
                assert entry == (1 if i == j else 0), f"(V V^-1)[{i}][{j}] = {entry}"


class TestComputePlan:

    def test_three_messages(self, three_messages):
        plan = compute_plan(three_messages)
        assert plan.alpha == 1
        assert plan.nu == (37, 21, 9)
        assert plan.D == 324
        assert plan.U == (192, 128, 64)
        assert plan.U_of_theta == (192, 128, 64)

    def test_four_messages(self, four_messages):
        plan = compute_plan(four_messages)
        assert plan.alpha == 8
        assert plan.nu == (85, 21, 5, 1)
        assert plan.U == (2048, 1536, 1024, 512)
        assert plan.D == 2504
        assert plan.U_of_theta[1] == 1536 == 32 * 21 + 6 * (16 * 5 + 64 * 1)
        assert plan.total_downloads == 8 * 2504

    def test_small_instance(self, small_spec):
        plan = compute_plan(small_spec)
        assert (plan.alpha, plan.nu, plan.D, plan.U) == (1, (2, 2), 15, (9, 9))

    def test_single_message(self, single_message_spec):
        plan = compute_plan(single_message_spec)
        assert plan.alpha * plan.D == 6
        assert plan.rate() == 1

    def test_infeasible_lengths_name_the_lift(self):
        spec = ProblemSpec.create(3, 2, [9, 3])
        with pytest.raises(InfeasiblePlanError) as info:
            compute_plan(spec)
        assert info.value.lift == 3


class TestFeasibilityLift:

    def test_already_integral(self, small_spec):
        lifted, lift = feasibility_lift(small_spec)
        assert lift == 1
        assert lifted.lengths == (9, 9)

    def test_lift_by_three(self):
        lifted, lift = feasibility_lift(ProblemSpec.create(3, 2, [9, 3]))
        assert lift == 3
        assert lifted.lengths == (27, 9)
        plan = compute_plan(lifted)
        assert plan.alpha * plan.D == download_denominator(lifted)

    def test_lengths_multiple_of_n_to_the_k(self):
        spec = ProblemSpec.create(4, 3, [5 * 64, 3 * 64, 2 * 64])
        assert feasibility_lift(spec)[1] == 1

    def test_random_lengths_always_lift(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            servers = int(rng.integers(2, 9))
            collusion = int(rng.integers(1, servers))
            lengths = rng.integers(1, 60, size=int(rng.integers(1, 5))).tolist()
            lifted, lift = feasibility_lift(ProblemSpec.create(servers, collusion, lengths))
            plan = compute_plan(lifted)
            assert plan.alpha * plan.D == download_denominator(lifted)
            assert lifted.lengths == tuple(lift * length for length in sorted(lengths, reverse=True))


class TestConverseBound:

    def test_three_messages(self, three_messages):
        assert converse_bound(three_messages) == 324

    def test_single_message(self, single_message_spec):
        assert converse_bound(single_message_spec) == 6

    def test_three_messages_two_servers(self):
        assert converse_bound(ProblemSpec.create(2, 1, [5, 3, 1])) == Fraction(27, 4)

    def test_agrees_with_capacity_on_grid(self):
        for spec in feasible_specs(60, seed=9, budget=10**6):
            ratio = Fraction(spec.T, spec.N)
            brute = max(
                sum(ratio ** j * length for j, length in enumerate(ordering))
                for ordering in permutations(spec.lengths)
            )
            assert converse_bound(spec) == brute
            assert capacity(spec) == spec.expected_length / converse_bound(spec)
            plan = compute_plan(spec)
            assert plan.alpha * plan.D == converse_bound(spec)


class TestComparisons:

    def test_equal_lengths_tie_with_tpir(self):
        entry = compare_tpir(ProblemSpec.create(4, 2, [12, 12, 12]))
        assert entry.condition_values == (0,)
        assert entry.holds
        assert entry.verdict == 'equal'

    def test_two_message_beats_pir(self, two_message_spec):
        entry = compare_pir(two_message_spec)
        assert entry.condition_values == (Fraction(701, 10),)
        assert entry.holds
        assert entry.verdict == 'higher'

    def test_two_message_beats_pir_zero_padding(self, two_message_spec):
        entry = compare_zero_padding(two_message_spec, 1)
        assert entry.name == 'zero_padding_pir'
        assert entry.condition_values == (800,)
        assert entry.holds
        assert entry.verdict == 'higher'

    def test_tpir_zero_padding_never_wins(self, three_messages, four_messages, two_message_spec):
        for spec in (three_messages, four_messages, two_message_spec):
            entry = compare_zero_padding(spec, spec.T)
            assert entry.holds
            assert entry.sem_rate >= entry.other_rate

    def test_padding_level_is_restricted(self, three_messages):
        with pytest.raises(SpecValidationError):
            compare_zero_padding(three_messages, 2)

    def test_three_messages_conditions_by_direct_evaluation(self, three_messages):
        mean = Fraction(448, 3)
        tpir = compare_tpir(three_messages)
        assert tpir.condition_values == (
            (192 - mean) + (128 - mean) * Fraction(3, 4) + (64 - mean) * Fraction(9, 16),
        )
        pir = compare_pir(three_messages)
        assert pir.condition_values == ((mean - 192) + (mean - 3 * 128) / 4 + (mean - 9 * 64) / 16,)


class TestRateReport:

    def test_three_messages_rates(self, three_messages):
        report = rate_report(three_messages)
        assert report.rate == report.capacity == Fraction(112, 243)
        assert report.per_theta_rates == (Fraction(192, 324), Fraction(128, 324), Fraction(64, 324))
        assert sum(p * r for p, r in zip(three_messages.priors, report.per_theta_rates)) == report.capacity
        assert [entry.name for entry in report.comparisons] == ['tpir', 'zero_padding_tpir', 'pir', 'zero_padding_pir']

    def test_lift_is_reported(self):
        report = rate_report(ProblemSpec.create(3, 2, [9, 3]))
        assert report.lift == 3
        assert report.rate == report.capacity

    def test_without_lift_infeasible_raises(self):
        with pytest.raises(InfeasiblePlanError):
            rate_report(ProblemSpec.create(3, 2, [9, 3]), lift=False)

    def test_field_is_carried(self):
        spec = ProblemSpec.create(3, 2, [9, 9], field=FieldSpec(19))
        assert spec.to_dict()['field'] == {'modulus': '19'}
