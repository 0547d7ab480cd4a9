"""Workload generation: budgets, type splits, determinism."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from agentmesh.workload import (WorkloadSpec, draw_budgets, generate_workload,
                                pareto_sample, split_budget, user_facing_types)

SERVERS = {t: ["srv-1"] for t in user_facing_types()}


def spec(**kw) -> WorkloadSpec:
    defaults = dict(seed=7, n_users=17, total_query_cap=200)
    defaults.update(kw)
    return WorkloadSpec(**defaults)


class TestParetoSample:
    def test_respects_minimum(self):
        rng = random.Random(1)
        assert all(pareto_sample(rng, 0.5) >= 1.0 for _ in range(1000))

    def test_heavy_tail_for_small_shape(self):
        rng = random.Random(2)
        draws = [pareto_sample(rng, 0.5) for _ in range(2000)]
        assert max(draws) > 100          # shape 0.5 has no finite mean


class TestBudgets:
    @pytest.mark.parametrize("seed", range(12))
    def test_every_user_gets_at_least_one(self, seed):
        budgets = draw_budgets(random.Random(seed), spec(seed=seed))
        assert min(budgets) >= 1

    @pytest.mark.parametrize("seed", range(12))
    def test_budgets_sum_to_cap(self, seed):
        budgets = draw_budgets(random.Random(seed), spec(seed=seed))
        assert sum(budgets) == 200

    def test_cap_below_users_rejected(self):
        with pytest.raises(ValueError):
            spec(n_users=20, total_query_cap=10)


class TestSplit:
    def test_budget_three_or_more_gets_three_types(self):
        rng = random.Random(3)
        parts = split_budget(rng, 20, sorted(user_facing_types()), spec())
        assert len(parts) == 3
        assert all(count >= 1 for _, count in parts)
        assert sum(count for _, count in parts) == 20

    def test_budget_below_three_gets_fewer_types(self):
        rng = random.Random(4)
        assert len(split_budget(rng, 1, sorted(user_facing_types()), spec())) == 1
        rng = random.Random(4)
        assert len(split_budget(rng, 2, sorted(user_facing_types()), spec())) == 2

    @pytest.mark.parametrize("budget", [3, 4, 7, 50, 173])
    def test_split_conserves_budget(self, budget):
        rng = random.Random(budget)
        parts = split_budget(rng, budget, sorted(user_facing_types()), spec())
        assert sum(count for _, count in parts) == budget
        assert all(count >= 1 for _, count in parts)


class TestGenerateWorkload:
    def test_single_user_single_query(self):
        tasks = generate_workload(spec(n_users=1, total_query_cap=1), SERVERS)
        assert len(tasks) == 1
        assert tasks[0].user_id == "user-01"

    def test_cap_is_exact(self):
        assert len(generate_workload(spec(), SERVERS)) == 200

    def test_same_seed_identical_lists(self):
        first = generate_workload(spec(), SERVERS)
        second = generate_workload(spec(), SERVERS)
        assert first == second

    def test_different_seeds_differ(self):
        assert (generate_workload(spec(seed=1), SERVERS)
                != generate_workload(spec(seed=2), SERVERS))

    def test_user_type_structure(self):
        tasks = generate_workload(spec(), SERVERS)
        by_user: dict[str, dict[str, int]] = {}
        for task in tasks:
            by_user.setdefault(task.user_id, {}).setdefault(task.task_type, 0)
            by_user[task.user_id][task.task_type] += 1
        assert len(by_user) == 17
        for user, types in by_user.items():
            budget = sum(types.values())
            if budget >= 3:
                assert len(types) == 3, user
            assert all(count >= 1 for count in types.values())

    def test_payloads_match_schema(self):
        tasks = generate_workload(spec(), SERVERS)
        from agentmesh import catalog
        for task in tasks[:50]:
            required = catalog.CATALOG[task.task_type].input_schema["required"]
            assert set(task.payload) == set(required)

    def test_delivery_not_user_facing(self):
        tasks = generate_workload(spec(), SERVERS)
        assert all(task.task_type != "delivery" for task in tasks)

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError, match="unknown task type"):
            generate_workload(spec(task_types=("teleportation",)),
                              {"teleportation": ["srv-1"]})

    def test_unhosted_type_rejected(self):
        with pytest.raises(ValueError, match="no server hosts"):
            generate_workload(spec(task_types=("weather",)), {})


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), n_users=st.integers(1, 40))
def test_workload_invariants_hold_for_any_seed(seed, n_users):
    cap = max(n_users, 60)
    tasks = generate_workload(spec(seed=seed, n_users=n_users, total_query_cap=cap), SERVERS)
    assert len(tasks) == cap
    per_user: dict[str, int] = {}
    for task in tasks:
        per_user[task.user_id] = per_user.get(task.user_id, 0) + 1
    assert len(per_user) == n_users
    assert min(per_user.values()) >= 1
