import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import cost_instances, ordered_types, populations, two_player
from pcfl.cofl import cofl_best_response, equilibrium_property, f_o, solve_cofl
from pcfl.model import InvalidParameterError, Role, StrategyProfile, instance_from_costs, utilities
from pcfl.oracle import best_response_dynamics, verify_ne
from pcfl.popgen import PopulationSpec, generate


def linear_scan(inst):
    """Equilibrium by walking the ranks one at a time (no bisection)."""
    b = np.zeros(inst.k)
    filled = 0.0
    for pos in range(inst.k):
        want = inst.beta[pos] - filled
        if want <= 0:
            break
        b[pos] = min(want, inst.b_max[pos])
        filled += b[pos]
        if b[pos] < inst.b_max[pos]:
            break
    return b


class TestBestResponse:
    def test_interior(self):
        assert cofl_best_response(0, 0.0, two_player()) == pytest.approx(44.997, abs=1e-3)

    def test_free_ride(self):
        assert cofl_best_response(1, 45.0, two_player()) == 0.0

    def test_upper_clamp(self):
        inst = instance_from_costs([103.41], [1.0], [30.0])
        assert cofl_best_response(0, 0.0, inst) == 30.0

    def test_negative_others(self):
        with pytest.raises(InvalidParameterError):
            cofl_best_response(0, -1.0, two_player())


class TestFo:
    def test_first_rank(self):
        inst = two_player()
        assert f_o(1, 0.0, inst) == 0.0
        assert f_o(1, 100.0, inst) == 100.0

    def test_definition(self):
        inst = instance_from_costs([50.0, 40.0, 30.0], [1, 1, 1], [10.0, 20.0, 30.0])
        assert f_o(3, 7.0, inst) == inst.b_max[0] + inst.b_max[1] + 7.0

    def test_range_checks(self):
        with pytest.raises(InvalidParameterError):
            f_o(3, 1.0, two_player())
        with pytest.raises(InvalidParameterError):
            f_o(1, 101.0, two_player())


class TestSolve:
    def test_two_player(self):
        sol = solve_cofl(two_player())
        b = sol.result.profile.batchsizes
        assert b[0] == pytest.approx(44.99701831, abs=1e-6) and b[1] == 0.0
        assert sol.result.critical_index == 1
        assert equilibrium_property(sol, two_player()) == 2
        dyn = best_response_dynamics(two_player(), StrategyProfile([0.0, 0.0]))
        assert dyn.converged
        assert np.allclose(dyn.profile.batchsizes, b, atol=1e-8)

    def test_single_participant_capped(self):
        inst = instance_from_costs([103.41], [1.0], [30.0])
        sol = solve_cofl(inst)
        assert sol.result.profile.batchsizes[0] == 30.0
        assert sol.result.type_labels == (Role.TYPE1,)
        assert equilibrium_property(sol, inst) == 1

    def test_nobody_overshoots(self):
        inst = instance_from_costs([100.0, 90.0], [1.0, 1.0], [5.0, 5.0])
        sol = solve_cofl(inst)
        assert np.array_equal(sol.result.profile.batchsizes, [5.0, 5.0])
        assert sol.result.critical_index == int(inst.ids[-1])

    def test_empty(self):
        with pytest.raises(InvalidParameterError):
            solve_cofl(instance_from_costs([], [], []))

    def test_trace(self):
        sol = solve_cofl(generate(PopulationSpec(40, 0.5, seed=3)), trace=True)
        assert sol.trace and all(len(step) == 4 for step in sol.trace)
        assert len(sol.trace) <= math.ceil(math.log2(40)) + 1

    def test_half_and_half_group(self):
        # ten strong and ten weak participants: a handful contribute, all from the top
        for seed in range(10):
            inst = generate(PopulationSpec(20, 0.5, seed=seed))
            b = solve_cofl(inst).result.profile.batchsizes
            n = int((b > 0).sum())
            assert 1 <= n <= 6
            assert np.all(b[:n] > 0) and np.all(b[n:] == 0)

    @given(inst=cost_instances(max_k=12))
    def test_matches_linear_scan(self, inst):
        b = solve_cofl(inst).result.profile.batchsizes
        assert np.allclose(b, linear_scan(inst), rtol=1e-12, atol=1e-12)

    @given(inst=populations(max_k=40))
    def test_no_profitable_deviation(self, inst):
        sol = solve_cofl(inst)
        assert verify_ne(inst, sol.result.profile).passed

    @given(inst=cost_instances(max_k=12))
    def test_no_profitable_deviation_costs(self, inst):
        assert verify_ne(inst, solve_cofl(inst).result.profile).passed

    @given(inst=cost_instances(max_k=12))
    def test_type_structure(self, inst):
        sol = solve_cofl(inst)
        assert ordered_types(sol.result.type_labels)
        b = sol.result.profile.batchsizes
        for lab, x, cap in zip(sol.result.type_labels, b, inst.b_max):
            if lab is Role.TYPE1:
                assert x == cap
            if lab is Role.TYPE3:
                assert x == 0

    @given(inst=cost_instances(max_k=12))
    def test_exactly_one_property(self, inst):
        assert equilibrium_property(solve_cofl(inst), inst) in (1, 2)

    @given(inst=populations(max_k=30), seed=st.integers(0, 2**31))
    def test_unique_under_dynamics(self, inst, seed):
        target = solve_cofl(inst).result.global_batchsize
        rng = np.random.default_rng(seed)
        for _ in range(20):
            start = StrategyProfile(rng.uniform(0, 1, inst.k) * inst.b_max)
            dyn = best_response_dynamics(inst, start)
            assert dyn.converged
            assert dyn.profile.global_batchsize == pytest.approx(target, rel=1e-4)

    @given(inst=populations(max_k=40))
    def test_free_riders_gain(self, inst):
        sol = solve_cofl(inst)
        u = utilities(sol.result.profile, inst)
        for lab, x, val, th in zip(sol.result.type_labels, sol.result.profile.batchsizes, u, inst.theta):
            if lab is Role.TYPE3 and th > 0:
                assert x == 0 and val > 0

    @given(inst=populations(max_k=60))
    def test_search_predicate_monotone(self, inst):
        prefix = np.cumsum(inst.b_max)
        flags = (prefix > inst.beta).astype(int)
        assert np.all(np.diff(flags) >= 0)

    @given(inst=cost_instances(max_k=10))
    def test_total_utility_over_contributors(self, inst):
        res = solve_cofl(inst).result
        u = utilities(res.profile, inst)
        mask = res.profile.batchsizes > 0
        assert res.total_utility == pytest.approx(float(u[mask].sum()), rel=1e-9, abs=1e-12)
