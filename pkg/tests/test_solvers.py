"""
求解器模块测试

测试 ℓ1 基线、凹二次规划分支定界、顶点枚举校验器与支撑集精化。
"""

import itertools

import numpy as np
import pytest

from src.exceptions import DimensionTooLarge, InvalidDimension, RankDeficient
from src.models.conditions import check_prop1
from src.models.feasible import Polytope, build_polytope, is_member
from src.models.instance import (
    BoundMode,
    MagnitudePrior,
    Observation,
    QuantSpec,
    generate,
    quantize,
    quantize_array,
)
from src.models.solvers import (
    BnbConfig,
    BranchRule,
    SolveStatus,
    chord_coefficients,
    chord_value,
    estimate_support,
    objective_cqp,
    oracle_vertex_min,
    refine_on_support,
    solve_cqp,
    solve_l1,
)


def _random_case(rng, seed):
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, 4))
    k = int(rng.integers(0, min(n, 3) + 1))
    alpha = float(rng.uniform(0.6, 1.0))
    beta = alpha if seed % 3 == 0 else alpha + float(rng.uniform(0.0, 0.4))
    prior = MagnitudePrior(alpha, beta)
    inst = generate(n, m, k, prior, seed=seed)
    levels = int(rng.integers(5, 400))
    mode = BoundMode.FULL_STEP if seed % 2 else BoundMode.HALF_STEP
    obs = quantize(
        inst,
        QuantSpec.covering(inst.A, levels, mode),
        QuantSpec.covering(inst.y, levels, mode),
        prior,
    )
    return inst, obs


def _pinned_polytope():
    """x_0 = 0.5 固定、x_1 自由的 [0,1]^2 多面体，最优值 0.25"""
    return Polytope(C=[[1.0, 0.0], [-1.0, 0.0]], g=[0.5, -0.5], lower=[0.0, 0.0], upper=[1.0, 1.0])


class TestMotivatingExample:
    """二维示例"""

    def setup_method(self):
        self.obs = Observation(
            QA=[[0.2, 1.2]], Qy=[0.2], deltaA=0.1, deltaY=0.1, prior=MagnitudePrior(1.0, 1.0)
        )

    def test_l1_solution(self):
        sol = solve_l1(build_polytope(self.obs, np.inf))
        assert sol.status is SolveStatus.GLOBAL_OPTIMAL
        assert sol.x == pytest.approx([0.0, 1.0 / 13.0], abs=1e-4)
        assert estimate_support(sol.x, 1.0).tolist() == [1]

    def test_cqp_solution(self):
        sol = solve_cqp(build_polytope(self.obs, 1.0), 1.0)
        assert sol.status is SolveStatus.GLOBAL_OPTIMAL
        assert sol.x == pytest.approx([1.0, 0.0], abs=1e-8)
        assert sol.objective == pytest.approx(0.0, abs=1e-8)
        assert sol.gap == pytest.approx(0.0, abs=1e-8)

    def test_oracle_agrees(self):
        sol = oracle_vertex_min(build_polytope(self.obs, 1.0), 1.0)
        assert sol.x == pytest.approx([1.0, 0.0], abs=1e-9)
        assert sol.nodes > 0

    def test_solution_dict(self):
        doc = solve_cqp(build_polytope(self.obs, 1.0), 1.0).to_dict()
        assert set(doc) == {"x", "objective", "status", "nodes", "wallTime"}
        assert doc["status"] == "GlobalOptimal"


class TestL1Baseline:
    """ℓ1 基线"""

    def test_zero_output_gives_zero(self):
        obs = Observation(
            QA=[[0.5, -1.0, 0.3], [1.1, 0.2, -0.7]],
            Qy=[0.0, 0.0],
            deltaA=0.05,
            deltaY=0.05,
            prior=MagnitudePrior(1.0, 1.0),
        )
        sol = solve_l1(build_polytope(obs, np.inf))
        assert sol.status is SolveStatus.GLOBAL_OPTIMAL
        assert sol.x.tolist() == pytest.approx([0.0, 0.0, 0.0])
        assert sol.objective == pytest.approx(0.0)

    def test_no_sampled_point_beats_optimum(self):
        rng = np.random.default_rng(31)
        for seed in range(20):
            inst, obs = _random_case(rng, seed)
            poly = build_polytope(obs, np.inf)
            sol = solve_l1(poly)
            assert sol.status is SolveStatus.GLOBAL_OPTIMAL
            assert is_member(sol.x, poly, tol=1e-6)

            # 在真实解附近与盒内均匀撒点，真实解本身必然可行
            near = np.clip(inst.xTrue + rng.normal(0.0, 0.05, size=(5000, inst.n)), 0.0, None)
            wide = rng.uniform(0.0, 2.0 * obs.prior.beta, size=(5000, inst.n))
            samples = np.vstack([inst.xTrue, near, wide])
            feasible = np.all(samples @ poly.C.T <= poly.g + 1e-9, axis=1)
            assert feasible.any()
            assert np.all(samples[feasible].sum(axis=1) >= sol.objective - 1e-9)


class TestChord:
    """割线下估计测试"""

    def test_chord_under_function(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            d = float(rng.uniform(0.5, 2.0))
            lo = rng.uniform(0.0, d, size=100)
            hi = lo + rng.uniform(0.0, d, size=100)
            t = lo + rng.random(100) * (hi - lo)
            phi = d * t - t * t
            assert np.all(chord_value(t, lo, hi, d) <= phi + 1e-12)
            assert np.allclose(chord_value(lo, lo, hi, d), d * lo - lo * lo)
            assert np.allclose(chord_value(hi, lo, hi, d), d * hi - hi * hi)

    def test_coefficients(self):
        slope, intercept = chord_coefficients([0.0, 0.5], [1.0, 1.0], 1.0)
        assert slope.tolist() == [0.0, -0.5]
        assert intercept.tolist() == [0.0, 0.5]


class TestObjective:
    """目标函数性质"""

    def test_floor_and_corners(self):
        rng = np.random.default_rng(1)
        d = 1.3
        for _ in range(1000):
            x = rng.uniform(0.0, d, size=6)
            assert objective_cqp(x, d) >= 0.0
        corner = np.array([0.0, d, d, 0.0])
        assert objective_cqp(corner, d) == 0.0
        assert objective_cqp([0.5 * d], d) == pytest.approx(d * d / 4)


class TestSolveCqp:
    """分支定界测试"""

    def test_infeasible(self):
        obs = Observation(QA=[[0.0]], Qy=[1.0], deltaA=0.0, deltaY=0.1, prior=MagnitudePrior(1.0, 1.0))
        sol = solve_cqp(build_polytope(obs, 1.0), 1.0)
        assert sol.status is SolveStatus.INFEASIBLE
        assert sol.to_dict()["x"] is None
        assert solve_l1(build_polytope(obs, np.inf)).status is SolveStatus.INFEASIBLE

    def test_requires_finite_box(self):
        obs = Observation(QA=[[1.0]], Qy=[1.0], deltaA=0.0, deltaY=0.1, prior=MagnitudePrior(1.0, 1.0))
        with pytest.raises(ValueError):
            solve_cqp(build_polytope(obs, np.inf), 1.0)

    def test_interior_optimum(self):
        sol = solve_cqp(_pinned_polytope(), 1.0)
        assert sol.status is SolveStatus.GLOBAL_OPTIMAL
        assert sol.objective == pytest.approx(0.25, abs=1e-8)
        assert sol.x[0] == pytest.approx(0.5)

    def test_node_budget(self):
        sol = solve_cqp(_pinned_polytope(), 1.0, BnbConfig(max_nodes=1))
        assert sol.status is SolveStatus.FEASIBLE
        assert sol.feasible
        assert sol.lower_bound <= sol.objective
        assert is_member(sol.x, _pinned_polytope())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            BnbConfig(abs_gap=0.0)
        with pytest.raises(ValueError):
            BnbConfig(max_nodes=0)
        assert BnbConfig(branch_rule="LpGap").branch_rule is BranchRule.LP_GAP

    def test_bounds_are_monotone_along_tree(self):
        rng = np.random.default_rng(11)
        for seed in range(20):
            _, obs = _random_case(rng, seed)
            d = obs.prior.d
            sol = solve_cqp(build_polytope(obs, d), d, BnbConfig(keep_trace=True))
            if not sol.feasible:
                continue
            bounds = {node: bound for node, _, bound in sol.trace}
            for node, parent, bound in sol.trace:
                if parent >= 0:
                    assert bound >= bounds[parent] - 1e-9
            assert sol.lower_bound <= sol.objective + 1e-12

    def test_branch_rules_agree(self):
        rng = np.random.default_rng(12)
        for seed in range(15):
            _, obs = _random_case(rng, seed)
            d = obs.prior.d
            poly = build_polytope(obs, d)
            widest = solve_cqp(poly, d)
            lp_gap = solve_cqp(poly, d, BnbConfig(branch_rule=BranchRule.LP_GAP))
            assert widest.status is lp_gap.status
            if widest.feasible:
                assert widest.objective == pytest.approx(lp_gap.objective, abs=1e-6)


class TestOracle:
    """顶点枚举校验器测试"""

    def test_dimension_limit(self):
        with pytest.raises(DimensionTooLarge):
            oracle_vertex_min(Polytope.box(13, 1.0), 1.0)

    def test_box_optimum_is_zero(self):
        sol = oracle_vertex_min(Polytope.box(3, 1.0), 1.0)
        assert sol.objective == 0.0

    def _agreement(self, cases):
        rng = np.random.default_rng(2023)
        for seed in range(cases):
            inst, obs = _random_case(rng, seed)
            d = obs.prior.d
            poly = build_polytope(obs, d)
            exact = oracle_vertex_min(poly, d)
            sol = solve_cqp(poly, d)
            assert sol.feasible == exact.feasible, f"seed {seed}"
            if not exact.feasible:
                continue
            assert sol.objective == pytest.approx(exact.objective, abs=1e-6), f"seed {seed}"
            if inst.prior.alpha < inst.prior.beta:
                continue
            # 两个可行角点之差受总误差界控制，P1 在该界下成立时角点唯一
            total = obs.deltaY + obs.deltaA * obs.n * d
            if check_prop1(obs.QA, d, total).margin > 1e-6:
                assert np.array_equal(estimate_support(sol.x, d), inst.support())
                assert np.array_equal(estimate_support(exact.x, d), inst.support())

    def test_agrees_with_branch_and_bound(self):
        self._agreement(40)

    @pytest.mark.slow
    def test_agrees_with_branch_and_bound_full(self):
        self._agreement(200)


class TestUniqueness:
    """条件 P1 成立时角点解唯一"""

    def test_unique_corner(self):
        rng = np.random.default_rng(99)
        prior = MagnitudePrior(1.0, 1.0)
        checked = 0
        for seed in range(400):
            if checked == 100:
                break
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, 4))
            k = int(rng.integers(0, n + 1))
            inst = generate(n, m, k, prior, seed=seed)
            specY = QuantSpec.covering(inst.y, int(rng.integers(50, 5000)))
            report = check_prop1(inst.A, prior.d, specY.bound)
            if report.margin <= 1e-6:
                continue
            # 只量化输出：矩阵精确已知
            obs = Observation(
                QA=inst.A, Qy=quantize_array(inst.y, specY), deltaA=0.0, deltaY=specY.bound, prior=prior
            )
            poly = build_polytope(obs, prior.d)
            feasible = [
                np.array(c) for c in itertools.product([0.0, 1.0], repeat=n) if is_member(np.array(c), poly)
            ]
            assert len(feasible) == 1
            assert np.array_equal(feasible[0], inst.xTrue)
            checked += 1
        assert checked >= 10


class TestRefineOnSupport:
    """支撑集上的最小二乘精化"""

    def setup_method(self):
        self.prior = MagnitudePrior(1.0, 1.0)

    def test_recovers_exact_values(self):
        A = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]])
        obs = Observation(QA=A, Qy=A @ [0.0, 1.5, 0.5], deltaA=0.0, deltaY=0.0, prior=self.prior)
        x = refine_on_support(obs, [1, 2])
        assert x == pytest.approx([0.0, 1.5, 0.5])
        assert refine_on_support(obs, []).tolist() == [0.0, 0.0, 0.0]

    def test_errors(self):
        A = np.array([[1.0, 1.0, 2.0]])
        obs = Observation(QA=A, Qy=[1.0], deltaA=0.0, deltaY=0.0, prior=self.prior)
        with pytest.raises(InvalidDimension):
            refine_on_support(obs, [0, 1])
        obs = Observation(QA=[[1.0, 1.0], [1.0, 1.0]], Qy=[1.0, 1.0], deltaA=0.0, deltaY=0.0, prior=self.prior)
        with pytest.raises(RankDeficient):
            refine_on_support(obs, [0, 1])
