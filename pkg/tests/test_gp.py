import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evgp.gp import (GpError, Monomial, Posynomial, SolverError, SolverOptions, Variable, build_model,
                     dump_model, eq, kkt_residuals, leq, log_transform, monomial_arith, sensitivities,
                     solve, solve_model, write_trace_csv)
from evgp.gp.algebra import VarSpec
from evgp.gp.solver import GpSolution, INFEASIBLE, OPTIMAL

x, y, z = Variable("x"), Variable("y"), Variable("z")


# ---------------------------------------------------------------- algebra


class TestAlgebra:
    def test_mul(self):
        m = monomial_arith("mul", 2 * x, 3 * x ** 2)
        assert m == Monomial(6.0, (("x", 3.0),))

    def test_pow(self):
        assert monomial_arith("pow", 4 * x ** 2, 0.5) == Monomial(2.0, (("x", 1.0),))

    def test_div(self):
        assert monomial_arith("div", 6 * x ** 3 * y, 2 * x * y) == Monomial(3.0, (("x", 2.0),))

    def test_unknown_op(self):
        with pytest.raises(GpError):
            monomial_arith("add", x, y)

    def test_smallest_model(self):
        m = build_model([("x", 0.1, 10)], x, [leq(x ** -1, 1)])
        assert m.var_names == ("x",) and m.size()["constraints"] == 3

    def test_posynomial_equality_rejected(self):
        with pytest.raises(GpError, match="posynomial equality"):
            eq(x + y, 1, "sum")

    def test_negative_coefficient_rejected(self):
        with pytest.raises(GpError):
            Monomial(-2.0, (("x", 1.0),))

    def test_undeclared_variable(self):
        with pytest.raises(GpError, match="undeclared"):
            build_model([("x", 1, 2)], x, [leq(y, 1)])

    def test_duplicate_label(self):
        with pytest.raises(GpError, match="duplicate"):
            build_model([("x", 1, 2)], x, [leq(x, 2, "a"), leq(x, 3, "a")])

    def test_bounds_validated(self):
        with pytest.raises(GpError):
            VarSpec("x", 0.0)
        with pytest.raises(GpError):
            VarSpec("x", 2.0, 1.0)

    def test_like_terms_merge(self):
        p = x + y + 2 * x
        assert len(p.terms) == 2
        assert p.evaluate({"x": 1, "y": 1}) == 4

    def test_dump_stable(self):
        m = build_model([("x", 0.1, 10), ("y", 1)], x + y, [leq(x ** -1 * y ** -1, 1, "prod")])
        text = dump_model(m)
        assert "[prod] x^-1*y^-1 <= 1" in text
        assert "1 <= y <= inf" in text
        assert text == dump_model(m)

    def test_transform_monomial(self):
        p = log_transform(build_model([("x", 1, 2)], 5 * x ** 2, [leq(x, 2)]))
        assert p.g[0] == pytest.approx(math.log(5))
        assert p.F[0].toarray().ravel().tolist() == [2.0]

    def test_transform_two_term(self):
        p = log_transform(build_model([("x", 0.1, 10)], x, [leq(x + x ** -1, 2)]))
        assert int(np.sum(p.owner == 1)) == 2
        # x = 1 makes the normalized posynomial exactly 1
        assert p.functions(np.array([0.0]))[1] == pytest.approx(0.0, abs=1e-15)

    def test_powertrain_dimension(self, wltc_loads, guards):
        from evgp.powertrain import MotorParams, Topology, build_design_model
        from evgp.cycles import VehicleParams
        m = build_design_model(wltc_loads + guards, VehicleParams(), MotorParams(), Topology.single())
        n = len(wltc_loads) + 2
        assert log_transform(m).n == 8 * n + 5


pos = st.floats(0.1, 10)
exp = st.floats(-3, 3)


@st.composite
def posynomials(draw):
    k = draw(st.integers(1, 4))
    terms = []
    for _ in range(k):
        terms.append(Monomial(draw(pos), (("x", draw(exp)), ("y", draw(exp)), ("z", draw(exp)))))
    return terms


class TestTransformProperties:
    @given(posynomials(), st.lists(st.floats(-2, 2), min_size=3, max_size=3),
           st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.01, 0.99))
    def test_convexity(self, terms, y1, y2, lam):
        m = build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3), ("z", 1e-3, 1e3)], x, [leq(Posynomial(tuple(terms)), 1)])
        p = log_transform(m)
        a, b = np.array(y1), np.array(y2)
        fa, fb = p.functions(a)[1], p.functions(b)[1]
        fm = p.functions(lam * a + (1 - lam) * b)[1]
        assert fm <= lam * fa + (1 - lam) * fb + 1e-10

    @given(pos, exp, exp, pos, pos)
    def test_roundtrip(self, c, ax, ay, vx, vy):
        mono = Monomial(c, (("x", ax), ("y", ay)))
        p = log_transform(build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3)], mono, []))
        val = math.exp(p.objective(np.log([vx, vy])))
        assert val == pytest.approx(mono.evaluate({"x": vx, "y": vy}), rel=1e-12)

    @given(posynomials(), st.randoms())
    def test_canonical_order(self, terms, rnd):
        shuffled = list(terms)
        rnd.shuffle(shuffled)
        spec = [("x", 1e-3, 1e3), ("y", 1e-3, 1e3), ("z", 1e-3, 1e3)]
        p1 = log_transform(build_model(spec, x, [leq(Posynomial(tuple(terms)), 1, "c")]))
        p2 = log_transform(build_model(spec, x, [leq(Posynomial(tuple(shuffled)), 1, "c")]))
        assert (p1.F != p2.F).nnz == 0 and np.array_equal(p1.g, p2.g)


# ---------------------------------------------------------------- solver


def check_optimal(sol: GpSolution, tol=1e-8):
    assert sol.status == OPTIMAL
    k = sol.kkt
    assert k.stationarity <= tol and k.primal_feasibility <= tol and k.complementarity <= tol
    assert k.dual_feasibility >= -tol and abs(k.duality_gap) <= tol


class TestSolver:
    def test_lower_bound_constraint(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [leq(3 * x ** -1, 1, "floor")]))
        check_optimal(sol)
        assert sol["x"] == pytest.approx(3.0, rel=1e-7)
        assert sol.duals["floor"] == pytest.approx(1.0, rel=1e-6)

    def test_am_gm(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3)], x + y,
                                      [leq(x ** -1 * y ** -1, 1, "prod")]))
        check_optimal(sol)
        assert sol["x"] == pytest.approx(1, rel=1e-6) and sol["y"] == pytest.approx(1, rel=1e-6)
        assert sol.objective == pytest.approx(2, rel=1e-8)

    def test_upper_bound_active(self):
        sol = solve_model(build_model([("x", 1, 18)], x ** -1, []))
        check_optimal(sol)
        assert sol["x"] == pytest.approx(18, rel=1e-7)
        assert sol.duals["x.upper"] == pytest.approx(1, rel=1e-6)

    @pytest.mark.parametrize("C", [0.5, 3.0, 250.0])
    def test_sensitivity_of_C(self, C):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [leq(C * x ** -1, 1, "c")]))
        assert sensitivities(sol)["c"] == pytest.approx(1.0, rel=1e-6)

    def test_inactive_sensitivity_zero(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [leq(3 * x ** -1, 1, "c"), leq(x, 100, "slack")]))
        assert abs(sensitivities(sol)["slack"]) <= 1e-8

    def test_equality(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3)], x + y,
                                      [eq(x * y, 4, "prod")]))
        check_optimal(sol)
        assert sol["x"] == pytest.approx(2, rel=1e-6)
        assert sol.objective == pytest.approx(4, rel=1e-8)

    def test_infeasible(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [leq(x, 1, "a"), leq(2 * x ** -1, 1, "b")]))
        assert sol.status == INFEASIBLE and sol.certificate > 0

    def test_inconsistent_equalities(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [eq(x, 2, "a"), eq(x, 3, "b")]))
        assert sol.status == INFEASIBLE

    def test_objective_scaling(self):
        spec = [("x", 1e-3, 1e3), ("y", 1e-3, 1e3)]
        cons = [leq(x ** -1 * y ** -2, 1, "c"), leq(x, 5, "d")]
        a = solve_model(build_model(spec, x + 2 * y, cons))
        b = solve_model(build_model(spec, 7 * x + 14 * y, cons))
        assert b.log_objective - a.log_objective == pytest.approx(math.log(7), abs=1e-8)
        assert b["x"] == pytest.approx(a["x"], rel=1e-7) and b["y"] == pytest.approx(a["y"], rel=1e-7)

    def test_deterministic(self):
        m = build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3)], x + y, [leq(x ** -1 * y ** -1, 1)])
        a, b = solve_model(m), solve_model(m)
        assert a.primal == b.primal and a.trace == b.trace

    def test_perturbed_primal_not_stationary(self):
        m = build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3)], x + y, [leq(x ** -1 * y ** -1, 1, "prod")])
        p = log_transform(m)
        sol = solve(p)
        bad = GpSolution(sol.status, {**sol.primal, "x": sol.primal["x"] * 1.01}, sol.log_objective,
                         sol.duals, sol.iterations)
        assert kkt_residuals(p, bad).stationarity > 1e-8

    def test_hand_kkt_point(self):
        p = log_transform(build_model([("x", 1e-3, 1e3)], x, [leq(3 * x ** -1, 1, "c")]))
        sol = GpSolution(OPTIMAL, {"x": 3.0}, math.log(3), {"c": 1.0, "x.lower": 0.0, "x.upper": 0.0}, 0)
        r = kkt_residuals(p, sol)
        assert r.max_violation() <= 1e-12 and abs(r.duality_gap) <= 1e-12

    def test_warm_start(self):
        m = build_model([("x", 1e-3, 1e3), ("y", 1e-3, 1e3)], x + y, [leq(x ** -1 * y ** -1, 1)])
        sol = solve_model(m, x0={"x": 3.0, "y": 2.0})
        check_optimal(sol)

    def test_unbounded_reports_iteration_limit(self):
        sol = solve_model(build_model([("x", 1e-3)], x ** -1, []))
        assert sol.status == "iteration_limit"

    def test_sensitivities_need_optimal(self):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [leq(x, 1), leq(2 * x ** -1, 1)]))
        with pytest.raises(SolverError):
            sensitivities(sol)

    def test_options_validated(self):
        with pytest.raises(ValueError):
            SolverOptions(barrier_reduction=1.5)
        with pytest.raises(ValueError):
            SolverOptions(feasibility_tol=0)

    def test_trace_csv(self, tmp_path):
        sol = solve_model(build_model([("x", 1e-3, 1e3)], x, [leq(3 * x ** -1, 1)]))
        write_trace_csv(sol, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0].startswith("stage,newton_iter,objective,gap,step_len")
        assert len(lines) == len(sol.trace) + 1


def random_gp(rng):
    """A bounded GP with a few posynomial constraints and one equality."""
    n = 4
    names = [f"v{i}" for i in range(n)]
    V = [Variable(s) for s in names]

    def mono():
        e = rng.integers(-2, 3, size=n)
        out = Monomial(float(rng.uniform(0.5, 2)))
        for v, a in zip(V, e):
            out = out * v ** int(a)
        return out

    obj = mono() + mono() + mono()
    cons = [leq(mono() + mono(), 1, f"c{k}") for k in range(3)]
    cons.append(eq(V[0] * V[1], 2.0, "e0"))
    return build_model([(s, 0.05, 20) for s in names], obj, cons)


class TestSensitivityFD:
    @settings(deadline=None, max_examples=25)
    @given(st.integers(0, 10_000))
    def test_duals_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = random_gp(rng)
        sol = solve_model(m)
        if sol.status != OPTIMAL:
            return
        check_optimal(sol)
        for c in m.constraints:
            d = sol.duals[c.label]
            if c.kind == "ineq" and d < 1e-3:
                continue
            # scale the constraint as 1.01 * p <= 1 (central difference in log scale)
            vals = []
            for s in (1.005, 1 / 1.005):
                cons = [k if k is not c else type(c)(c.expr * s, c.kind, c.label) for k in m.constraints]
                r = solve_model(build_model(m.variables, m.objective, cons))
                vals.append(r.log_objective)
            if c.kind == "eq" and abs(d) < 1e-3:
                continue
            fd = (vals[0] - vals[1]) / (2 * math.log(1.005))
            assert fd == pytest.approx(d, rel=0.05, abs=1e-4), c.label
