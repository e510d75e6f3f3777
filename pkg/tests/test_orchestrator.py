import json

import numpy as np
import pytest

from iterpdd.fd import (DEFAULT_CELLS_PER_UNIT, solve_dirichlet, solve_strips,
                       zero_gradient_table)
from iterpdd.nodal import CV, PLAIN
from iterpdd.orchestrator import (FALLBACK_RHO2, CostLedger, LevelCost, assemble_solution,
                                  error_report, read_nodal_csv, run_iter_pdd, run_plain_pdd,
                                  write_nodal_csv, write_report)
from iterpdd.problems import evaluate
from iterpdd.scheduler import Schedule


@pytest.fixture(scope="module")
def exact_nodes(problem, partition):
    xy = partition.node_xy
    return evaluate(problem.exact_u, xy[:, 0], xy[:, 1])


@pytest.fixture(scope="module")
def plain_01(problem, partition, fitted):
    return run_plain_pdd(0.1, problem, partition, fitted[0], 2, seed=0)


def test_injected_exact_values(problem, partition, fitted, exact_nodes):
    sol, led = run_plain_pdd(0.1, problem, partition, fitted[0], injected_values=exact_nodes)
    rep = error_report(sol, problem, partition)
    assert rep["mean_nodal_error"] == 0.0
    assert led.total_steps == 0 and sol.estimates == []
    # what remains is interface interpolation plus the strip solver
    assert 0 < rep["sup_domain_error"] < 0.2


def test_exact_interface_data_leaves_solver_error(problem, partition):
    u = problem.exact_u
    exact_iface = [lambda P: evaluate(u, P[:, 0], P[:, 1]) for _ in partition.interfaces]
    bfun = lambda X, Y: evaluate(u, X, Y)
    fields = solve_strips(partition, problem.coefficients, exact_iface, bfun)
    err = [float(np.abs(f.values - evaluate(u, *f.mesh())).max()) for f in fields]
    whole = solve_dirichlet(problem.domain, problem.coefficients, bfun, DEFAULT_CELLS_PER_UNIT)
    err_whole = float(np.abs(whole.values - evaluate(u, *whole.mesh())).max())
    assert max(err) < 2.5e-4
    assert max(err) <= err_whole * 1.5


def test_continuity_across_interfaces(problem, partition, plain_01):
    sol = plain_01[0]
    rng = np.random.default_rng(4)
    for x in sol.edges[1:-1]:
        y = rng.uniform(problem.domain.ymin, problem.domain.ymax, 100)
        left, right = sol(np.full(100, x), y), sol(np.full(100, x), y, side="right")
        np.testing.assert_allclose(left, right, atol=1e-9, rtol=0)


def test_interface_values_hit_nodes(partition, plain_01):
    sol = plain_01[0]
    xy = partition.node_xy
    # nodes sit between grid rows, so bilinear lookup adds O(grid^2) error
    np.testing.assert_allclose(sol(xy[:, 0], xy[:, 1]), sol.nodal_values, atol=1e-3)


def test_plain_error_and_cost(problem, partition, plain_01):
    sol, led = plain_01
    rep = error_report(sol, problem, partition)
    assert abs(rep["mean_nodal_error"] - 0.06) <= 0.05
    assert 1.47e7 / 3 <= led.total_steps <= 1.47e7 * 3
    assert led.total_steps == sum(e.work for e in sol.estimates)
    assert all(e.mode == PLAIN for e in sol.estimates)


def test_plain_cost_coarse(problem, partition, fitted):
    _, led = run_plain_pdd(0.62, problem, partition, fitted[0], 2, seed=0)
    assert 65989 / 3 <= led.total_steps <= 65989 * 3


def test_single_level_schedule_is_plain(problem, partition, fitted):
    sols, led = run_iter_pdd(Schedule(0.3, [0.3]), problem, partition, fitted[0], seed=2)
    sol, pled = run_plain_pdd(0.3, problem, partition, fitted[0], seed=2, level=0)
    assert len(sols) == 1
    np.testing.assert_array_equal(sols[0].nodal_values, sol.nodal_values)
    assert led.total_steps == pled.total_steps


def test_two_level_run(problem, partition, fitted, kappa):
    sols, led = run_iter_pdd(Schedule(0.1, [0.62, 0.1]), problem, partition, fitted[0], 2,
                             kappa=kappa, seed=3)
    coarse, fine = sols
    assert fine.mode == CV and not fine.fallback
    assert all(e.mode == CV for e in fine.estimates)
    assert fine.realized_abs_rho > 0.5
    # ledger conservation
    assert led.total_steps == sum(e.total_work for s in sols for e in s.estimates)
    lv = led.levels[1]
    assert lv.weighted == pytest.approx(kappa * (lv.steps + lv.pilot_steps))
    assert led.total_weighted == pytest.approx(sum(x.weighted for x in led.levels))
    # refinement
    e0 = error_report(coarse, problem, partition)["mean_nodal_error"]
    e1 = error_report(fine, problem, partition)["mean_nodal_error"]
    assert e1 < e0
    assert e1 <= 0.1 * 1.5


def test_fallback_on_useless_table(problem, partition, fitted, exact_nodes):
    # a zero gradient table carries no information, so the control variate is useless
    flat, _, _ = assemble_solution(0.62, np.zeros(partition.n), problem, partition, level=1)
    flat.table = zero_gradient_table(partition)
    sols, led = run_iter_pdd(Schedule(0.3, [0.62, 0.3]), problem, partition, fitted[0], seed=1,
                             start_solution=flat)
    fine = sols[-1]
    assert fine.fallback and fine.mode == PLAIN
    lv = led.levels[-1]
    assert lv.fallback and lv.discarded_steps > 0
    assert led.total_steps == lv.steps + lv.discarded_steps + lv.pilot_steps
    assert FALLBACK_RHO2 == 0.05


def test_ledger_arithmetic():
    led = CostLedger([LevelCost(0.5, PLAIN, 100, 0, 2.0, 0.1, 0.2),
                      LevelCost(0.1, CV, 300, 50, 2.0, 0.3, 0.4, False, 0)])
    assert led.total_steps == 450
    assert led.total_weighted == pytest.approx(100 + 2 * 350)
    plain = CostLedger([LevelCost(0.1, PLAIN, 8000, 0, 2.0, 0, 0)])
    assert led.speedup_vs(plain) == pytest.approx(8000 / 800)
    assert led.level_speedups({0.1: 8000.0}) == [pytest.approx(10.0)]
    assert led.to_dict()["total_steps"] == 450


def test_nodal_csv_and_report_round_trip(tmp_path, problem, partition, plain_01):
    sol, led = plain_01
    write_nodal_csv(sol, partition, tmp_path / "n.csv")
    rows = read_nodal_csv(tmp_path / "n.csv")
    assert len(rows) == partition.n
    np.testing.assert_array_equal([float(r["value"]) for r in rows], sol.nodal_values)
    rep = error_report(sol, problem, partition) | {"ledger": led.to_dict(),
                                                    "values": sol.nodal_values}
    write_report(tmp_path / "r.json", rep)
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["ledger"]["total_steps"] == led.total_steps
    assert back["values"] == sol.nodal_values.tolist()
