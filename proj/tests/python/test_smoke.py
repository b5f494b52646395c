import json
from pathlib import Path

import pytest

import fairpart

DATA = Path(__file__).resolve().parents[2] / "data"

TWO_GROUPS = {
    "population": {"mixture": {"groups": [
        {"prior": 0.5, "components": [{"weight": 1, "mean": [0.3, 0.3], "cov": 0.02}]},
        {"prior": 0.5, "components": [{"weight": 1, "mean": [0.7, 0.6], "cov": 0.03}]},
    ]}},
    "facilities": [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]],
    "solver": {"iterations": 20000, "eval_samples": 20000, "trace_samples": 1000},
    "seed": 7,
}


@pytest.fixture
def problem():
    return fairpart.Problem.from_json(json.dumps(TWO_GROUPS))


def test_problem_shape(problem):
    assert problem.facility_count == 4
    assert problem.group_count == 2
    assert problem.priors == [0.5, 0.5]
    assert problem.resolved_config["solver"]["iterations"] == 20000


def test_solve_is_deterministic_and_fairer(problem):
    a = problem.solve()
    b = problem.solve()
    assert a.weights == b.weights
    assert a.weights.constraint_residual() < 1e-12
    assert len(a.region_masses) == 4
    assert a.trace and a.trace[-1]["n"] == 20000
    fair = problem.evaluate(a.weights)
    base = problem.evaluate(problem.baseline_weights())
    assert fair["max_deviation"] < base["max_deviation"]
    assert fair["max_deviation"] < 0.05


def test_overrides_and_errors():
    text = json.dumps(TWO_GROUPS)
    p = fairpart.Problem.from_json(text, overrides=["solver.mode=fixed_p", "solver.p=[0.25,0.25,0.25,0.25]"])
    assert p.resolved_config["solver"]["mode"] == "fixed_p"
    with pytest.raises(fairpart.ConfigError, match="solver.p"):
        fairpart.Problem.from_json(text, overrides=["solver.mode=fixed_p", "solver.p=[0.5,0.6,0,0]"])
    with pytest.raises(fairpart.Error):
        fairpart.Problem.from_json(text, overrides=["solver.bogus=1"])


def test_partition_and_raster(problem):
    part = problem.partition(problem.baseline_weights())
    assert part.assign(0.1, 0.1) == 0
    assert part.assign(0.9, 0.9) == 3
    grid = part.rasterize(16)
    assert grid["nx"] == 16 and len(grid["cells"]) == 256
    assert set(grid["cells"]) <= {0, 1, 2, 3}
    with pytest.raises(fairpart.DimensionMismatch):
        problem.partition(fairpart.Weights.zeros(3, [0.5, 0.5]))


def test_weights_round_trip(tmp_path):
    w = fairpart.Weights([[0.1, -0.1], [-1.0 / 3.0, 1.0 / 3.0]], [0.5, 0.5])
    w.save(tmp_path / "w.json")
    assert fairpart.Weights.load(tmp_path / "w.json") == w
    assert w.w[1][0] == -1.0 / 3.0


def test_oracle_on_segregated_pair():
    inst = fairpart.Instance.load(DATA / "instances" / "segregated2")
    lp = fairpart.lp_primal(inst)
    assert lp["objective"] == pytest.approx(0.5, abs=1e-12)
    weights, value = inst.exact_ascent(50000)
    assert value == pytest.approx(lp["objective"], rel=1e-3)
    assert inst.duality_gap(weights) >= -1e-12
    summary = fairpart.verify_instance(inst, iterations=50000, samples=20000)
    assert summary["passed"], summary["checks"]


def test_helpers():
    assert fairpart.percentile_nearest_rank([4.0, 1.0, 3.0, 2.0], 50) == 2.0
    assert fairpart.closed_facilities([0.5, 0.0, 0.5]) == [1]
