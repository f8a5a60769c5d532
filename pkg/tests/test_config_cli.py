import csv
import json

import numpy as np
import pytest

from seasonal_spline import cli, derivative
from seasonal_spline.dictionary import evaluate_solution
from seasonal_spline.harness import GroundTruth
from seasonal_spline.tv import load_solution_json

OPERATORS_D2 = {"trend": {"kind": "derivative", "order": 2},
                "seasonal": {"kind": "derivative", "order": 2}}
SAMPLE_XS = [0.0, 0.17, 0.38, 0.55, 0.71, 0.93,
             1.12, 1.31, 1.52, 1.70, 1.88, 2.0]
TRUTH = {"trend_knots": [0.5, 1.25], "trend_weights": [1.5, -2.0],
         "poly": [0.2, 0.3],
         "seasonal_knots": [0.25, 0.75], "seasonal_weights": [1.0, -1.0]}

# regression baseline: sup error of the reconstructed sum on the probe
# grid, fixed at the first green run of this instance (0.0224 observed)
FIT_SUP_ERROR_BASELINE = 0.05


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def simulate_config(sigma=0.0, seed=5, truth=None):
    return {
        "operators": OPERATORS_D2,
        "truth": truth or TRUTH,
        "plan": [{"kind": "sampling", "x": x} for x in SAMPLE_XS],
        "sigma": sigma,
        "seed": seed,
    }


def fit_config(data_path, lam_t=0.001, lam_s=0.001, **grid_overrides):
    grid = {"h_t": 0.125, "window": [0.0, 2.0], "margin": 8, "n_s": 8}
    grid.update(grid_overrides)
    return {
        "operators": OPERATORS_D2,
        "lambda_t": lam_t,
        "lambda_s": lam_s,
        "data": data_path,
        "grid": grid,
    }


def run(args):
    return cli.main([str(a) for a in args])


def truth_object():
    return GroundTruth(
        trend_op=derivative(2), seasonal_op=derivative(2, "seasonal"),
        trend_knots=TRUTH["trend_knots"], trend_weights=TRUTH["trend_weights"],
        poly_coefs=TRUTH["poly"], seasonal_knots=TRUTH["seasonal_knots"],
        seasonal_weights=TRUTH["seasonal_weights"],
    )


# --------------------------------------------------------------------------
# simulate


def test_simulate_bitwise_reproducible(tmp_path):
    cfg = write_config(tmp_path / "sim.json", simulate_config(sigma=0.7))
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "a"]) == 0
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "b"]) == 0
    assert ((tmp_path / "a" / "dataset.csv").read_bytes()
            == (tmp_path / "b" / "dataset.csv").read_bytes())


def test_simulate_noiseless_matches_truth(tmp_path):
    cfg = write_config(tmp_path / "sim.json", simulate_config(sigma=0.0))
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "out"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out" / "dataset.csv")))
    t = np.array([float(r["t"]) for r in rows])
    y = np.array([float(r["y"]) for r in rows])
    f_t, f_s = truth_object().evaluate(t)
    np.testing.assert_allclose(y, f_t + f_s, atol=1e-12)
    blob = json.loads((tmp_path / "out" / "truth.json").read_text())
    assert blob["schema"] == "v1"
    np.testing.assert_allclose(blob["clean_measurements"], y, atol=1e-12)


def test_simulate_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path / "sim.json", simulate_config(sigma=1.0))
    run(["simulate", "--config", cfg, "--out", tmp_path / "a"])
    run(["simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 99])
    assert ((tmp_path / "a" / "dataset.csv").read_bytes()
            != (tmp_path / "b" / "dataset.csv").read_bytes())


def test_simulate_rejects_bad_truth(tmp_path):
    bad = simulate_config()
    bad["truth"] = dict(bad["truth"], seasonal_weights=[1.0, 1.0])
    cfg = write_config(tmp_path / "sim.json", bad)
    assert run(["simulate", "--config", cfg, "--out", tmp_path / "out"]) == 2


# --------------------------------------------------------------------------
# fit


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    base = tmp_path_factory.mktemp("data")
    cfg = base / "sim.json"
    cfg.write_text(json.dumps(simulate_config(sigma=0.0)))
    assert cli.main(["simulate", "--config", str(cfg),
                     "--out", str(base)]) == 0
    return str(base / "dataset.csv")


def test_fit_noiseless_below_baseline(tmp_path, dataset):
    cfg = write_config(tmp_path / "fit.json", fit_config(dataset))
    out = tmp_path / "out"
    assert run(["fit", "--config", cfg, "--out", out]) == 0
    blob = json.loads((out / "solution.json").read_text())
    assert blob["kkt"]["ok"] is True
    sol = load_solution_json(blob)
    t = np.linspace(0.0, 2.0, 513)
    f_t, f_s = evaluate_solution(sol.dictionary, sol, t)
    truth_t, truth_s = truth_object().evaluate(t)
    sup = np.max(np.abs((f_t + f_s) - (truth_t + truth_s)))
    assert sup < FIT_SUP_ERROR_BASELINE
    # dense evaluation artifact matches the reloaded solution
    rows = list(csv.DictReader(open(out / "evaluation.csv")))
    grid = np.array([float(r["t"]) for r in rows])
    f_col = np.array([float(r["f"]) for r in rows])
    g_t, g_s = evaluate_solution(sol.dictionary, sol, grid)
    np.testing.assert_allclose(f_col, g_t + g_s, atol=1e-10)


def test_fit_empty_data_file(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    cfg = write_config(tmp_path / "fit.json", fit_config(str(empty)))
    assert run(["fit", "--config", cfg, "--out", tmp_path / "out"]) == 2
    assert "empty.csv" in capsys.readouterr().err


def test_fit_unknown_config_key(tmp_path, dataset):
    payload = fit_config(dataset)
    payload["lamda_t"] = 1.0
    cfg = write_config(tmp_path / "fit.json", payload)
    assert run(["fit", "--config", cfg, "--out", tmp_path / "out"]) == 2


def test_fit_huge_lambda_polynomial_least_squares(tmp_path, dataset):
    cfg = write_config(tmp_path / "fit.json",
                       fit_config(dataset, lam_t=1e4, lam_s=1e4))
    out = tmp_path / "out"
    assert run(["fit", "--config", cfg, "--out", out]) == 0
    blob = json.loads((out / "solution.json").read_text())
    assert all(v == 0.0 for v in blob["blocks"]["a"])
    assert all(v == 0.0 for v in blob["blocks"]["b"])
    rows = list(csv.DictReader(open(out / "evaluation.csv")))
    f_s_col = np.array([float(r["f_S"]) for r in rows])
    np.testing.assert_allclose(f_s_col, f_s_col[0], atol=1e-12)
    # the dense trend equals the polynomial least-squares fit of the data
    data = list(csv.DictReader(open(dataset)))
    xs = np.array([float(r["t"]) for r in data])
    ys = np.array([float(r["y"]) for r in data])
    coef, *_ = np.linalg.lstsq(np.vander(xs, 2, increasing=True), ys,
                               rcond=None)
    grid = np.array([float(r["t"]) for r in rows])
    f_t_col = np.array([float(r["f_T"]) for r in rows])
    np.testing.assert_allclose(f_t_col, coef[0] + coef[1] * grid, atol=1e-6)


def test_fit_nonconvergence_exit3_still_writes(tmp_path, dataset):
    payload = fit_config(dataset)
    payload["solver"] = {"max_iters": 2}
    cfg = write_config(tmp_path / "fit.json", payload)
    out = tmp_path / "out"
    assert run(["fit", "--config", cfg, "--out", out]) == 3
    assert (out / "solution.json").exists()
    assert (out / "kkt.json").exists()
    assert (out / "evaluation.csv").exists()
    assert json.loads((out / "kkt.json").read_text())["ok"] is False


def test_fit_residual_decreases_along_lambda_ladder(tmp_path, dataset):
    data = list(csv.DictReader(open(dataset)))
    ys = np.array([float(r["y"]) for r in data])
    xs = np.array([float(r["t"]) for r in data])
    residuals = []
    for lam in (0.5, 0.05, 0.005):
        cfg = write_config(tmp_path / f"fit{lam}.json",
                           fit_config(dataset, lam_t=lam, lam_s=lam,
                                      h_t=0.25, margin=4, n_s=4))
        out = tmp_path / f"out{lam}"
        assert run(["fit", "--config", cfg, "--out", out]) == 0
        sol = load_solution_json(json.loads((out / "solution.json").read_text()))
        f_t, f_s = evaluate_solution(sol.dictionary, sol, xs)
        residuals.append(float(np.linalg.norm(ys - f_t - f_s)))
    assert residuals[0] >= residuals[1] >= residuals[2]


# --------------------------------------------------------------------------
# quadratic


def test_quadratic_identity_gram_hook(tmp_path):
    y = [1.0, -0.4, 0.8]
    payload = {
        "operators": {"trend": {"kind": "sobolev", "gamma": 1.0},
                      "seasonal": {"kind": "sobolev", "gamma": 1.0}},
        "lambda": 0.5,
        "plan": [{"kind": "sampling", "x": x} for x in (0.0, 0.5, 1.0)],
        "y": y,
        "debug_gram": np.eye(3).tolist(),
    }
    cfg = write_config(tmp_path / "quad.json", payload)
    out = tmp_path / "out"
    assert run(["quadratic", "--config", cfg, "--out", out]) == 0
    blob = json.loads((out / "quadratic.json").read_text())
    np.testing.assert_allclose(blob["alpha"], np.array(y) / 1.5, atol=1e-12)


def test_quadratic_couples_where_tv_does_not(tmp_path):
    # a pure-trend signal: the TV path can zero its seasonal block, the
    # quadratic path cannot keep the seasonal component flat
    xs = np.linspace(0.0, 3.0, 9)
    y = (0.5 * xs).tolist()
    plan = [{"kind": "sampling", "x": float(x)} for x in xs]
    quad_payload = {
        "operators": {"trend": {"kind": "sobolev", "gamma": 1.5},
                      "seasonal": {"kind": "sobolev", "gamma": 1.5}},
        "lambda": 0.1,
        "plan": plan,
        "y": y,
    }
    cfg_q = write_config(tmp_path / "quad.json", quad_payload)
    out_q = tmp_path / "quad_out"
    assert run(["quadratic", "--config", cfg_q, "--out", out_q]) == 0
    quad_blob = json.loads((out_q / "quadratic.json").read_text())
    assert quad_blob["seasonal_spread"] > 1e-6

    tv_payload = {
        "operators": OPERATORS_D2,
        "lambda_t": 0.05,
        "lambda_s": 50.0,
        "plan": plan,
        "y": y,
        "grid": {"h_t": 0.25, "window": [0.0, 3.0], "margin": 4, "n_s": 4},
    }
    cfg_tv = write_config(tmp_path / "tv.json", tv_payload)
    out_tv = tmp_path / "tv_out"
    assert run(["fit", "--config", cfg_tv, "--out", out_tv]) == 0
    tv_blob = json.loads((out_tv / "solution.json").read_text())
    assert sum(abs(v) for v in tv_blob["blocks"]["b"]) < 1e-6


def test_quadratic_rejects_derivative_operators(tmp_path):
    payload = {
        "operators": OPERATORS_D2,
        "lambda": 0.5,
        "plan": [{"kind": "sampling", "x": 0.0}],
        "y": [1.0],
    }
    cfg = write_config(tmp_path / "quad.json", payload)
    assert run(["quadratic", "--config", cfg, "--out", tmp_path / "out"]) == 3


# --------------------------------------------------------------------------
# converge


def converge_payload(dataset, ladder, **overrides):
    payload = {
        "operators": OPERATORS_D2,
        "lambda_t": 0.05,
        "lambda_s": 0.05,
        "data": dataset,
        "window": [0.0, 2.0],
        "margin_len": 1.0,
        "ladder": ladder,
        "probe": [0.0, 2.0],
    }
    payload.update(overrides)
    return payload


def test_converge_nested_ladder_exit0(tmp_path, dataset):
    ladder = [{"h_t": 0.25, "n_s": 4}, {"h_t": 0.125, "n_s": 8},
              {"h_t": 0.0625, "n_s": 16}]
    cfg = write_config(tmp_path / "conv.json",
                       converge_payload(dataset, ladder))
    out = tmp_path / "out"
    assert run(["converge", "--config", cfg, "--out", out]) == 0
    blob = json.loads((out / "convergence.json").read_text())
    assert blob["nested"] is True and blob["monotone"] is True
    objs = [r["objective"] for r in blob["rungs"]]
    assert all(b <= a + 1e-9 for a, b in zip(objs[:-1], objs[1:]))
    assert (out / "convergence.csv").exists()


def test_converge_non_nested_noted(tmp_path, dataset):
    ladder = [{"h_t": 0.25, "n_s": 4}, {"h_t": 0.15, "n_s": 7}]
    cfg = write_config(tmp_path / "conv.json",
                       converge_payload(dataset, ladder))
    out = tmp_path / "out"
    assert run(["converge", "--config", cfg, "--out", out]) == 0
    blob = json.loads((out / "convergence.json").read_text())
    assert blob["nested"] is False


def test_converge_failed_rung_exit3(tmp_path, dataset):
    ladder = [{"h_t": 0.25, "n_s": 4}, {"h_t": 0.125, "n_s": 8}]
    cfg = write_config(tmp_path / "conv.json",
                       converge_payload(dataset, ladder,
                                        solver={"max_iters": 1}))
    out = tmp_path / "out"
    assert run(["converge", "--config", cfg, "--out", out]) == 3
    blob = json.loads((out / "convergence.json").read_text())
    assert any(r["failed"] for r in blob["rungs"])


# --------------------------------------------------------------------------
# repo quickstart configs


def test_quickstart_configs_produce_dataset_and_fit(tmp_path):
    import hashlib
    import pathlib

    configs = pathlib.Path(__file__).resolve().parent.parent / "configs"
    sim_cfg = configs / "quickstart_simulate.json"
    out = tmp_path / "quickstart"
    assert run(["simulate", "--config", sim_cfg, "--out", out]) == 0
    digest = hashlib.sha256((out / "dataset.csv").read_bytes()).hexdigest()
    # frozen at the first green run; seeded simulation is bitwise stable
    assert digest == ("a4acd99fa9bdde5e4e8a3e829b62524d"
                      "01c10af06aff3d160dfbeb89dd31c967")

    fit_payload = json.loads((configs / "quickstart_fit.json").read_text())
    fit_payload["data"] = str(out / "dataset.csv")
    cfg = write_config(tmp_path / "fit.json", fit_payload)
    assert run(["fit", "--config", cfg, "--out", tmp_path / "fit_out"]) == 0
    blob = json.loads((tmp_path / "fit_out" / "solution.json").read_text())
    assert blob["kkt"]["ok"] is True
