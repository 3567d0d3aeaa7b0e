import csv
import os
from pathlib import Path

import numpy as np
import pytest

from decac.errors import ConfigError
from decac.harness import (
    RunConfig,
    SchemaError,
    ablation_kc,
    compare_algorithms,
    emit_plot_data,
    parse_config,
    read_table,
    run_experiment,
    validate,
)
from decac.harness.cli import main
from decac.metrics import COLUMNS, MetricsRecord, record_to_row, row_to_record

GOLDEN = Path(__file__).parent / "golden"

SMALL = """
[env]
kind = random
n_agents = 3
n_states = 6
actions = 2
seed = 1
gamma = 0.5

[algorithm]
name = sdac-re
K = 10

[run]
n_mc_runs = 1
seed = 0

[diagnostics]
oracle_every = 5
metrics = objective,grad_norm
"""


def cfg(**changes):
    return parse_config(SMALL).replace(**changes)


def data_rows(path):
    with open(path, encoding="utf-8") as fh:
        return [r for r in csv.reader(line for line in fh if not line.startswith("#"))]


def test_parse_defaults_and_values():
    c = parse_config(SMALL)
    assert (c.n_states, c.gamma, c.K, c.schedule, c.topology) == (6, 0.5, 10, "sdac-empirical", "ring")
    assert c.action_counts == (2, 2, 2)
    assert c.oracle_metrics == ("objective", "grad_norm")
    assert parse_config("").algorithm == "sdac-re"
    t = parse_config("[algorithm]\nname = tdac-noi\n[schedule]\nalpha_bar = 0.02\nT_c = 3\n".replace("T_c = 3\n", ""))
    assert t.schedule == "tdac" and t.schedule_overrides == {"alpha_bar": 0.02}


@pytest.mark.parametrize(
    "text",
    [
        "[env]\ncolour = blue\n",
        "[algorithm]\nname = ppo\n",
        "[algorithm]\nK = many\n",
        "[run]\nn_mc_runs = 0\n",
        "[algorithm]\nname = tdac-re\nschedule = sdac-empirical\n",
        "[schedule]\nmomentum = 0.9\n",
        "[diagnostics]\nmetrics = entropy\n",
        "not an ini file",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_metrics_header_golden():
    assert ",".join(COLUMNS) + "\n" == (GOLDEN / "metrics_header.txt").read_text()


def test_metrics_row_round_trip():
    rec = MetricsRecord(3, 4, 5, -0.125, 0.1 + 0.2, 1e-17, objective=-9.5)
    back = row_to_record(record_to_row(rec))
    assert back.k == 3 and back.reward == -0.125 and back.running_reward == 0.1 + 0.2
    assert np.isnan(back.grad_norm_sq) and back.objective == -9.5


def test_run_experiment_rows_and_header(tmp_path):
    paths, agg = run_experiment(cfg(), tmp_path / "a")
    assert len(paths) == 1
    rows = data_rows(paths[0])
    assert rows[0] == list(COLUMNS)
    assert len(rows) == 11
    text = paths[0].read_text()
    assert "# topology=ring" in text and "# resolved.R_omega=" in text and "# run_seed=0" in text
    assert ",".join(data_rows(agg)[0]) + "\n" == (GOLDEN / "aggregate_header.txt").read_text()
    assert (tmp_path / "a" / "run.log").exists()


def test_run_experiment_byte_identical(tmp_path):
    p1, a1 = run_experiment(cfg(n_mc_runs=2), tmp_path / "x")
    p2, a2 = run_experiment(cfg(n_mc_runs=2), tmp_path / "y")
    for f1, f2 in zip(p1 + [a1], p2 + [a2]):
        assert f1.read_bytes() == f2.read_bytes()
    assert "20" not in "".join(line for line in p1[0].read_text().splitlines() if line.startswith("# date"))


def test_aggregate_is_mean_of_runs(tmp_path):
    paths, agg = run_experiment(cfg(n_mc_runs=10, K=6), tmp_path / "m")
    assert [p.name for p in paths] == [f"run_seed{s}.csv" for s in range(10)]
    _, cols = read_table(agg)
    per_run = [read_table(p)[1] for p in paths]
    for k in range(6):
        for c in ("reward", "samples", "consensus_omega"):
            vals = [float(r[c][k]) for r in per_run]
            assert float(cols[f"{c}_mean"][k]) == pytest.approx(np.mean(vals), rel=1e-12, abs=1e-15)
            assert float(cols[f"{c}_sd"][k]) == pytest.approx(np.std(vals, ddof=1), rel=1e-9, abs=1e-15)


def test_seed_override(tmp_path):
    paths, _ = run_experiment(cfg(n_mc_runs=2), tmp_path / "s", seed=7)
    assert [p.name for p in paths] == ["run_seed7.csv", "run_seed8.csv"]


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_fails_before_compute(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir()
    locked.chmod(0o500)
    with pytest.raises(OSError):
        run_experiment(cfg(K=10**9), locked / "out")


def test_output_path_is_a_file_fails_before_compute(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x")
    with pytest.raises(OSError):
        run_experiment(cfg(K=10**9), blocker / "out")


def test_ablation_kc(tmp_path):
    single_p, single_agg = run_experiment(cfg(K=20), tmp_path / "single")
    path = ablation_kc(cfg(K=20), [1], tmp_path / "abl1")
    assert (tmp_path / "abl1" / "Kc1" / "run_seed0.csv").read_bytes() == single_p[0].read_bytes()
    path = ablation_kc(cfg(K=20), [1, 5, 10, 20], tmp_path / "abl")
    rows = data_rows(path)
    assert rows[0][:4] == ["K_c", "k", "samples", "communications"]
    comm = {}
    for r in rows[1:]:
        comm[(int(r[0]), int(r[1]))] = float(r[3])
    # two vectors gossiped per consensus iteration, consensus when k % K_c == 0
    for kc in (1, 5, 10, 20):
        assert comm[(kc, 19)] == 2 * len(range(0, 20, kc))
    assert comm[(5, 19)] == pytest.approx(comm[(1, 19)] / 5)
    with pytest.raises(ConfigError):
        ablation_kc(cfg(), [], tmp_path / "none")


def test_compare_algorithms(tmp_path):
    a, b = cfg(K=8), cfg(K=8)
    path = compare_algorithms([a, b], ["one", "two"], tmp_path / "cmp")
    rows = data_rows(path)[1:]
    one = [r[1:] for r in rows if r[0] == "one"]
    two = [r[1:] for r in rows if r[0] == "two"]
    assert one == two and len(one) == 8
    mixed = compare_algorithms([cfg(K=8), cfg(K=8, algorithm="tdac-re", schedule="tdac"),
                                cfg(K=3, algorithm="dldac", schedule="", schedule_overrides={"T_c": 2, "N": 3, "N_c": 2})],
                               out=tmp_path / "mix")
    rows = data_rows(mixed)[1:]
    samples = {r[0]: [float(x[2]) for x in rows if x[0] == r[0]] for r in rows}
    assert samples["sdac-re"] == [k + 1 for k in range(8)]
    assert samples["dldac"] == [(k + 1) * (2 * 2 + 3) for k in range(3)]
    with pytest.raises(ConfigError):
        compare_algorithms([cfg(), cfg(n_states=7)], out=tmp_path / "bad")


def test_plot_data(tmp_path):
    empty = emit_plot_data([], tmp_path / "empty.csv")
    assert data_rows(empty) == [["series", "x_kind", "x", "mean", "sd"]]
    _, agg = run_experiment(cfg(K=7, n_mc_runs=2), tmp_path / "p")
    out = emit_plot_data([agg], tmp_path / "plot.csv")
    rows = data_rows(out)[1:]
    assert len(rows) == 7 * 2
    _, cols = read_table(agg)
    samp = [r for r in rows if r[1] == "samples"]
    assert [float(r[3]) for r in samp] == [float(x) for x in cols["running_reward_mean"]]
    assert [r[2] for r in samp] == cols["samples_mean"]
    bad = tmp_path / "bad.csv"
    bad.write_text("k,foo\n0,1\n")
    with pytest.raises(SchemaError):
        emit_plot_data([bad], tmp_path / "x.csv")


def test_validate_reports(tmp_path):
    checks = {c.name: c for c in validate(cfg())}
    assert checks["reward-bound"].ok and checks["doubly-stochastic"].ok and checks["mixing"].ok
    assert checks["critic-definite"].ok and checks["reward-definite"].ok
    assert not checks["fisher-positive"].ok and not checks["fisher-positive"].fatal


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, "good.ini", SMALL)
    assert main(["run", "--config", good, "--out", str(tmp_path / "cli")]) == 0
    assert (tmp_path / "cli" / "run_seed0.csv").exists()
    assert main(["validate", "--config", good]) == 0
    bad = _write(tmp_path, "bad.ini", "[algorithm]\nname = ppo\n")
    assert main(["run", "--config", bad]) == 2
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", "--config", good, "--out", str(blocker / "x")]) == 4
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == 4
    assert main(["plotdata", "--in", str(tmp_path / "cli"), "--out", str(tmp_path / "plot.csv")]) == 0
    assert main(["plotdata", "--in", str(tmp_path / "nowhere"), "--out", str(tmp_path / "p2.csv")]) == 4
    assert main(["ablate-kc", "--config", good, "--values", "1,x"]) == 2
    two = _write(tmp_path, "two.ini", SMALL.replace("n_states = 6", "n_states = 5"))
    assert main(["compare", "--configs", f"{good},{two}", "--out", str(tmp_path / "c")]) == 2


def test_cli_validate_assumption_failure(tmp_path):
    text = SMALL + "\n[topology]\ngraph = edges:0-1\n"
    path = _write(tmp_path, "c.ini", text)
    checks = {c.name: c for c in validate(parse_config(text))}
    assert not checks["doubly-stochastic"].ok
    assert main(["validate", "--config", path]) == 3
    assert main(["run", "--config", path, "--out", str(tmp_path / "r")]) == 2


def test_nav_landmarks_from_cell_indices():
    from decac.harness.runner import build_env

    mdp = build_env(parse_config("[env]\nkind = nav\nn_agents = 1\nside = 3\nlandmarks = 4\n"))
    assert mdp.n_states == 9
    assert mdp.rewards[0, 4, 0] == 0.0 and mdp.rewards[0, 0, 0] == pytest.approx(-0.5)
