import dataclasses

import pytest
from hypothesis import given, strategies as st

from srole_sim.cli import main
from srole_sim.config import SimConfig, grid, load_raw, parse_config
from srole_sim.errors import ConfigError, ConfigFileError, ConfigParseError
from srole_sim.metrics import (COLUMNS, CoverageError, MetricsRecord, aggregate, emit_csv,
                               emit_figure_data, figure_table, nearest_rank, read_csv, sig6)

GOLDEN_HEADER = ("method,seed,workload_level,num_nodes,model_kind,kappa_unit,jct_mean,jct_max,"
                 "jct_per_job,tasks_min,tasks_median,tasks_max,util_cpu,util_mem,util_bw,sched_ops,"
                 "shield_ops,decision_time,collisions,detections,corrections,unresolved,messages,"
                 "memory_violations,infeasible")

METHODS = ("marl", "rl", "srole-c", "srole-d")


def record(method="marl", seed=0, **kw):
    base = dict(method=method, seed=seed, workload_level=6, num_nodes=25, model_kind="vgg16-like",
                kappa_unit=100.0, jct_mean=512.25, jct_max=900.5, jct_per_job=(100.125, 900.5),
                tasks_min=1, tasks_median=3.5, tasks_max=20, util_cpu=0.3, util_mem=0.25,
                util_bw=0.125, sched_ops=1000, shield_ops=0 if method in ("rl", "marl") else 200,
                decision_time=0.0012, collisions=3, detections=0, corrections=0, unresolved=0,
                messages=0, memory_violations=0, infeasible=0)
    base.update(kw)
    return MetricsRecord(**base)


def test_golden_header(tmp_path):
    emit_csv([], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == GOLDEN_HEADER + "\n"
    assert ",".join(COLUMNS) == GOLDEN_HEADER


floats = st.floats(0.001, 1e6, allow_nan=False)


@given(st.lists(st.tuples(floats, floats, st.lists(floats, min_size=1, max_size=4),
                          st.integers(0, 10**6)), min_size=1, max_size=5))
def test_csv_round_trip_at_six_digits(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "r.csv"
    recs = [record(seed=i, jct_mean=a, util_cpu=b, jct_per_job=tuple(c), sched_ops=n)
            for i, (a, b, c, n) in enumerate(rows)]
    emit_csv(recs, path)
    back = read_csv(path)
    for r, b in zip(recs, back):
        for f in dataclasses.fields(MetricsRecord):
            v = getattr(r, f.name)
            if isinstance(v, float):
                assert getattr(b, f.name) == sig6(v)
            elif isinstance(v, tuple):
                assert getattr(b, f.name) == tuple(sig6(x) for x in v)
            else:
                assert getattr(b, f.name) == v


def test_same_records_same_bytes(tmp_path):
    recs = [record(seed=s) for s in range(3)]
    emit_csv(recs, tmp_path / "a.csv")
    emit_csv(recs, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_record_rejects_negative_counts():
    with pytest.raises(ValueError):
        record(collisions=-1)


def test_nearest_rank():
    assert nearest_rank([5, 1, 4, 2, 3], 5) == 1
    assert nearest_rank([5, 1, 4, 2, 3], 95) == 5
    assert nearest_rank([5, 1, 4, 2, 3], 50) == 3
    with pytest.raises(ValueError):
        nearest_rank([], 50)


def test_aggregate_median_and_extremes():
    rows = aggregate([record(seed=s, collisions=c) for s, c in enumerate([1, 2, 3, 4, 5])])
    assert len(rows) == 1
    assert rows[0]["collisions_median"] == 3
    assert rows[0]["collisions_p5"] == 1 and rows[0]["collisions_p95"] == 5


def grid_rows(key, xs, methods=METHODS):
    recs = [record(m, s, **{key: x}) for m in methods for x in xs for s in range(3)]
    return aggregate(recs)


def test_collisions_vs_kappa_shape():
    cols, table = figure_table(grid_rows("kappa_unit", [25.0, 50.0, 100.0, 200.0]), "collisions-vs-kappa")
    assert len(table) == 4
    assert [c for c in cols if c in METHODS] == list(METHODS)


def test_completion_vs_nodes_shape(tmp_path):
    rows = grid_rows("num_nodes", [10, 15, 20, 25])
    out = tmp_path / "figs" / "f.csv"
    emit_figure_data(rows, "completion-vs-nodes", out)
    lines = out.read_text().splitlines()
    assert len(lines) == 5 and lines[0].startswith("num_nodes,marl,marl_p5,marl_p95")


def test_overhead_bars_zero_shielding_for_unshielded():
    cols, table = figure_table(grid_rows("kappa_unit", [100.0]), "overhead-bars")
    by = {r["method"]: r for r in table}
    assert "sched_ops_median" in cols and "shield_ops_median" in cols
    assert by["rl"]["shield_ops_median"] == 0 and by["marl"]["shield_ops_median"] == 0
    assert by["srole-c"]["shield_ops_median"] > 0


def test_utilization_table():
    cols, table = figure_table(grid_rows("kappa_unit", [100.0]), "utilization")
    assert [r["resource"] for r in table] == ["cpu", "mem", "bw"]
    assert table[1]["marl"] == 0.25


def test_missing_cells_are_named():
    recs = [record(m, 0, kappa_unit=k) for m in METHODS for k in (25.0, 50.0)]
    recs = [r for r in recs if not (r.method == "rl" and r.kappa_unit == 50.0)]
    with pytest.raises(CoverageError, match=r"\(rl, 50\.0\)"):
        figure_table(aggregate(recs), "collisions-vs-kappa")
    with pytest.raises(ValueError):
        figure_table(aggregate(recs), "pie-chart")


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_config_gives_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, ""))
    assert cfg == SimConfig()
    assert (cfg.alpha, cfg.rho, cfg.gamma_penalty, cfg.kappa_unit) == (0.9, 1.0, 50.0, 100.0)


def test_config_errors_name_the_key(tmp_path):
    with pytest.raises(ConfigError, match=r"alpha out of \(0,1\]") as e:
        parse_config(write(tmp_path, "alpha = 1.5"))
    assert e.value.key == "alpha"
    with pytest.raises(ConfigError, match="rl, marl, srole-c, srole-d") as e:
        parse_config(write(tmp_path, 'method = "sroleX"'))
    assert e.value.key == "method"
    with pytest.raises(ConfigError) as e:
        parse_config(write(tmp_path, "colour = 3"))
    assert e.value.key == "colour"
    with pytest.raises(ConfigError) as e:
        parse_config(write(tmp_path, 'num_nodes = "many"'))
    assert e.value.key == "num_nodes"


def test_config_error_categories(tmp_path):
    with pytest.raises(ConfigFileError):
        parse_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigParseError):
        parse_config(write(tmp_path, "alpha = = 2"))
    with pytest.raises(ConfigParseError):
        parse_config(write(tmp_path, "[section]\nalpha = 0.5"))


def test_grid_expands_lists(tmp_path):
    raw = load_raw(write(tmp_path, 'method = ["rl", "marl"]\nkappa_unit = [25, 50]\nnum_nodes = 10'))
    cfgs = grid(raw)
    assert len(cfgs) == 4
    assert {(c.method, c.kappa_unit) for c in cfgs} == {(m, k) for m in ("rl", "marl") for k in (25.0, 50.0)}
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, 'method = ["rl", "marl"]'))


SMALL = "num_nodes = 5\npretrain_episodes = 20\n"


def test_cli_run_ok(tmp_path, capsys):
    cfg = write(tmp_path, SMALL + "unresolved_threshold = 1000\n")
    assert main(["run", "--config", str(cfg), "--method", "marl", "--seed", "1", "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "raw.csv")
    assert len(rows) == 1 and rows[0].method == "marl"
    assert capsys.readouterr().out.startswith("marl,1,")


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "alpha = 1.5\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "[alpha]" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path / "o")]) == 2


def test_cli_anomaly_exit_code(tmp_path):
    # at alpha 0.1 the background load alone overloads nodes, which no shield can undo
    cfg = write(tmp_path, SMALL + 'method = "srole-c"\nalpha = 0.1\n')
    assert main(["run", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o")]) == 3
    assert read_csv(tmp_path / "o" / "raw.csv")[0].unresolved > 0


def test_cli_pretrain_campaign_figures(tmp_path):
    cfg = write(tmp_path, SMALL + 'method = ["rl", "marl", "srole-c", "srole-d"]\n'
                "kappa_unit = [25, 50, 100, 200]\nunresolved_threshold = 1000\n")
    single = write(tmp_path, SMALL, "one.toml")
    snap = tmp_path / "q.json"
    assert main(["pretrain", "--config", str(single), "--episodes", "5", "--snapshot", str(snap)]) == 0
    assert snap.read_text().startswith("{")
    out = tmp_path / "camp"
    assert main(["campaign", "--config", str(cfg), "--replications", "2", "--out", str(out)]) == 0
    assert len(read_csv(out / "raw.csv")) == 4 * 4 * 2
    assert main(["figures", "--in", str(out), "--figure", "collisions-vs-kappa"]) == 0
    lines = (out / "figure-collisions-vs-kappa.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
