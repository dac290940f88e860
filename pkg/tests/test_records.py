import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degbias.config import ConfigError, RunConfig, dump_config, load_config, parse_pairs
from degbias.records import MalformedCSV, RunManifest, header_line, read_csv, write_csv
from degbias.report import render_report


# config ------------------------------------------------------------------------------

def test_defaults_validate():
    cfg = RunConfig()
    assert cfg.seed_list == list(range(10))
    assert cfg.filters == ["rw", "sym"]


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("epochs = 20  # short\nfilters = sym\n\nseeds = 3, 4\n")
    cfg = load_config(p, {"epochs": "30", "hops": 3})
    assert (cfg.epochs, cfg.filters, cfg.seed_list, cfg.hops) == (30, ["sym"], [3, 4], 3)


@pytest.mark.parametrize("text", ["epochs 20", "nosuchkey = 1", "epochs = ten", "keep_self_loops = maybe"])
def test_bad_config_lines(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(p)


@pytest.mark.parametrize("kwargs", [{"model": "mlp"}, {"filters": ["gcn"]}, {"optimizer": "sgd"},
                                    {"epochs": -1}, {"learning_rate": -0.1},
                                    {"model": "linear", "filters": ["att"]}, {"num_seeds": 0}])
def test_invalid_values(kwargs):
    with pytest.raises(ConfigError):
        RunConfig(**kwargs)


def test_hash_ignores_output_dir():
    assert RunConfig(out="a").hash() == RunConfig(out="b").hash()
    assert RunConfig(epochs=1).hash() != RunConfig(epochs=2).hash()


def test_dump_round_trips(tmp_path):
    cfg = RunConfig(seeds=[1, 5], filters=["sym", "att"], keep_self_loops=True, learning_rate=0.01)
    p = tmp_path / "c.cfg"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


def test_parse_pairs_strips_comments():
    assert parse_pairs("# header\nhops = 4 # trailing\n") == {"hops": "4"}


# CSV records ---------------------------------------------------------------------------

def test_header_line():
    assert header_line("abc", seed=3) == "# degbias 0.1.0 config_hash=abc seed=3"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(allow_nan=False, width=64), min_size=1, max_size=20))
def test_floats_round_trip_exactly(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "x.csv"
    write_csv(path, ({"i": i, "v": v} for i, v in enumerate(values)), "h")
    _, rows = read_csv(path)
    assert [r["v"] for r in rows] == values


def test_union_of_keys_becomes_header(tmp_path):
    write_csv(tmp_path / "x.csv", [{"a": 1}, {"a": 2, "b": "x"}], "h")
    _, rows = read_csv(tmp_path / "x.csv")
    assert rows[1]["b"] == "x" and rows[0]["b"] == ""


def test_non_finite_values_survive(tmp_path):
    write_csv(tmp_path / "x.csv", [{"v": math.inf}, {"v": math.nan}], "h")
    _, rows = read_csv(tmp_path / "x.csv")
    assert rows[0]["v"] == math.inf and math.isnan(rows[1]["v"])


@pytest.mark.parametrize("text", ["", "# only a comment\n", "a,b\n1,2,3\n", "a,b\n1\n"])
def test_malformed_csv(tmp_path, text):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(MalformedCSV):
        read_csv(p)


def test_manifest_round_trip(tmp_path):
    m = RunManifest("h")
    (tmp_path / "a").write_text("x")
    m.add(0, tmp_path / "a")
    m.add(0, tmp_path / "gone")
    m.timings["train"] = 1.5
    m.save(tmp_path / "m.json")
    back = RunManifest.load(tmp_path / "m.json")
    assert back == m
    assert back.missing() == [str(tmp_path / "gone")]


# report --------------------------------------------------------------------------------

def _write_inputs(d):
    bins = [{"kind": k, "bin": b, "median_degree": 2.0 ** b, "mean_loss": 1.0 / (b + 1), "std_loss": 0.1}
            for k in ("rw", "sym") for b in range(4)]
    write_csv(d / "degree_bins.csv", bins, "h")
    write_csv(d / "nodes.csv", [{"kind": "rw", "degree": i + 1, "icp": i / (i + 1)} for i in range(10)], "h")
    write_csv(d / "pca.csv", [{"pc1": float(i), "pc2": float(-i), "label": i % 3} for i in range(9)], "h")


def test_report_bytes_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        _write_inputs(d)
        render_report(d)
    for name in ("loss_vs_degree.svg", "icp_vs_degree.svg", "pca.svg"):
        assert (a / "report" / name).read_bytes() == (b / "report" / name).read_bytes()


def test_report_notes_missing_and_empty(tmp_path):
    _write_inputs(tmp_path)
    write_csv(tmp_path / "variance.csv", [], "h", fieldnames=["kind", "group", "mean", "std"])
    paths, summary = render_report(tmp_path)
    assert len(paths) == 3
    assert "group_curves.svg: omitted (group_curves.csv not found)" in summary
    assert "variance.svg: omitted (variance.csv has no rows)" in summary
    svg = (tmp_path / "report" / "loss_vs_degree.svg").read_text()
    assert "equal-count degree quantile bins" in svg


def test_report_rejects_missing_column(tmp_path):
    write_csv(tmp_path / "pca.csv", [{"pc1": 1.0, "label": 0}], "h")
    with pytest.raises(MalformedCSV):
        render_report(tmp_path)
