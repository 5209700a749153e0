from dataclasses import replace

import pytest

from macsim.experiment import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentConfig,
    ResultRow,
    aggregate,
    apply_seed_env,
    format_row,
    parse_config,
    read_csv,
    run_checks,
    run_experiment,
    run_one,
    sweep_figures,
    sweep_points,
    to_csv,
)
from macsim.kernel import MS, S, US

QUICK = ExperimentConfig(duration=3 * S, replications=2)


def test_empty_config_gives_reference_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert (cfg.protocol, cfg.node_count, cfg.fragment_payload) == ("frog", 11, 16)
    assert cfg.duration == 1000 * S and cfg.replications == 5 and cfg.master_seed == 42
    assert cfg.t_int == 600 * US and cfg.slot_time == 320 * US and cfg.per_byte_time == 32 * US
    assert cfg.normal_interval == 200 * MS and cfg.urgent_interval == 2 * S


def test_config_file_values_and_comments():
    cfg = parse_config("# sweep point\nprotocol = frog\nfragment_payload = 16  # bytes\nduration = 20s\n")
    assert cfg.protocol == "frog" and cfg.fragment_payload == 16 and cfg.duration == 20 * S


def test_fragment_payload_out_of_range_names_key_and_line():
    with pytest.raises(ConfigError, match=r"line 2: fragment_payload"):
        parse_config("protocol = frog\nfragment_payload = 0\n")
    with pytest.raises(ConfigError, match="fragment_payload"):
        parse_config("fragment_payload = 122")


@pytest.mark.parametrize("text,pattern", [
    ("speed = 3", "unknown key 'speed'"),
    ("node_count = many", "line 1: node_count: expected an integer"),
    ("node_count = 12", "node_count"),
    ("protocol = csma", "protocol"),
    ("node_count = 3\nnode_count = 4", "line 2: 'node_count' already set on line 1"),
    ("just words", "line 1: expected 'key = value'"),
    ("duration = soon", "duration"),
    ("bop_rts_cts = maybe", "boolean"),
])
def test_config_errors(text, pattern):
    with pytest.raises(ConfigError, match=pattern):
        parse_config(text)


def test_seed_from_environment():
    cfg = apply_seed_env(ExperimentConfig(), {"MACSIM_SEED": "7"})
    assert cfg.master_seed == 7 and cfg.seeds()[:2] == [7, 8]
    assert apply_seed_env(ExperimentConfig(), {}).master_seed == 42
    with pytest.raises(ConfigError):
        apply_seed_env(ExperimentConfig(), {"MACSIM_SEED": "x"})


def test_single_replication_leaves_intervals_empty():
    res = run_experiment(replace(QUICK, replications=1, node_count=4))
    assert len(res.rows) == 2
    for row in res.rows:
        assert row.delay_ci_ms is None and row.throughput_ci_Bps is None
        line = format_row(row).split(",")
        assert line[5] == "" and line[7] == ""


def test_replications_use_consecutive_seeds():
    res = run_experiment(replace(QUICK, master_seed=10, replications=3, node_count=3))
    assert [r.seed for r in res.runs] == [10, 11, 12]
    urgent, normal = res.rows
    assert normal.delivered == sum(r.classes[1].delivered for r in res.runs)


def test_bop_rows_leave_fragment_payload_empty():
    cfg = replace(QUICK, protocol="bop", node_count=3)
    rows = aggregate(cfg, [run_one(cfg, 1)])
    assert all(r.fragment_payload is None for r in rows)
    assert format_row(rows[0]).split(",")[2] == ""


def test_smaller_fragments_slow_normal_traffic():
    delays = {}
    for frag in (2, 121):
        res = run_experiment(replace(QUICK, node_count=2, fragment_payload=frag, duration=10 * S))
        delays[frag] = res.rows[1].mean_delay_ms
    assert delays[2] > delays[121]


def test_sweep_points_cover_both_figures():
    points = sweep_points(QUICK)
    assert len(points) == 10 * 3
    assert {(p.protocol, p.fragment_payload) for p in points if p.protocol == "frog"} == {("frog", 16), ("frog", 2)}


@pytest.fixture(scope="module")
def quick_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("figs")
    return out, sweep_figures(out, replace(QUICK, duration=2 * S))


def test_sweep_file_layout(quick_sweep):
    out, sweep = quick_sweep
    assert sorted(p.name for p in out.iterdir()) == ["fig4a.csv", "fig4b.csv", "fig5a.csv", "fig5b.csv"]
    for name in ("fig4a", "fig4b", "fig5a", "fig5b"):
        rows = read_csv(sweep.files[name])
        assert len(rows) == 10 * 2 * 2
        assert tuple(rows[0]) == CSV_COLUMNS
    assert (out / "fig4a.csv").read_bytes() == (out / "fig5a.csv").read_bytes()


def test_bop_rows_identical_across_suffixes(quick_sweep):
    out, _ = quick_sweep
    bop = [[line for line in (out / f"fig4{s}.csv").read_text().splitlines() if line.startswith("bop,")]
           for s in "ab"]
    assert bop[0] == bop[1] and len(bop[0]) == 20
    frags = {line.split(",")[2] for line in (out / "fig4b.csv").read_text().splitlines()[1:]
             if line.startswith("frog,")}
    assert frags == {"2"}


def test_sweep_is_byte_deterministic(quick_sweep, tmp_path):
    out, sweep = quick_sweep
    again = sweep_figures(tmp_path, sweep.base)
    for name, path in again.files.items():
        assert path.read_bytes() == (out / path.name).read_bytes()
    assert b"\r" not in (out / "fig4a.csv").read_bytes()


def test_run_checks_on_sweep(quick_sweep):
    _, sweep = quick_sweep
    checks = run_checks(sweep.runs)
    assert all(c.ok for c in checks), [c for c in checks if not c.ok]


def test_csv_number_format():
    row = ResultRow("frog", 5, 16, "urgent", 6.0, 0.1234567, 60.5, None, 10, 0, 2)
    assert to_csv([row]) == ",".join(CSV_COLUMNS) + "\nfrog,5,16,urgent,6.000000,0.123457,60.500000,,10,0,2\n"
