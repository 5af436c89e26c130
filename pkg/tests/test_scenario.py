from pathlib import Path

import pytest

from thzwdc.scenario import (
    SCHEMA,
    ScenarioError,
    json_safe,
    load_scenario,
    parse_scenario,
    resolve_scenario_path,
    run_scenario,
    traffic_phases,
)

GOLDEN = Path(__file__).parent / "golden"


def test_defaults_fill_every_field():
    sc = parse_scenario("seed: 3\n")
    assert sc.seed == 3
    assert set(sc.config) == set(SCHEMA)
    assert sc.config["channel"]["p_los"] == 0.52
    assert sc.config["orchestration"]["blockage"]["enabled"] is True


def test_empty_document_is_all_defaults():
    assert parse_scenario("").config == parse_scenario("{}").config


@pytest.mark.parametrize("text,path", [
    ("foo: 1\n", "foo"),
    ("channel:\n  freq: 3e11\n", "channel.freq"),
    ("orchestration:\n  blockage:\n    rate: 2\n", "orchestration.blockage.rate"),
])
def test_unknown_keys_rejected_with_path(text, path):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.key_path == path
    assert path in str(exc.value)


@pytest.mark.parametrize("text,path", [
    ("racks:\n  count: 1\n", "racks.count"),
    ("channel:\n  p_los: 1.5\n", "channel.p_los"),
    ("orchestration:\n  objective: fastest\n", "orchestration.objective"),
    ("seed: maybe\n", "seed"),
    ("orchestration:\n  reconfigure: 1\n", "orchestration.reconfigure"),
    ("traffic:\n  generator: file\n", "traffic.file"),
])
def test_invalid_values_name_their_key(text, path):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.key_path == path


def test_numeric_strings_coerced():
    sc = parse_scenario("fabric:\n  link_rate_bps: 100e9\n")
    assert sc.config["fabric"]["link_rate_bps"] == 100e9


def test_digest_depends_on_content_and_seed():
    a = parse_scenario("seed: 1\n")
    assert a.digest() == parse_scenario("seed: 1\nracks: {count: 16}\n").digest()
    assert a.digest() != parse_scenario("seed: 2\n").digest()
    assert a.digest() != a.with_overrides(**{"channel.p_los": 0.5}).digest()


def test_overrides_are_strict():
    sc = parse_scenario("")
    with pytest.raises(ScenarioError):
        sc.with_overrides(**{"channel.nope": 1})
    with pytest.raises(ScenarioError):
        sc.with_overrides(**{"channel": 1})
    assert sc.with_overrides(seed=9).seed == 9 and sc.seed == 1


def test_resolution_order(tmp_path, monkeypatch):
    env_dir = tmp_path / "cfg"
    env_dir.mkdir()
    (env_dir / "mine.scenario").write_text("seed: 77\n")
    (env_dir / "baseline.scenario").write_text("seed: 78\n")
    env = {"THZWDC_CONFIG_DIR": str(env_dir)}
    assert resolve_scenario_path("mine.scenario", env) == env_dir / "mine.scenario"
    assert resolve_scenario_path("baseline.scenario", env) == env_dir / "baseline.scenario"
    assert resolve_scenario_path("baseline.scenario", {}).parent.name == "scenarios"
    with pytest.raises(ScenarioError):
        resolve_scenario_path("missing.scenario", env)
    monkeypatch.setenv("THZWDC_CONFIG_DIR", str(env_dir))
    monkeypatch.chdir(tmp_path)
    assert load_scenario("mine.scenario").seed == 77


def test_traffic_file_relative_to_scenario(tmp_path):
    (tmp_path / "tm.csv").write_text("src,dst,bps\nr0,r1,5e9\n")
    (tmp_path / "s.scenario").write_text("traffic:\n  generator: file\n  file: tm.csv\n")
    sc = load_scenario(tmp_path / "s.scenario")
    phases = traffic_phases(sc, [f"r{i}" for i in range(16)])
    assert phases[0].demand == {("r0", "r1"): 5e9}


def test_uniform_traffic_spreads_total():
    sc = parse_scenario("racks: {count: 4, per_row: 2}\ntraffic: {generator: uniform, total_bps: 120e9}\n")
    phases = traffic_phases(sc, ["r0", "r1", "r2", "r3"])
    assert sum(phases[0].demand.values()) == pytest.approx(120e9)
    assert len(phases[0].demand) == 12


def test_json_safe_nan():
    assert json_safe({"a": float("nan"), "b": [1.0, float("inf")]}) == {"a": None, "b": [1.0, None]}


def test_baseline_matches_golden_files():
    sc = load_scenario("baseline.scenario")
    res = run_scenario(sc)
    assert res.digest == (GOLDEN / "baseline_digest.txt").read_text().strip()
    assert res.event_log_csv.encode() == (GOLDEN / "baseline_events.csv").read_bytes()
    assert res.metrics_json().encode() == (GOLDEN / "baseline_metrics.json").read_bytes()
    again = run_scenario(sc)
    assert again.event_log_csv == res.event_log_csv and again.reconfig_log_csv == res.reconfig_log_csv


def test_objective_changes_reconfiguration_log():
    sc = load_scenario("baseline.scenario")
    lat = run_scenario(sc)
    bw = run_scenario(sc.with_overrides(**{"orchestration.objective": "bandwidth"}))
    assert lat.reconfig_log_csv != bw.reconfig_log_csv
    assert lat.metrics.reconfigurations >= 1 and bw.metrics.reconfigurations >= 1
