import json

import pytest

from data_handler import (
    ConfigError, ConfigLoader, ExperimentConfig, ResultExporter, deep_merge, default_config,
    parse_override,
)
from main import build_parser, main, make_check
from outcome_classifier import OutcomeClassifier, Verdict


def _report(path):
    return json.loads((path / "report.json").read_text(encoding="utf-8"))


def _check(report, name):
    return next(c for c in report["checks"] if c["name"] == name)


def test_parse_override():
    assert parse_override("tower.N=3") == (["tower", "N"], 3)
    assert parse_override("map.kind=rotation") == (["map", "kind"], "rotation")
    assert parse_override("stages.a=[1, 2]") == (["stages", "a"], [1, 2])
    with pytest.raises(ConfigError):
        parse_override("tower.N")


def test_deep_merge_keeps_untouched_keys():
    merged = deep_merge({"tower": {"N": 5, "delta": 0.1}}, {"tower": {"N": 3}})
    assert merged == {"tower": {"N": 3, "delta": 0.1}}


def test_loader_reports_bad_files(tmp_path):
    loader = ConfigLoader()
    ok, msg = loader.load_file(str(tmp_path / "missing.json"))
    assert not ok
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]", encoding="utf-8")
    ok, msg = loader.load_file(str(bad))
    assert not ok
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"tower": {"N": 3}}), encoding="utf-8")
    ok, _ = loader.load_file(str(good))
    assert ok
    assert loader.get_config()["tower"]["N"] == 3
    assert loader.get_config()["tower"]["delta"] == 0.1


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"unknown": {}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"stages": {"a": [1, 2], "b": [3, 3]}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"matching": {"eps": -1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"tests": [{"kind": "monomial", "freq": [1, 2]}]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"tower": {"delta": 1.0}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"points": {"kind": "explicit", "coords": [[0.2], [0.2]]}})
    periodic = ExperimentConfig.from_dict({"map": {"theta": 0.3}})
    periodic.check_subcommand("match")
    with pytest.raises(ConfigError):
        periodic.check_subcommand("tower")
    config = ExperimentConfig.from_dict(default_config())
    assert "jobs" not in config.to_dict(for_report=True)
    assert len(config.build_tests()) == 3


def test_config_builds_points():
    config = ExperimentConfig.from_dict({"points": {"kind": "orbit", "n": 4}})
    assert len(config.build_points()) == 4
    config = ExperimentConfig.from_dict({"points": {"kind": "explicit", "coords": [[0.1], [0.6]]}})
    assert [p.coords for p in config.build_points()] == [(0.1,), (0.6,)]
    config = ExperimentConfig.from_dict({"points": {"kind": "spiral"}})
    with pytest.raises(ConfigError):
        config.build_points()


def test_classifier():
    classifier = OutcomeClassifier()
    ok = {"checks": [make_check("x", "op", 0.01, 0.1, "<")]}
    assert classifier.classify(ok) == (Verdict.OK, "")
    failed = {"checks": [make_check("x", "op", 0.2, 0.1, "<"), make_check("y", "op", 1, 0, "==")]}
    verdict, note = classifier.classify(failed)
    assert verdict is Verdict.PREDICATE_FAILED
    assert note.startswith("x: 0.2 non < 0.1 (op)")
    assert note.endswith("e altre 1")
    verdict, _ = classifier.classify({"checks": [], "pipeline_error": "NoMatchingError: ..."})
    assert verdict is Verdict.PIPELINE_FAILED
    assert classifier.exit_code(Verdict.CONFIG_ERROR) == 2
    assert classifier.classify({"checks": []})[1] == "Nessuna verifica configurata"


def test_parser_defaults():
    args = build_parser().parse_args(["match", "--set", "a=1", "--set", "b=2"])
    assert args.subcommand == "match"
    assert args.set == ["a=1", "b=2"]
    assert not args.excel


def test_ktheory_defaults_pass(tmp_path):
    assert main(["ktheory", "--out", str(tmp_path)]) == 0
    report = _report(tmp_path)
    assert report["passed"]
    assert report["results"]["first_failure"] is None
    assert report["results"]["furstenberg_k1"] == [[1, 0], [1, 1]]
    assert (tmp_path / "chain.csv").exists()


def test_ktheory_failing_chain(tmp_path):
    swap, two = [[0, 1], [1, 0]], [[2, 0], [0, 2]]
    args = ["ktheory", "--out", str(tmp_path),
            "--set", f"ktheory.h={json.dumps([swap, swap])}",
            "--set", f"ktheory.hbar={json.dumps([two, two])}",
            "--set", f"ktheory.kappa={json.dumps([two, two])}"]
    assert main(args) == 1
    report = _report(tmp_path)
    assert report["results"]["first_failure"]["identity"] == 2
    assert report["verdict"] == Verdict.PREDICATE_FAILED.value


def test_match_below_bottleneck_fails(tmp_path):
    args = ["match", "--out", str(tmp_path), "--set", "map.theta=0.3",
            "--set", "points.n=5", "--set", "matching.eps=0.09"]
    assert main(args) == 1
    report = _report(tmp_path)
    assert report["results"]["bottleneck"] == pytest.approx(0.1)
    assert report["results"]["matching_found"] is False
    assert not _check(report, "bottleneck")["passed"]


def test_match_defaults_pass(tmp_path):
    assert main(["match", "--out", str(tmp_path)]) == 0
    report = _report(tmp_path)
    assert report["results"]["bottleneck"] < 1 / 89
    assert _check(report, "measure_comparison_failures")["passed"]
    assert (tmp_path / "matching.csv").exists()


def test_tower_defaults_pass(tmp_path):
    assert main(["tower", "--out", str(tmp_path)]) == 0
    report = _report(tmp_path)
    assert report["results"]["tower"]["coverage"] >= 0.9
    assert not report["results"]["rokhlin"]["cyclic"]
    assert _check(report, "level_agreement")["passed"]
    assert report["results"]["level_agreement"] >= 0.9
    assert 0 <= report["results"]["closure_residual"] <= 1
    assert (tmp_path / "levels.csv").exists()


def test_config_errors_exit_with_two(tmp_path):
    out = tmp_path / "out"
    assert main(["tower", "--out", str(out), "--set", "stages.a=[0]"]) == 2
    assert main(["tower", "--out", str(out), "--set", "extra.key=1"]) == 2
    assert main(["tower", "--out", str(out), "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["tower", "--out", str(out), "--set", "tower.delta=1.5"]) == 2
    assert main(["tower", "--out", str(out), "--set", "map.theta=0.3"]) == 2
    duplicated = ["--set", "points.kind=explicit", "--set", "points.coords=[[0.1], [0.1], [0.5]]"]
    assert main(["match", "--out", str(out), *duplicated]) == 2
    assert not out.exists()


def test_pipeline_error_still_writes_report(tmp_path):
    args = ["intertwine", "--out", str(tmp_path), "--set", "map.theta=0.3",
            "--set", "stages.a=[1]", "--set", "stages.b=[6]", "--set", "stages.eps=[0.05]"]
    assert main(args) == 1
    report = _report(tmp_path)
    assert report["pipeline_error"].startswith("SampleSizeError")
    assert report["verdict"] == Verdict.PIPELINE_FAILED.value


def test_reports_are_reproducible(tmp_path):
    small = ["--set", "stages.a=[1, 1]", "--set", "stages.b=[90, 145]"]
    first, second = tmp_path / "one", tmp_path / "two"
    assert main(["intertwine", "--out", str(first), "--jobs", "1", *small]) == 0
    assert main(["intertwine", "--out", str(second), "--jobs", "2", *small]) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    assert (first / "manifest.json").exists()
    assert _check(_report(first), "replay_identical")["passed"]


def test_trace_subcommand(tmp_path):
    small = ["--set", "stages.a=[1, 1]", "--set", "stages.b=[90, 145]"]
    assert main(["trace", "--out", str(tmp_path), *small]) == 0
    report = _report(tmp_path)
    assert [row["n"] for row in report["results"]["trace"]] == [1, 2]


def test_excel_export(tmp_path):
    exporter = ResultExporter(str(tmp_path))
    report = {"subcommand": "match", "verdict": "OK", "seed": 0, "pipeline_error": None,
              "checks": [make_check("bottleneck", "matching.min_bottleneck", 0.001, 0.02, "<")]}
    ok, path = exporter.export_excel(report)
    assert ok
    assert (tmp_path / "report.xlsx").exists()
    ok, _ = exporter.export_table([], "empty.csv")
    assert not ok
