"""
Rokhlin Model Checker - Command Line Application
================================================
Esegue le pipeline di verifica come sottocomandi con configurazione JSON,
override da riga di comando e report leggibili dalla macchina.

Sottocomandi:
- match:      bottleneck matching sotto ψ e confronto di misure
- tower:      torre di Rokhlin e verifica tracciale (ciclica)
- intertwine: intertwiner multi-stadio con manifest riproducibile
- trace:      traccia di stadio e invarianza per ψ
- ktheory:    mappe standard, quadrati di intertwining, K₁ di Furstenberg
"""

import argparse
import json
import logging
import operator
import os
import sys
from typing import Any, Callable, Optional

from data_handler import REPORT_SCHEMA, ConfigError, ConfigLoader, ExperimentConfig, ResultExporter
from dynamics import DimensionError, MinimalMap, TorusPoint, apply, dist
from ktheory import (
    AliasingError, LimitGroupModel, OpenLoopError, ShapeError, SummandError,
    IDENTITY_LABELS, check_intertwining_squares, compose_standard, furstenberg_k1,
    induced_limit_map, k1_from_windings, standard_map, winding_vector,
)
from limitalg import (
    NoMatchingError, StageModel, build_intertwiners, replay_manifest, run_manifest,
    stage_trace, trace_invariance_gap,
)
from matalg import ConvergenceError, matrix_rows
from matching import find_matching, matching_defect, min_bottleneck
from measure import ClosedArcSet, EmpiricalMeasure, SampleSizeError, check_measure_comparison
from outcome_classifier import OutcomeClassifier, Verdict
from parallel_runner import EvaluationStopped, ParallelEvaluator
from tower import TowerCoverageError, run_rokhlin_pipeline, verify_tower

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("match", "tower", "intertwine", "trace", "ktheory")
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
COMPARISON_GRID = 20

RELATIONS: dict[str, Callable[[Any, Any], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    ">": operator.gt,
    ">=": operator.ge,
}

PIPELINE_ERRORS = (
    NoMatchingError, TowerCoverageError, SampleSizeError, AliasingError, OpenLoopError,
    ShapeError, SummandError, ConvergenceError, EvaluationStopped, DimensionError,
)


def make_check(name: str, operation: str, value, threshold, relation: str,
               passed: Optional[bool] = None) -> dict:
    """Una verifica del report: il valore misurato, la soglia e l'operazione che lo ha prodotto"""
    if passed is None:
        passed = RELATIONS[relation](value, threshold)
    return {
        "name": name,
        "operation": operation,
        "value": value,
        "threshold": threshold,
        "relation": relation,
        "passed": bool(passed),
    }


def _progress(message: str, done: int, total: int) -> None:
    logger.info("%s (%d/%d)", message, done, total)


class ExperimentRunner:
    """Esegue un sottocomando e raccoglie verifiche, risultati e tabelle"""

    def __init__(self, config: ExperimentConfig, exporter: ResultExporter):
        self.config = config
        self.exporter = exporter
        self.evaluator = ParallelEvaluator(config.jobs)
        self.checks: list[dict] = []
        self.results: dict[str, Any] = {}
        self.tables: dict[str, list[dict]] = {}

    def check(self, *args, **kwargs) -> dict:
        entry = make_check(*args, **kwargs)
        self.checks.append(entry)
        return entry

    def run(self, subcommand: str) -> dict:
        handler = getattr(self, f"_run_{subcommand}")
        pipeline_error = None
        try:
            handler()
        except PIPELINE_ERRORS as e:
            pipeline_error = f"{type(e).__name__}: {e}"
            logger.error("Pipeline interrotta: %s", pipeline_error)
            if isinstance(e, NoMatchingError):
                self.results["failed_stage"] = {"stage": e.stage, "threshold": e.threshold, "bottleneck": e.bottleneck}
            if isinstance(e, TowerCoverageError):
                self.results["achieved_coverage"] = float(e.coverage)

        report = {
            "schema": REPORT_SCHEMA,
            "subcommand": subcommand,
            "config": self.config.to_dict(for_report=True),
            "seed": self.config.seed,
            "checks": self.checks,
            "results": self.results,
            "pipeline_error": pipeline_error,
        }
        classifier = OutcomeClassifier()
        verdict, note = classifier.classify(report)
        report["verdict"] = verdict.value
        report["note"] = note
        report["passed"] = verdict is Verdict.OK
        return report

    # --- match -----------------------------------------------------------

    def _run_match(self):
        map_ = self.config.build_map()
        points = self.config.build_points()
        eps = float(self.config.matching["eps"])

        bottleneck, optimal = min_bottleneck(points, map_)
        self.results.update({
            "n": len(points),
            "bottleneck": bottleneck,
            "permutation": optimal.to_json(),
            "cycles": len(optimal.cycles()),
        })
        self.check("bottleneck", "matching.min_bottleneck", bottleneck, eps, "<")

        s = find_matching(points, map_, eps)
        self.results["matching_found"] = s is not None
        if s is not None:
            self.check("matching_defect", "matching.find_matching", matching_defect(points, map_, s), eps, "<")

        chosen = s or optimal
        self.tables["points.csv"] = EmpiricalMeasure(tuple(points)).to_rows()
        self.tables["matching.csv"] = [
            {"j": j, "s_j": chosen(j), "distance": dist(points[j], apply(map_, points[chosen(j)]))}
            for j in range(len(points))
        ]

        if map_.dim == 1:
            arcs = [
                ClosedArcSet.arc(i / COMPARISON_GRID, j / COMPARISON_GRID)
                for i in range(COMPARISON_GRID) for j in range(i, COMPARISON_GRID + 1)
            ] + [ClosedArcSet.whole()]
            comparison = check_measure_comparison(EmpiricalMeasure(tuple(points)), map_, eps, arcs)
            self.results["measure_comparison"] = {"sets": len(arcs), "failures": len(comparison.failures)}
            self.check("measure_comparison_failures", "measure.check_measure_comparison",
                       len(comparison.failures), 0, "==")

    # --- tower -----------------------------------------------------------

    def _run_tower(self):
        t = self.config.tower
        map_ = self.config.build_map()
        tests = self.config.build_tests()
        N, delta, eta, eps = int(t["N"]), float(t["delta"]), float(t["eta"]), float(t["eps"])

        result = run_rokhlin_pipeline(map_, N, delta, eta, eps, tests, int(t["min_points"]),
                                      bool(t.get("cyclic", False)), progress_callback=_progress)
        tower = result.tower
        verification = verify_tower(tower)
        rokhlin = result.report

        self.check("coverage", "tower.build_tower", float(tower.coverage), 1 - delta, ">")
        self.check("level_overlap", "tower.verify_tower", float(verification.overlap), 0.0, "==")
        self.check("inner_sets", "tower.verify_tower", verification.inner_ok, True, "==")
        self.check("bump_violations", "tower.tower_projections", result.family.bump_violations(tower), 0, "==")
        self.check("level_agreement", "tower.tower_projections", float(result.family.agreement), 1 - delta, ">=",
                   passed=result.levels_ok)
        self.check("commutator", "tower.check_tracial_rokhlin", float(rokhlin.commutator), eps, "<")
        self.check("shift_defect", "tower.check_tracial_rokhlin", float(rokhlin.shift_defect), eps, "<")
        self.check("residual_trace", "tower.check_tracial_rokhlin", float(rokhlin.residual_trace), eps, "<")

        self.results.update({
            "tower": tower.to_json(),
            "verification": {
                "exact": verification.exact,
                "resolution": verification.resolution,
                "overlap": float(verification.overlap),
                "inner_ok": verification.inner_ok,
            },
            "n": result.n,
            "attempts": [[n, ok] for n, ok in result.attempts],
            "ranks": [int(r) for r in result.family.ranks],
            "level_agreement": float(result.family.agreement),
            "closure_residual": float(result.closure_residual),
            "rokhlin": rokhlin.to_json(),
        })

        rows = []
        for i, (box, sbox) in enumerate(zip(tower.bases, tower.inner)):
            row = {"index": i}
            for c, (arc, s) in enumerate(zip(box, sbox)):
                row.update({f"g_lo_{c + 1}": float(arc.lo), f"g_hi_{c + 1}": float(arc.hi),
                            f"s_lo_{c + 1}": float(s.lo), f"s_hi_{c + 1}": float(s.hi)})
            rows.append(row)
        self.tables["tower_bases.csv"] = rows
        self.tables["levels.csv"] = result.family.to_rows()

    # --- intertwine / trace ----------------------------------------------

    def _stage_run(self):
        stages = self.config.stages
        map_ = self.config.build_map()
        tests = self.config.build_tests()
        eps = stages.get("eps") or [2.0 ** -(n + 1) for n in range(len(stages["a"]))]
        model = StageModel.build(map_, stages["a"], stages["b"], tests, eps)
        report = build_intertwiners(model, map_, tests, eps, self.evaluator, _progress)
        return map_, tests, eps, model, report

    def _run_intertwine(self):
        map_, tests, eps, model, report = self._stage_run()
        for stage in report.stages:
            self.check(f"stage_{stage.stage}_defect", "limitalg.build_intertwiners", stage.defect, stage.eps, "<")
            self.check(f"stage_{stage.stage}_certificate", "matalg.modulus_defect_bound",
                       stage.defect, stage.certificate, "<=", passed=stage.certified)
        self.check("telescoped_defect", "limitalg.build_intertwiners", report.telescoped, report.eps_total, "<")

        manifest = run_manifest(model, map_, tests, eps, report, self.config.seed)
        ok, msg = self.exporter.export_report(manifest, "manifest.json")
        if not ok:
            logger.warning(msg)
        if self.config.intertwine.get("replay", True):
            replayed = replay_manifest(manifest, self.evaluator)
            identical = json.dumps(replayed, sort_keys=True) == json.dumps(manifest, sort_keys=True)
            self.check("replay_identical", "limitalg.replay_manifest", identical, True, "==")

        self.results.update({
            "k": [model.k(n) for n in range(model.stages + 1)],
            "stages": [s.to_json() for s in report.stages],
            "telescoped": report.telescoped,
            "telescoped_bound": report.telescoped_bound,
            "eps_total": report.eps_total,
        })
        self.tables["stages.csv"] = [
            {key: value for key, value in s.to_json().items() if key != "permutation"}
            for s in report.stages
        ]

    def _run_trace(self):
        map_, _, _, model, report = self._stage_run()
        trace = self.config.trace
        f = self.config.build_trace_function()
        m = int(trace.get("m", 0))
        basepoint = TorusPoint(tuple(float(c) for c in trace["basepoint"]))
        bottlenecks = [s.bottleneck for s in report.stages]
        t = f.trace_polynomial()
        integral = t.mean

        rows = []
        for n in range(m + 1, model.stages + 1):
            value, oscillation = stage_trace(f, model, m, n, basepoint)
            error = abs(value - integral)
            threshold = model.a[n - 1] / model.b[n - 1] * max(t.deviation, 1.0) + t.modulus(bottlenecks[n - 1])
            self.check(f"trace_error_{n}", "limitalg.stage_trace", error, threshold, "<")
            gap = trace_invariance_gap(f, model, map_, m, n, basepoint, bottlenecks)
            self.check(f"invariance_gap_{n}", "limitalg.trace_invariance_gap", gap.gap, gap.bound, "<=",
                       passed=gap.passed)
            rows.append({
                "n": n,
                "value_re": value.real,
                "value_im": value.imag,
                "oscillation_bound": oscillation,
                "integral_re": integral.real,
                "integral_im": integral.imag,
                "error": error,
                "threshold": threshold,
                "gap": gap.gap,
                "gap_bound": gap.bound,
            })
        self.results["trace"] = rows
        self.tables["trace.csv"] = rows

    # --- ktheory ---------------------------------------------------------

    def _run_ktheory(self):
        spec = self.config.build_ktheory()

        if spec["h"]:
            chain = check_intertwining_squares(spec["h"], spec["hbar"], spec["kappa"])
            failure = chain.first_failure
            self.check("intertwining_squares", "ktheory.check_intertwining_squares", chain.passed, True, "==")
            self.results["first_failure"] = None if failure is None else {
                "index": failure.index, "identity": failure.identity, "label": IDENTITY_LABELS[failure.identity],
            }
            self.tables["chain.csv"] = [
                {"index": c.index, "identity": c.identity, "label": IDENTITY_LABELS[c.identity], "passed": c.passed}
                for c in chain.checks
            ]

        if spec["compose"]:
            m1, m2 = spec["compose"]
            composed = compose_standard(standard_map(m2), standard_map(m1))
            windings = [
                [row[0] for row in winding_vector(composed.loop(c), circles=composed.target_circles).rows]
                for c in range(composed.source_circles)
            ]
            expected = [list(col) for col in zip(*composed.matrix.rows)]
            self.check("composition_windings", "ktheory.compose_standard", windings == expected, True, "==")
            self.results["composition"] = composed.matrix.to_json()
            self.tables["matrices.csv"] = matrix_rows(composed.matrix.to_json())

        if spec["limit"]:
            limit = spec["limit"]
            stages = self.config.stages
            model = LimitGroupModel(limit["rank00"], limit["rank1"], tuple(stages["a"]), tuple(stages["b"]))
            induced = induced_limit_map(limit["gamma0"], limit["gamma1"], model)
            self.check("induced_limit_map", "ktheory.induced_limit_map", induced.commutes, True, "==")
            self.results["limit"] = {"commutes": induced.commutes, "identity": induced.is_identity, "k": model.k}

        fspec = spec["furstenberg"]
        if fspec:
            d = [int(v) for v in fspec["d"]]
            map_ = MinimalMap.furstenberg(float(fspec.get("theta", self.config.map["theta"])), d)
            expected = furstenberg_k1(d, map_.dim)
            measured = k1_from_windings(map_)
            self.check("furstenberg_k1", "ktheory.furstenberg_k1", measured == expected, True, "==")
            self.results["furstenberg_k1"] = expected.to_json()


def run(subcommand: str, config: ExperimentConfig, excel: bool = False) -> int:
    """Esegue il sottocomando, scrive report e tabelle e restituisce il codice di uscita"""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"Sottocomando sconosciuto: {subcommand}")
    exporter = ResultExporter(config.out_dir)
    runner = ExperimentRunner(config, exporter)
    report = runner.run(subcommand)

    ok, msg = exporter.export_report(report)
    if ok:
        logger.info("Report: %s", msg)
    else:
        logger.error(msg)
    for name, rows in runner.tables.items():
        ok, msg = exporter.export_table(rows, name)
        if not ok:
            logger.warning(msg)
    if excel:
        ok, msg = exporter.export_excel(report)
        if not ok:
            logger.warning(msg)

    classifier = OutcomeClassifier()
    verdict = Verdict(report["verdict"])
    logger.info("Esito %s: %s %s", subcommand, verdict.value, report["note"])
    return classifier.exit_code(verdict)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rokhlin",
        description="Verifica numerica di costruzioni di Rokhlin tracciali su modelli finiti",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="file JSON di configurazione")
    parser.add_argument("--set", action="append", default=[], metavar="K=V",
                        help="override chiave.puntata=valore (valore JSON o stringa)")
    parser.add_argument("--out", help="directory di output")
    parser.add_argument("--seed", type=int, help="seed registrato nel report")
    parser.add_argument("--jobs", type=int, help="worker per le valutazioni parallele")
    parser.add_argument("--excel", action="store_true", help="esporta anche report.xlsx")
    parser.add_argument("--verbose", "-v", action="store_true", help="log di debug")
    return parser


def setup_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else os.getenv("ROKHLIN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv: Optional[list[str]] = None) -> int:
    """Entry point della riga di comando"""
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    classifier = OutcomeClassifier()
    config_error = classifier.exit_code(Verdict.CONFIG_ERROR)

    try:
        loader = ConfigLoader()
    except ConfigError as e:
        logger.error(str(e))
        return config_error
    if args.config:
        ok, msg = loader.load_file(args.config)
        if not ok:
            logger.error(msg)
            return config_error
        logger.info(msg)
    ok, msg = loader.apply_overrides(args.set)
    if not ok:
        logger.error(msg)
        return config_error

    data = loader.get_config()
    for key, value in (("out_dir", args.out), ("seed", args.seed), ("jobs", args.jobs)):
        if value is not None:
            data[key] = value
    try:
        config = ExperimentConfig.from_dict(data)
        config.check_subcommand(args.subcommand)
    except ConfigError as e:
        logger.error(str(e))
        return config_error

    return run(args.subcommand, config, excel=args.excel)


if __name__ == "__main__":
    sys.exit(main())
