"""
Rokhlin Model Checker - Data Handler Module
===========================================
Gestisce il caricamento della configurazione degli esperimenti e
l'esportazione dei risultati (JSON, CSV, Excel).
"""

import copy
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import pandas as pd
from dotenv import load_dotenv

from dynamics import GOLDEN_THETA, DimensionError, MinimalMap, PhasePolynomial, TorusPoint, orbit
from ktheory import IntMatrix
from matalg import MatrixFunction, TrigPolynomial
from measure import epsilon_dense_sample, grid_points

load_dotenv()

logger = logging.getLogger(__name__)

REPORT_SCHEMA = 1


class ConfigError(ValueError):
    """Configurazione che non si traduce in oggetti validi"""


def _identity(n: int) -> list[list[int]]:
    return [[int(i == j) for j in range(n)] for i in range(n)]


DEFAULT_CONFIG: dict[str, Any] = {
    "map": {"kind": "rotation", "theta": GOLDEN_THETA, "exponents": [], "phases": []},
    "points": {"kind": "grid", "n": 89},
    "matching": {"eps": 0.02},
    "tests": [
        {"kind": "monomial", "freq": [1]},
        {"kind": "monomial", "freq": [2]},
        {"kind": "constant", "value": 1.0},
    ],
    "stages": {"a": [1, 1, 1, 1], "b": [90, 145, 234, 378], "eps": None},
    "tower": {"N": 5, "delta": 0.1, "eta": 0.02, "eps": 0.1, "cyclic": False, "min_points": 233},
    "trace": {"function": {"kind": "monomial", "freq": [1]}, "m": 0, "basepoint": [0.0]},
    "intertwine": {"replay": True},
    "ktheory": {
        "h": [_identity(2)] * 3,
        "hbar": [_identity(2)] * 3,
        "kappa": [_identity(2)] * 3,
        "compose": [[[1, 0], [1, 1]], [[1, 1], [0, 1]]],
        "limit": {"rank00": 1, "rank1": 2, "gamma0": _identity(2), "gamma1": _identity(2)},
        "furstenberg": {"theta": GOLDEN_THETA, "d": [1]},
    },
}


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} deve essere un intero: {raw!r}")


def default_config() -> dict:
    """Default interni più i valori d'ambiente (ROKHLIN_SEED, ROKHLIN_JOBS, ROKHLIN_OUT_DIR)"""
    config = copy.deepcopy(DEFAULT_CONFIG)
    config["seed"] = _env_int("ROKHLIN_SEED", 0)
    config["jobs"] = _env_int("ROKHLIN_JOBS", 1)
    config["out_dir"] = os.getenv("ROKHLIN_OUT_DIR", "results")
    return config


def deep_merge(base: dict, override: dict) -> dict:
    """Unione ricorsiva: i dizionari si fondono, il resto viene sostituito"""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = deep_merge(result[key], value)
        else:
            result[key] = copy.deepcopy(value)
    return result


def parse_override(text: str) -> tuple[list[str], Any]:
    """'a.b.c=valore' con valore JSON, oppure stringa semplice"""
    if "=" not in text:
        raise ConfigError(f"Override senza '=': {text!r}")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"Chiave vuota nell'override {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


class ConfigLoader:
    """Carica la configurazione da file JSON e applica gli override"""

    def __init__(self):
        self._config = default_config()
        self.config_file: Optional[Path] = None

    def load_file(self, file_path: str) -> tuple[bool, str]:
        """Carica un file di configurazione e lo fonde con i default."""
        path = Path(file_path)
        if not path.exists():
            return False, f"File non trovato: {path}"
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            return False, f"Errore lettura configurazione: {e}"
        if not isinstance(data, dict):
            return False, f"La configurazione deve essere un oggetto JSON, trovato {type(data).__name__}"
        self._config = deep_merge(self._config, data)
        self.config_file = path
        return True, f"Configurazione caricata da {path} ({len(data)} sezioni)"

    def apply_overrides(self, overrides: list[str]) -> tuple[bool, str]:
        """Applica gli override --set chiave.puntata=valore"""
        try:
            for text in overrides:
                path, value = parse_override(text)
                node = self._config
                for key in path[:-1]:
                    if not isinstance(node.get(key), dict):
                        node[key] = {}
                    node = node[key]
                node[path[-1]] = value
        except ConfigError as e:
            return False, str(e)
        return True, f"Applicati {len(overrides)} override"

    def get_config(self) -> dict:
        return copy.deepcopy(self._config)


def _poly(spec: dict, dim: int) -> TrigPolynomial:
    kind = spec.get("kind")
    if kind == "monomial":
        freq = list(spec["freq"])
        if len(freq) != dim:
            raise ConfigError(f"Frequenza {freq} in dimensione {dim}")
        return TrigPolynomial.monomial(freq, complex(spec.get("coeff", 1.0)))
    if kind == "constant":
        return TrigPolynomial.constant(dim, complex(spec.get("value", 1.0)))
    if kind == "polynomial":
        return TrigPolynomial.from_json({"dim": dim, "terms": spec["terms"]})
    raise ConfigError(f"Tipo di funzione test sconosciuto: {kind!r}")


def build_function(spec: dict, dim: int) -> MatrixFunction:
    """Descrittore → MatrixFunction (scalare, o 'matrix' con entrate descritte)"""
    if spec.get("kind") == "matrix":
        entries = tuple(tuple(_poly(e, dim) for e in row) for row in spec["entries"])
        return MatrixFunction(entries)
    return MatrixFunction.scalar(_poly(spec, dim))


@dataclass
class ExperimentConfig:
    """Configurazione validata di un esperimento"""
    map: dict
    points: dict
    matching: dict
    tests: list
    stages: dict
    tower: dict
    trace: dict
    intertwine: dict
    ktheory: dict
    seed: int = 0
    out_dir: str = "results"
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        merged = deep_merge(default_config(), data)
        unknown = set(merged) - {
            "map", "points", "matching", "tests", "stages", "tower", "trace",
            "intertwine", "ktheory", "seed", "out_dir", "jobs",
        }
        if unknown:
            raise ConfigError(f"Sezioni sconosciute: {sorted(unknown)}")
        try:
            config = cls(
                map=merged["map"], points=merged["points"], matching=merged["matching"],
                tests=list(merged["tests"]), stages=merged["stages"], tower=merged["tower"],
                trace=merged["trace"], intertwine=merged["intertwine"], ktheory=merged["ktheory"],
                seed=int(merged["seed"]), out_dir=str(merged["out_dir"]), jobs=int(merged["jobs"]),
            )
            config.validate()
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Configurazione non valida: {e}") from e
        return config

    def to_dict(self, for_report: bool = False) -> dict:
        """Nel report mancano jobs e out_dir: l'esito non dipende da loro"""
        data = {
            "map": self.map, "points": self.points, "matching": self.matching,
            "tests": self.tests, "stages": self.stages, "tower": self.tower,
            "trace": self.trace, "intertwine": self.intertwine, "ktheory": self.ktheory,
            "seed": self.seed,
        }
        if not for_report:
            data.update(out_dir=self.out_dir, jobs=self.jobs)
        return copy.deepcopy(data)

    def validate(self) -> None:
        """Ricostruisce gli oggetti dei moduli: ogni vincolo viene ricontrollato"""
        if self.jobs < 1:
            raise ConfigError(f"jobs deve essere ≥ 1: {self.jobs}")
        if self.seed < 0:
            raise ConfigError(f"seed deve essere non negativo: {self.seed}")
        map_ = self.build_map()
        self.build_tests()
        self.build_trace_function()
        eps = self.matching.get("eps")
        if not isinstance(eps, (int, float)) or eps <= 0:
            raise ConfigError(f"matching.eps deve essere positivo: {eps!r}")
        a, b = self.stages.get("a", []), self.stages.get("b", [])
        if len(a) != len(b) or not a:
            raise ConfigError(f"stages.a e stages.b devono avere la stessa lunghezza non nulla: {a}, {b}")
        for n, (an, bn) in enumerate(zip(a, b)):
            if int(bn) < 2 or int(an) < 1 or int(bn) - int(an) < 1:
                raise ConfigError(f"Stadio {n}: serve b ≥ 2, a ≥ 1, b − a ≥ 1 (a={an}, b={bn})")
        for n in range(len(a) - 1):
            if a[n + 1] * b[n] > a[n] * b[n + 1]:
                raise ConfigError(f"a_n/b_n deve essere non crescente (stadi {n} e {n + 1})")
        stage_eps = self.stages.get("eps")
        if stage_eps is not None and (len(stage_eps) != len(a) or any(e <= 0 for e in stage_eps)):
            raise ConfigError(f"stages.eps deve contenere {len(a)} valori positivi: {stage_eps}")
        tower = self.tower
        if int(tower["N"]) < 1:
            raise ConfigError(f"tower.N deve essere ≥ 1: {tower['N']}")
        for key in ("delta", "eta", "eps"):
            if not 0 < float(tower[key]):
                raise ConfigError(f"tower.{key} deve essere positivo: {tower[key]}")
        if not float(tower["delta"]) < 1:
            raise ConfigError(f"tower.delta deve stare in (0, 1): {tower['delta']}")
        if not 0 <= int(self.trace.get("m", 0)) < len(a):
            raise ConfigError(f"trace.m deve stare in 0..{len(a) - 1}")
        if len(self.trace.get("basepoint", [])) != map_.dim:
            raise ConfigError(f"trace.basepoint deve avere {map_.dim} coordinate")
        if self.points.get("kind") == "explicit":
            self.build_points()
        self.build_ktheory()

    def check_subcommand(self, subcommand: str) -> None:
        """Vincoli che dipendono dal sottocomando: la torre richiede una mappa minimale"""
        if subcommand == "tower" and not self.build_map().minimal:
            raise ConfigError(f"Il sottocomando tower richiede una mappa minimale: {self.map}")

    def build_map(self) -> MinimalMap:
        spec = self.map
        try:
            phases = tuple(PhasePolynomial.from_json(p) for p in spec.get("phases", []))
            return MinimalMap(spec.get("kind", "rotation"), spec["theta"], tuple(spec.get("exponents", [])), phases)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Mappa non valida: {e}") from e

    def build_points(self) -> list[TorusPoint]:
        """Punti del sottocomando match: grid, explicit, dense o orbit"""
        map_ = self.build_map()
        spec = self.points
        kind = spec.get("kind")
        try:
            if kind == "grid":
                return grid_points(map_.dim, int(spec["n"]))
            if kind == "explicit":
                points = [TorusPoint(tuple(float(c) for c in p)) for p in spec["coords"]]
                if any(p.dim != map_.dim for p in points):
                    raise DimensionError(f"Punti di dimensione diversa da {map_.dim}")
                if len(set(points)) != len(points):
                    raise ConfigError("I punti espliciti devono essere distinti")
                return points
            if kind == "dense":
                sizes = spec.get("sizes") or [spec["n"]]
                return list(epsilon_dense_sample(map_, float(spec["eps"]), sizes).support)
            if kind == "orbit":
                start = TorusPoint(tuple(float(c) for c in spec.get("start", [0.0] * map_.dim)))
                return orbit(map_, start, int(spec["n"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Punti non validi: {e}") from e
        raise ConfigError(f"Tipo di punti sconosciuto: {kind!r}")

    def build_tests(self) -> list[MatrixFunction]:
        dim = self.build_map().dim
        try:
            return [build_function(spec, dim) for spec in self.tests]
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Funzione test non valida: {e}") from e

    def build_trace_function(self) -> MatrixFunction:
        dim = self.build_map().dim
        try:
            return build_function(self.trace["function"], dim)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Funzione di traccia non valida: {e}") from e

    def build_ktheory(self) -> dict:
        """Matrici intere della sezione ktheory"""
        spec = self.ktheory
        try:
            chain = {key: [IntMatrix.from_json(m) for m in spec.get(key, [])] for key in ("h", "hbar", "kappa")}
            compose = [IntMatrix.from_json(m) for m in spec.get("compose", [])]
            limit = spec.get("limit")
            if limit:
                limit = {
                    "rank00": int(limit["rank00"]),
                    "rank1": int(limit["rank1"]),
                    "gamma0": IntMatrix.from_json(limit["gamma0"]),
                    "gamma1": IntMatrix.from_json(limit["gamma1"]),
                }
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Sezione ktheory non valida: {e}") from e
        if compose and len(compose) != 2:
            raise ConfigError(f"ktheory.compose richiede due matrici, ricevute {len(compose)}")
        return {**chain, "compose": compose, "limit": limit, "furstenberg": spec.get("furstenberg")}


class ResultExporter:
    """Esporta report e tabelle nella directory di output"""

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = Path(output_dir or os.getenv("ROKHLIN_OUT_DIR", "results"))

    def _ensure_dir(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def export_report(self, report: dict, name: str = "report.json") -> tuple[bool, str]:
        """JSON con chiavi ordinate: esecuzioni ripetute danno byte identici"""
        try:
            self._ensure_dir()
            path = self.output_dir / name
            path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
            return True, str(path)
        except (OSError, TypeError, ValueError) as e:
            return False, f"Errore esportazione report: {e}"

    def export_table(self, rows: list[dict], name: str) -> tuple[bool, str]:
        if not rows:
            return False, f"Nessuna riga da esportare per {name}"
        try:
            self._ensure_dir()
            path = self.output_dir / name
            pd.DataFrame(rows).to_csv(path, index=False)
            return True, str(path)
        except OSError as e:
            return False, f"Errore esportazione {name}: {e}"

    def export_matrix(self, rows: list[dict], name: str) -> tuple[bool, str]:
        """Matrici come righe (row, col, re, im), vedi matalg.matrix_rows"""
        return self.export_table(rows, name)

    def export_measure(self, mu, name: str = "points.csv") -> tuple[bool, str]:
        return self.export_table(mu.to_rows(), name)

    def export_excel(self, report: dict, name: str = "report.xlsx") -> tuple[bool, str]:
        """Foglio 'Verifiche' con esito colorato e foglio 'Riepilogo'"""
        checks = report.get("checks", [])
        if not checks and not report.get("pipeline_error"):
            return False, "Nessuna verifica da esportare"
        try:
            self._ensure_dir()
            path = self.output_dir / name
            data = [{
                "Verifica": c["name"],
                "Operazione": c["operation"],
                "Valore": c["value"],
                "Relazione": c["relation"],
                "Soglia": c["threshold"],
                "Esito": "OK" if c["passed"] else "KO",
            } for c in checks]
            df = pd.DataFrame(data, columns=["Verifica", "Operazione", "Valore", "Relazione", "Soglia", "Esito"])

            with pd.ExcelWriter(path, engine="xlsxwriter") as writer:
                df.to_excel(writer, index=False, sheet_name="Verifiche")

                workbook = writer.book
                worksheet = writer.sheets["Verifiche"]

                header_format = workbook.add_format({
                    "bold": True,
                    "bg_color": "#0066CC",
                    "font_color": "white",
                    "border": 1,
                    "align": "center",
                    "valign": "vcenter",
                })
                ok_format = workbook.add_format({"bg_color": "#C6EFCE", "font_color": "#006100", "border": 1})
                ko_format = workbook.add_format({"bg_color": "#FFC7CE", "font_color": "#9C0006", "border": 1})

                for col_num, value in enumerate(df.columns.values):
                    worksheet.write(0, col_num, value, header_format)

                column_widths = {"Verifica": 28, "Operazione": 30, "Valore": 16,
                                 "Relazione": 10, "Soglia": 16, "Esito": 8}
                for col_num, col_name in enumerate(df.columns):
                    worksheet.set_column(col_num, col_num, column_widths.get(col_name, 12))

                if len(df):
                    esito_col = df.columns.get_loc("Esito")
                    worksheet.conditional_format(1, esito_col, len(df), esito_col, {
                        "type": "cell", "criteria": "==", "value": '"OK"', "format": ok_format,
                    })
                    worksheet.conditional_format(1, esito_col, len(df), esito_col, {
                        "type": "cell", "criteria": "!=", "value": '"OK"', "format": ko_format,
                    })
                    worksheet.autofilter(0, 0, len(df), len(df.columns) - 1)
                worksheet.freeze_panes(1, 0)

                summary = pd.DataFrame({
                    "Metrica": ["Sottocomando", "Verdetto", "Verifiche", "Superate", "Fallite",
                                "Errore pipeline", "Seed"],
                    "Valore": [
                        report.get("subcommand", ""),
                        report.get("verdict", ""),
                        len(checks),
                        sum(1 for c in checks if c["passed"]),
                        sum(1 for c in checks if not c["passed"]),
                        report.get("pipeline_error") or "-",
                        report.get("seed", ""),
                    ],
                })
                summary.to_excel(writer, index=False, sheet_name="Riepilogo")
                ws_summary = writer.sheets["Riepilogo"]
                for col_num, value in enumerate(summary.columns.values):
                    ws_summary.write(0, col_num, value, header_format)
                ws_summary.set_column(0, 0, 20)
                ws_summary.set_column(1, 1, 40)

            return True, str(path)
        except (OSError, ValueError) as e:
            return False, f"Errore esportazione Excel: {e}"
