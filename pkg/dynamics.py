"""
Rokhlin Model Checker - Dynamics Module
=======================================
Spazio X = T^k (coordinate in giri, modulo 1), metrica del massimo delle
distanze circolari e omeomorfismi minimali: rotazioni e trasformazioni
di Furstenberg in forma angolare.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

WRAP_CLAMP = 1e-15
GOLDEN_THETA = (math.sqrt(5.0) - 1.0) / 2.0

# Soglie per considerare θ razionale (mappa periodica, non minimale)
RATIONAL_DENOMINATOR_CAP = 1000
RATIONAL_TOLERANCE = 1e-12


class DimensionError(ValueError):
    """Dimensioni incompatibili tra punti e mappe"""


class MapKind(Enum):
    """Famiglie di omeomorfismi supportate"""
    ROTATION = "rotation"
    FURSTENBERG = "furstenberg"


def wrap(value):
    """Riduce modulo 1 in [0,1); i valori a meno di 1e-15 da 1 diventano 0."""
    r = value % 1
    if r >= 1 - WRAP_CLAMP:
        return r * 0
    return r


def wrap_array(values: np.ndarray) -> np.ndarray:
    """Versione vettoriale di wrap()"""
    r = np.mod(values, 1.0)
    r[r >= 1.0 - WRAP_CLAMP] = 0.0
    return r


def circle_distance(a: float, b: float) -> float:
    """Distanza sul cerchio R/Z"""
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def circle_distance_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.mod(np.abs(a - b), 1.0)
    return np.minimum(d, 1.0 - d)


def looks_rational(theta: float) -> bool:
    """True se θ coincide (a 1e-12) con una frazione di denominatore ≤ 1000"""
    approx = Fraction(theta).limit_denominator(RATIONAL_DENOMINATOR_CAP)
    return abs(float(approx) - theta) < RATIONAL_TOLERANCE


@dataclass(frozen=True)
class TorusPoint:
    """Punto di T^k: k coordinate in [0,1)"""
    coords: tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in self.coords)
        if not coords:
            raise ValueError("Un punto del toro richiede almeno una coordinata")
        for c in coords:
            if math.isnan(c) or not (0.0 <= c < 1.0):
                raise ValueError(f"Coordinata fuori da [0,1): {c}")
        object.__setattr__(self, "coords", coords)

    @classmethod
    def of(cls, *coords: float) -> "TorusPoint":
        """Costruisce il punto riducendo le coordinate modulo 1"""
        return cls(tuple(wrap(float(c)) for c in coords))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def to_json(self) -> list[float]:
        return list(self.coords)

    @classmethod
    def from_json(cls, data: Sequence[float]) -> "TorusPoint":
        return cls(tuple(data))


@dataclass(frozen=True)
class PhasePolynomial:
    """
    Polinomio trigonometrico reale in x₁:
    f(t) = Σ_n cos[n]·cos(2πnt) + Σ_n sin[n-1]·sin(2πnt).
    cos[0] è il termine costante.
    """
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(c) for c in self.sin))

    def __call__(self, t: float) -> float:
        return float(self.evaluate_many(np.array([t]))[0])

    def evaluate_many(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for n, a in enumerate(self.cos):
            if a:
                out += a * np.cos(2.0 * np.pi * n * t)
        for n, b in enumerate(self.sin, start=1):
            if b:
                out += b * np.sin(2.0 * np.pi * n * t)
        return out

    @property
    def lipschitz(self) -> float:
        """Costante di Lipschitz esatta in unità di giri"""
        total = sum(n * abs(a) for n, a in enumerate(self.cos))
        total += sum(n * abs(b) for n, b in enumerate(self.sin, start=1))
        return 2.0 * math.pi * total

    @property
    def is_zero(self) -> bool:
        return not any(self.cos) and not any(self.sin)

    def to_json(self) -> dict:
        return {"cos": list(self.cos), "sin": list(self.sin)}

    @classmethod
    def from_json(cls, data: dict) -> "PhasePolynomial":
        return cls(tuple(data.get("cos", ())), tuple(data.get("sin", ())))


@dataclass(frozen=True)
class MinimalMap:
    """
    Omeomorfismo ψ di T^k.

    Rotation:    x ↦ x + θ (k = 1)
    Furstenberg: x₁ ↦ x₁ + θ, x_{j+1} ↦ d_j·x_j + f_j(x₁) + x_{j+1}
    """
    kind: MapKind
    theta: float
    exponents: tuple[int, ...] = ()
    phases: tuple[PhasePolynomial, ...] = field(default=())

    def __post_init__(self):
        if not isinstance(self.kind, MapKind):
            object.__setattr__(self, "kind", MapKind(self.kind))
        theta = float(self.theta)
        if math.isnan(theta) or math.isinf(theta):
            raise ValueError(f"θ non valido: {self.theta}")
        object.__setattr__(self, "theta", theta)

        exponents = tuple(self.exponents)
        for d in exponents:
            if isinstance(d, bool) or int(d) != d:
                raise ValueError(f"Esponente non intero: {d}")
        exponents = tuple(int(d) for d in exponents)
        object.__setattr__(self, "exponents", exponents)

        if self.kind is MapKind.ROTATION:
            if exponents or self.phases:
                raise ValueError("Una rotazione non ha esponenti né fasi (k = 1)")
            return

        if not exponents:
            raise ValueError("La trasformazione di Furstenberg richiede k ≥ 2")
        phases = tuple(
            p if isinstance(p, PhasePolynomial) else PhasePolynomial.from_json(p)
            for p in self.phases
        )
        if not phases:
            phases = tuple(PhasePolynomial() for _ in exponents)
        if len(phases) != len(exponents):
            raise ValueError(
                f"Servono {len(exponents)} fasi, ricevute {len(phases)}"
            )
        object.__setattr__(self, "phases", phases)

    @classmethod
    def rotation(cls, theta: float) -> "MinimalMap":
        return cls(MapKind.ROTATION, theta)

    @classmethod
    def furstenberg(cls, theta: float, exponents: Sequence[int],
                    phases: Optional[Sequence[PhasePolynomial]] = None) -> "MinimalMap":
        return cls(MapKind.FURSTENBERG, theta, tuple(exponents), tuple(phases or ()))

    @property
    def dim(self) -> int:
        return 1 + len(self.exponents)

    @property
    def periodic(self) -> bool:
        return looks_rational(self.theta)

    @property
    def minimal(self) -> bool:
        """Flag di minimalità: θ irrazionale e tutti i d_j ≠ 0"""
        return not self.periodic and all(d != 0 for d in self.exponents)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "theta": self.theta,
            "exponents": list(self.exponents),
            "phases": [p.to_json() for p in self.phases],
            "dim": self.dim,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MinimalMap":
        kind = MapKind(data.get("kind", "rotation"))
        phases = tuple(PhasePolynomial.from_json(p) for p in data.get("phases", ()))
        result = cls(kind, data["theta"], tuple(data.get("exponents", ())), phases)
        if "dim" in data and int(data["dim"]) != result.dim:
            raise DimensionError(
                f"dim={data['dim']} incoerente con {len(result.exponents)} esponenti"
            )
        return result


def _check_dim(map_: MinimalMap, k: int) -> None:
    if k != map_.dim:
        raise DimensionError(f"Punto di dimensione {k}, mappa di dimensione {map_.dim}")


def apply_many(map_: MinimalMap, coords: np.ndarray) -> np.ndarray:
    """Applica ψ a una matrice n×k di coordinate"""
    coords = np.asarray(coords, dtype=float)
    _check_dim(map_, coords.shape[1])
    out = np.empty_like(coords)
    out[:, 0] = coords[:, 0] + map_.theta
    for j, (d, phase) in enumerate(zip(map_.exponents, map_.phases)):
        out[:, j + 1] = d * coords[:, j] + phase.evaluate_many(coords[:, 0]) + coords[:, j + 1]
    return wrap_array(out)


def apply_inverse_many(map_: MinimalMap, coords: np.ndarray) -> np.ndarray:
    """Applica ψ⁻¹; per Furstenberg le coordinate si recuperano in sequenza"""
    coords = np.asarray(coords, dtype=float)
    _check_dim(map_, coords.shape[1])
    out = np.empty_like(coords)
    out[:, 0] = wrap_array(coords[:, 0] - map_.theta)
    for j, (d, phase) in enumerate(zip(map_.exponents, map_.phases)):
        raw = coords[:, j + 1] - d * out[:, j] - phase.evaluate_many(out[:, 0])
        out[:, j + 1] = wrap_array(raw)
    return wrap_array(out)


def apply(map_: MinimalMap, x: TorusPoint) -> TorusPoint:
    row = apply_many(map_, np.array([x.coords]))[0]
    return TorusPoint(tuple(row))


def apply_inverse(map_: MinimalMap, x: TorusPoint) -> TorusPoint:
    row = apply_inverse_many(map_, np.array([x.coords]))[0]
    return TorusPoint(tuple(row))


def dist(x: TorusPoint, y: TorusPoint) -> float:
    """Massimo sulle coordinate della distanza circolare"""
    if x.dim != y.dim:
        raise DimensionError(f"Dimensioni diverse: {x.dim} e {y.dim}")
    return max(circle_distance(a, b) for a, b in zip(x.coords, y.coords))


def orbit(map_: MinimalMap, x: TorusPoint, n: int) -> list[TorusPoint]:
    """[x, ψ(x), …, ψ^{n-1}(x)]"""
    if n < 1:
        raise ValueError("La lunghezza dell'orbita deve essere ≥ 1")
    _check_dim(map_, x.dim)
    points = [x]
    for _ in range(n - 1):
        points.append(apply(map_, points[-1]))
    return points


def lipschitz(map_: MinimalMap) -> float:
    """Costante di Lipschitz di ψ per la metrica del massimo"""
    constant = 1.0
    for d, phase in zip(map_.exponents, map_.phases):
        constant = max(constant, abs(d) + 1.0 + phase.lipschitz)
    return constant


def convergents(theta: float, count: int) -> list[Fraction]:
    """Ridotte p/q della frazione continua di θ (al più count termini)"""
    if count < 1:
        return []
    a0 = math.floor(theta)
    h_prev, h = 1, a0
    k_prev, k = 0, 1
    result = [Fraction(h, k)]
    x = theta - a0
    while len(result) < count and x > 1e-12:
        x = 1.0 / x
        a = math.floor(x)
        x -= a
        h_prev, h = h, a * h + h_prev
        k_prev, k = k, a * k + k_prev
        result.append(Fraction(h, k))
    return result


def favourable_sizes(theta: float, lo: int, hi: int) -> list[int]:
    """Denominatori delle ridotte di θ compresi in [lo, hi]"""
    sizes = []
    for c in convergents(theta, 64):
        if c.denominator > hi:
            break
        if c.denominator >= lo and c.denominator not in sizes:
            sizes.append(c.denominator)
    return sizes
