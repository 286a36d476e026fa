"""
Rokhlin Model Checker - Measure Module
======================================
Misure empiriche su insiemi finiti di punti, campionamento ε-denso a
partizione diadica e confronto μ₁(F) ≤ μ₂(F_ε) tra un campione e le sue
immagini tramite ψ.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from numbers import Real
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from dynamics import (
    MinimalMap, TorusPoint, DimensionError,
    apply_many, circle_distance_array, wrap,
)

logger = logging.getLogger(__name__)

# Costanti di Kronecker per distribuire i punti di una scatola nelle coordinate ≥ 2
KRONECKER_STEPS = tuple(math.sqrt(p) % 1.0 for p in (2, 3, 5, 7, 11, 13, 17, 19))


class SampleSizeError(ValueError):
    """Nessuna cardinalità ammissibile per il campione richiesto"""


@dataclass(frozen=True)
class Arc:
    """
    Arco chiuso del cerchio con estremi in [0,1].
    lo > hi indica un arco che attraversa 0, lo == hi un punto,
    (0, 1) l'intero cerchio.
    """
    lo: Real
    hi: Real

    def __post_init__(self):
        for v in (self.lo, self.hi):
            if not (0 <= v <= 1):
                raise ValueError(f"Estremo d'arco fuori da [0,1]: {v}")

    @classmethod
    def from_start(cls, start: Real, length: Real) -> "Arc":
        if length >= 1:
            return cls(0, 1)
        if length < 0:
            raise ValueError(f"Lunghezza negativa: {length}")
        lo = wrap(start)
        return cls(lo, wrap(lo + length))

    @property
    def length(self) -> Real:
        if self.lo <= self.hi:
            return self.hi - self.lo
        return 1 - self.lo + self.hi

    @property
    def is_full(self) -> bool:
        return self.length >= 1

    def shifted(self, t: Real) -> "Arc":
        if self.is_full:
            return self
        return Arc.from_start(self.lo + t, self.length)

    def contains(self, c: float) -> bool:
        return bool(self.mask(np.array([c]))[0])

    def mask(self, values: np.ndarray) -> np.ndarray:
        """Appartenenza (chiusa) vettoriale"""
        if self.is_full:
            return np.ones(values.shape, dtype=bool)
        lo, hi = float(self.lo), float(self.hi)
        if lo <= hi:
            return (values >= lo) & (values <= hi)
        return (values >= lo) | (values <= hi)

    def distance(self, values: np.ndarray) -> np.ndarray:
        """Distanza circolare dall'arco chiuso"""
        inside = self.mask(values)
        d = np.minimum(circle_distance_array(values, float(self.lo)),
                       circle_distance_array(values, float(self.hi)))
        return np.where(inside, 0.0, d)

    def segments(self) -> list[tuple[Real, Real]]:
        """Segmenti non avvolti [a, b] ⊂ [0,1] che compongono l'arco"""
        if self.lo <= self.hi:
            return [(self.lo, self.hi)]
        return [(self.lo, 1), (0, self.hi)]

    def overlap(self, other: "Arc") -> Real:
        """Misura dell'intersezione di due archi"""
        total = 0
        for a0, a1 in self.segments():
            for b0, b1 in other.segments():
                lo, hi = max(a0, b0), min(a1, b1)
                if hi > lo:
                    total += hi - lo
        return total

    def to_json(self) -> list[float]:
        return [float(self.lo), float(self.hi)]

    @classmethod
    def from_json(cls, data: Sequence[float]) -> "Arc":
        lo, hi = data
        return cls(float(lo), float(hi))


Box = tuple[Arc, ...]


@dataclass(frozen=True)
class ClosedArcSet:
    """Unione finita di scatole chiuse (un arco per coordinata) in T^k"""
    dim: int
    boxes: tuple[Box, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim deve essere ≥ 1")
        boxes = tuple(tuple(box) for box in self.boxes)
        for box in boxes:
            if len(box) != self.dim:
                raise DimensionError(f"Scatola con {len(box)} archi in dimensione {self.dim}")
        object.__setattr__(self, "boxes", boxes)

    @classmethod
    def empty(cls, dim: int = 1) -> "ClosedArcSet":
        return cls(dim, ())

    @classmethod
    def whole(cls, dim: int = 1) -> "ClosedArcSet":
        return cls(dim, (tuple(Arc(0, 1) for _ in range(dim)),))

    @classmethod
    def arc(cls, lo: float, hi: float) -> "ClosedArcSet":
        return cls(1, ((Arc(lo, hi),),))

    @classmethod
    def point(cls, p: TorusPoint) -> "ClosedArcSet":
        return cls(p.dim, (tuple(Arc(c, c) for c in p.coords),))

    @property
    def is_empty(self) -> bool:
        return not self.boxes

    def mask(self, coords: np.ndarray) -> np.ndarray:
        """Punti (righe di coords) contenuti nell'insieme chiuso"""
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.shape[1] != self.dim:
            raise DimensionError(f"Punti di dimensione {coords.shape[1]}, insieme di dimensione {self.dim}")
        out = np.zeros(coords.shape[0], dtype=bool)
        for box in self.boxes:
            inside = np.ones(coords.shape[0], dtype=bool)
            for j, arc in enumerate(box):
                inside &= arc.mask(coords[:, j])
            out |= inside
        return out

    def neighbourhood_mask(self, coords: np.ndarray, eps: float) -> np.ndarray:
        """
        Appartenenza a F_ε = {x : dist(x, F) < ε}. Con la metrica del massimo
        l'ε-intorno di una scatola è il prodotto degli ε-intorni aperti dei
        suoi archi.
        """
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.shape[1] != self.dim:
            raise DimensionError(f"Punti di dimensione {coords.shape[1]}, insieme di dimensione {self.dim}")
        out = np.zeros(coords.shape[0], dtype=bool)
        for box in self.boxes:
            inside = np.ones(coords.shape[0], dtype=bool)
            for j, arc in enumerate(box):
                inside &= arc.distance(coords[:, j]) < eps
            out |= inside
        return out

    def contains(self, p: TorusPoint) -> bool:
        return bool(self.mask(np.array([p.coords]))[0])

    def to_json(self) -> dict:
        return {"dim": self.dim, "boxes": [[arc.to_json() for arc in box] for box in self.boxes]}

    @classmethod
    def from_json(cls, data: dict) -> "ClosedArcSet":
        boxes = tuple(tuple(Arc.from_json(a) for a in box) for box in data.get("boxes", ()))
        return cls(int(data["dim"]), boxes)


def lebesgue_measure(F: ClosedArcSet) -> float:
    """Misura di Lebesgue esatta per decomposizione in celle elementari"""
    if F.is_empty:
        return 0.0
    breakpoints = []
    for j in range(F.dim):
        cuts = {0.0, 1.0}
        for box in F.boxes:
            cuts.add(float(box[j].lo))
            cuts.add(float(box[j].hi))
        breakpoints.append(sorted(cuts))
    total = 0.0
    intervals = [list(zip(bp[:-1], bp[1:])) for bp in breakpoints]
    for cell in itertools.product(*intervals):
        centre = np.array([[(a + b) / 2.0 for a, b in cell]])
        if F.mask(centre)[0]:
            total += math.prod(b - a for a, b in cell)
    return total


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Misura uniforme (peso 1/n) su n punti"""
    support: tuple[TorusPoint, ...]
    box_side: Optional[float] = None
    box_count: Optional[int] = None

    def __post_init__(self):
        support = tuple(self.support)
        if not support:
            raise ValueError("Il supporto di una misura empirica non può essere vuoto")
        dims = {p.dim for p in support}
        if len(dims) != 1:
            raise DimensionError(f"Punti di dimensioni diverse nel supporto: {sorted(dims)}")
        object.__setattr__(self, "support", support)

    @property
    def n(self) -> int:
        return len(self.support)

    @property
    def dim(self) -> int:
        return self.support[0].dim

    @property
    def weight(self) -> Fraction:
        return Fraction(1, self.n)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.array([p.coords for p in self.support], dtype=float)

    def mass(self, F: ClosedArcSet) -> Fraction:
        return Fraction(int(F.mask(self.coords).sum()), self.n)

    def to_rows(self) -> list[dict]:
        return [
            {"index": i, **{f"x{j + 1}": c for j, c in enumerate(p.coords)}}
            for i, p in enumerate(self.support)
        ]


def dyadic_side(eps: float) -> float:
    """Il più grande 2^{-j} strettamente minore di ε (1 se ε > 1/2)"""
    if eps > 0.5:
        return 1.0
    side = 0.5
    while side >= eps:
        side /= 2.0
    return side


def partition_box_count(dim: int, eps: float) -> int:
    return round(1.0 / dyadic_side(eps)) ** dim


def _partition_points(dim: int, side: float, n: int) -> list[TorusPoint]:
    per_axis = round(1.0 / side)
    boxes = list(itertools.product(range(per_axis), repeat=dim))
    base, remainder = divmod(n, len(boxes))
    points = []
    for b, cell in enumerate(boxes):
        count = base + (remainder if b == len(boxes) - 1 else 0)
        for t in range(count):
            coords = [(cell[0] + (t + 0.5) / count) * side]
            for j in range(1, dim):
                step = KRONECKER_STEPS[(j - 1) % len(KRONECKER_STEPS)]
                coords.append((cell[j] + ((t + 0.5) * step) % 1.0) * side)
            points.append(TorusPoint.of(*coords))
    return points


def epsilon_dense_sample(map_: MinimalMap, eps: float, sizes: Iterable[int]) -> EmpiricalMeasure:
    """
    Campione ε-denso a partizione: scatole diadiche di lato < ε (quindi
    diametro < ε), ⌊n·μ(G_i)⌋ punti per scatola e il resto nell'ultima.
    Serve n ≥ 2·(numero di scatole); per ε > 1/2 basta un punto.
    """
    if eps <= 0:
        raise ValueError(f"ε deve essere positivo: {eps}")
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes:
        raise ValueError("Insieme di cardinalità ammissibili vuoto")
    dim = map_.dim
    side = dyadic_side(eps)
    box_count = round(1.0 / side) ** dim
    required = 1 if eps > 0.5 else 2 * box_count
    admissible = [n for n in sizes if n >= required]
    if not admissible:
        raise SampleSizeError(
            f"Per ε={eps} servono almeno {required} punti ({box_count} scatole), "
            f"cardinalità disponibili: {sizes}"
        )
    n = admissible[0]
    points = _partition_points(dim, side, n)
    logger.debug("Campione ε-denso: ε=%s, n=%d, %d scatole di lato %s", eps, n, box_count, side)
    return EmpiricalMeasure(tuple(points), box_side=side, box_count=box_count)


def grid_points(dim: int, n: int) -> list[TorusPoint]:
    """Griglia prodotto (j/m)^k con n = m^k, in ordine lessicografico"""
    m = round(n ** (1.0 / dim))
    if m ** dim != n:
        raise SampleSizeError(f"{n} non è una potenza {dim}-esima")
    return [TorusPoint(tuple(i / m for i in idx)) for idx in itertools.product(range(m), repeat=dim)]


def is_epsilon_dense(points: Sequence[TorusPoint], eps: float, refinement: int = 10,
                     chunk: int = 4096) -> bool:
    """Ogni punto di una griglia di riferimento di passo ε/refinement dista < ε dal campione"""
    coords = np.array([p.coords for p in points], dtype=float)
    dim = coords.shape[1]
    m = max(2, math.ceil(refinement / eps))
    axis = np.arange(m) / m
    grid = np.array(list(itertools.product(axis, repeat=dim)))
    for start in range(0, len(grid), chunk):
        block = grid[start:start + chunk]
        d = circle_distance_array(block[:, None, :], coords[None, :, :]).max(axis=2)
        if not np.all(d.min(axis=1) < eps):
            return False
    return True


@dataclass(frozen=True)
class ComparisonEntry:
    """Esito del confronto per un insieme chiuso F (conteggi su n punti)"""
    index: int
    mu1_F: int
    mu2_F_eps: int
    mu2_F: int
    mu1_F_eps: int

    @property
    def passed(self) -> bool:
        return self.mu1_F <= self.mu2_F_eps and self.mu2_F <= self.mu1_F_eps


@dataclass(frozen=True)
class MeasureComparisonReport:
    n: int
    eps: float
    entries: tuple[ComparisonEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def failures(self) -> list[ComparisonEntry]:
        return [e for e in self.entries if not e.passed]


def check_measure_comparison(mu1: EmpiricalMeasure, map_: MinimalMap, eps: float,
                             tests: Sequence[ClosedArcSet]) -> MeasureComparisonReport:
    """
    Per ogni F confronta μ₁(F) ≤ μ₂(F_ε) e μ₂(F) ≤ μ₁(F_ε), con μ₂ la misura
    empirica sulle immagini ψ(x_j). I conteggi condividono il peso 1/n.
    """
    if eps <= 0:
        raise ValueError(f"ε deve essere positivo: {eps}")
    points = mu1.coords
    images = apply_many(map_, points)
    entries = []
    for i, F in enumerate(tests):
        if F.is_empty:
            entries.append(ComparisonEntry(i, 0, 0, 0, 0))
            continue
        entries.append(ComparisonEntry(
            index=i,
            mu1_F=int(F.mask(points).sum()),
            mu2_F_eps=int(F.neighbourhood_mask(images, eps).sum()),
            mu2_F=int(F.mask(images).sum()),
            mu1_F_eps=int(F.neighbourhood_mask(points, eps).sum()),
        ))
    report = MeasureComparisonReport(mu1.n, eps, tuple(entries))
    if not report.passed:
        logger.info("Confronto di misure: %d insiemi falliti su %d", len(report.failures), len(entries))
    return report


def empirical_integral(mu: EmpiricalMeasure, f: Callable) -> complex:
    """(1/n)·Σ f(x_j); usa evaluate_many se disponibile"""
    if hasattr(f, "evaluate_many"):
        values = np.asarray(f.evaluate_many(mu.coords))
    else:
        values = np.array([f(p) for p in mu.support])
    return complex(values.sum() / mu.n)


def _grid_candidate(dim: int, n: int, eps: float) -> Optional[list[TorusPoint]]:
    m = round(n ** (1.0 / dim))
    if m ** dim != n or 1.0 / (2 * m) >= eps:
        return None
    return grid_points(dim, n)


def matching_aware_sample(map_: MinimalMap, eps: float, sizes: Iterable[int], threshold: float):
    """
    Campione ε-denso la cui bottleneck matching sotto ψ è < threshold.
    Per ogni cardinalità prova la griglia prodotto e poi il campione a
    partizione. Restituisce (misura, ε*, permutazione).
    """
    from matching import min_bottleneck

    tried = []
    for n in sorted(set(int(s) for s in sizes)):
        candidates = []
        grid = _grid_candidate(map_.dim, n, eps)
        if grid is not None:
            candidates.append(("griglia", EmpiricalMeasure(tuple(grid))))
        try:
            candidates.append(("partizione", epsilon_dense_sample(map_, eps, {n})))
        except SampleSizeError:
            pass
        for label, mu in candidates:
            eps_star, perm = min_bottleneck(list(mu.support), map_)
            tried.append((n, label, eps_star))
            if eps_star < threshold:
                logger.debug("Campione %s con n=%d: ε*=%.3g < %.3g", label, n, eps_star, threshold)
                return mu, eps_star, perm
    detail = ", ".join(f"n={n} {label} ε*={e:.3g}" for n, label, e in tried) or "nessun candidato"
    raise SampleSizeError(f"Nessun campione ε-denso con bottleneck < {threshold:.3g} ({detail})")
