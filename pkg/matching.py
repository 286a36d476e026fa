"""
Rokhlin Model Checker - Matching Module
=======================================
Passo del "lemma dei matrimoni": permutazione s con
dist(x_j, ψ(x_{s(j)})) < ε tramite matching massimo (Hopcroft-Karp di scipy) sul
grafo a soglia, e versione ottima (bottleneck) per ricerca binaria sulle
distanze.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from dynamics import MinimalMap, TorusPoint, DimensionError, apply_many, circle_distance_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Permutation:
    """Biiezione di {0, …, n−1}; images[j] = s(j)"""
    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(len(images))):
            raise ValueError(f"Non è una permutazione di 0..{len(images) - 1}: {images}")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def __len__(self) -> int:
        return len(self.images)

    def __call__(self, j: int) -> int:
        return self.images[j]

    @property
    def n(self) -> int:
        return len(self.images)

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for j, i in enumerate(self.images):
            inv[i] = j
        return Permutation(tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """(self ∘ other)(j) = self(other(j))"""
        if other.n != self.n:
            raise ValueError("Permutazioni di lunghezza diversa")
        return Permutation(tuple(self.images[i] for i in other.images))

    def cycles(self) -> list[list[int]]:
        """Cicli di s nell'ordine del loro elemento minimo"""
        seen = [False] * self.n
        result = []
        for start in range(self.n):
            if seen[start]:
                continue
            cycle = []
            j = start
            while not seen[j]:
                seen[j] = True
                cycle.append(j)
                j = self.images[j]
            result.append(cycle)
        return result

    def as_array(self) -> np.ndarray:
        return np.array(self.images, dtype=np.int64)

    def to_json(self) -> list[int]:
        return list(self.images)

    @classmethod
    def from_json(cls, data: Sequence[int]) -> "Permutation":
        return cls(tuple(data))


def _coords(points: Sequence[TorusPoint]) -> np.ndarray:
    if not points:
        raise ValueError("Insieme di punti vuoto")
    dims = {p.dim for p in points}
    if len(dims) != 1:
        raise DimensionError(f"Punti di dimensioni diverse: {sorted(dims)}")
    return np.array([p.coords for p in points], dtype=float)


def distance_matrix(points: Sequence[TorusPoint], map_: MinimalMap) -> np.ndarray:
    """D[j, i] = dist(x_j, ψ(x_i))"""
    coords = _coords(points)
    images = apply_many(map_, coords)
    return circle_distance_array(coords[:, None, :], images[None, :, :]).max(axis=2)


def _perfect_matching(D: np.ndarray, threshold: float, strict: bool) -> Optional[Permutation]:
    """Matching perfetto sul grafo {(j,i): D[j,i] < soglia} (≤ se non strict)"""
    edges = D < threshold if strict else D <= threshold
    if not edges.any(axis=1).all() or not edges.any(axis=0).all():
        return None
    # perm_type="column": per ogni riga j la colonna abbinata, −1 se libera
    match = maximum_bipartite_matching(csr_matrix(edges.astype(np.int8)), perm_type="column")
    if np.any(match == -1):
        return None
    return Permutation(tuple(match.tolist()))


def _check_distinct(points: Sequence[TorusPoint]) -> None:
    if len(set(points)) != len(points):
        raise ValueError("I punti del campione devono essere distinti")


def find_matching(points: Sequence[TorusPoint], map_: MinimalMap, eps: float) -> Optional[Permutation]:
    """
    Permutazione s con max_j dist(x_j, ψ(x_{s(j)})) < ε, oppure None
    esattamente quando il grafo a soglia non ha matching perfetto.
    """
    if eps <= 0:
        raise ValueError(f"ε deve essere positivo: {eps}")
    _check_distinct(points)
    return _perfect_matching(distance_matrix(points, map_), eps, strict=True)


def min_bottleneck(points: Sequence[TorusPoint], map_: MinimalMap) -> tuple[float, Permutation]:
    """
    ε* = min_s max_j dist(x_j, ψ(x_{s(j)})) e una permutazione che lo realizza.

    Ricerca binaria sui valori distinti di D a partire dal limite inferiore
    max(max_j min_i D, max_i min_j D), con passi a galoppo: i grafi vicini
    all'ottimo sono sparsi e la verifica di fattibilità resta economica.
    """
    _check_distinct(points)
    D = distance_matrix(points, map_)
    values = np.unique(D)
    lower = max(D.min(axis=1).max(), D.min(axis=0).max())
    lo = int(np.searchsorted(values, lower))

    best = _perfect_matching(D, values[lo], strict=False)
    if best is not None:
        return float(values[lo]), best

    # galoppo: lo è infattibile, cerca hi fattibile
    step = 1
    hi = min(lo + step, len(values) - 1)
    while True:
        best = _perfect_matching(D, values[hi], strict=False)
        if best is not None:
            break
        lo = hi
        step *= 2
        hi = min(lo + step, len(values) - 1)

    # invariante: values[lo] infattibile, values[hi] fattibile
    while hi - lo > 1:
        mid = (lo + hi) // 2
        candidate = _perfect_matching(D, values[mid], strict=False)
        if candidate is None:
            lo = mid
        else:
            hi, best = mid, candidate
    logger.debug("Bottleneck su %d punti: ε* = %.6g", len(points), values[hi])
    return float(values[hi]), best


def matching_defect(points: Sequence[TorusPoint], map_: MinimalMap, s: Permutation) -> float:
    """max_j dist(x_j, ψ(x_{s(j)}))"""
    if s.n != len(points):
        raise ValueError(f"Permutazione di lunghezza {s.n} per {len(points)} punti")
    D = distance_matrix(points, map_)
    return float(D[np.arange(s.n), s.as_array()].max())
