"""
Rokhlin Model Checker - Tower Module
====================================
Torri di Rokhlin per mappe minimali del toro (basi G_i con N traslati
disgiunti, insiemi interni S_i), proiezioni di livello nei modelli di
stadio e verifica delle condizioni tracciali di Rokhlin (cicliche o no).
"""

import itertools
import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from dynamics import MinimalMap, MapKind, TorusPoint, apply_many, apply_inverse_many
from matalg import evaluate_diag, spectral_norm, block_index
from matching import Permutation, min_bottleneck
from measure import Arc, Box, ClosedArcSet, dyadic_side, grid_points

logger = logging.getLogger(__name__)

MAX_RETURN_STEPS = 100_000
SAMPLED_RESOLUTION = 64
GRID_SEARCH_SPAN = 8


class TowerCoverageError(ValueError):
    """Copertura 1 − δ non raggiunta"""

    def __init__(self, message: str, coverage: float):
        super().__init__(message)
        self.coverage = coverage


@dataclass(frozen=True)
class TowerSpec:
    """
    Torre di altezza N: basi aperte G_i (scatole di diametro < η) con
    ψ^j(∪G) disgiunti per 0 ≤ j < N, e chiusi S̄_i ⊂ G_i.
    """
    map: MinimalMap
    bases: tuple[Box, ...]
    inner: tuple[Box, ...]
    height: int
    delta: float
    eta: float
    coverage: float
    exact: bool = True

    @property
    def dim(self) -> int:
        return self.map.dim

    @property
    def inner_set(self) -> ClosedArcSet:
        return ClosedArcSet(self.dim, self.inner)

    def to_json(self) -> dict:
        return {
            "map": self.map.to_json(),
            "height": self.height,
            "delta": self.delta,
            "eta": self.eta,
            "coverage": self.coverage,
            "exact": self.exact,
            "bases": [[arc.to_json() for arc in box] for box in self.bases],
            "inner": [[arc.to_json() for arc in box] for box in self.inner],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TowerSpec":
        def boxes(raw):
            return tuple(tuple(Arc.from_json(a) for a in box) for box in raw)
        return cls(
            map=MinimalMap.from_json(data["map"]),
            bases=boxes(data["bases"]),
            inner=boxes(data["inner"]),
            height=int(data["height"]),
            delta=float(data["delta"]),
            eta=float(data["eta"]),
            coverage=float(data["coverage"]),
            exact=bool(data.get("exact", True)),
        )


class _SegmentIndex:
    """Segmenti disgiunti di [0,1] ordinati per estremo sinistro"""

    def __init__(self):
        self.starts: list = []
        self.ends: list = []

    def overlaps(self, lo, hi) -> bool:
        i = bisect_left(self.starts, hi)
        return i > 0 and self.ends[i - 1] > lo

    def add(self, lo, hi) -> None:
        i = bisect_left(self.starts, lo)
        self.starts.insert(i, lo)
        self.ends.insert(i, hi)


def _translates(arc: Arc, theta: Fraction, count: int) -> list[tuple]:
    """Segmenti dei traslati arc + jθ per j < count"""
    segments = []
    for j in range(count):
        segments.extend(arc.shifted(j * theta).segments())
    return [(lo, hi) for lo, hi in segments if hi > lo]


def _split(lo, hi, segments) -> tuple[list, list]:
    """Parti di [lo, hi) dentro e fuori da un'unione di segmenti disgiunti"""
    inside = []
    for a, b in segments:
        x, y = max(lo, a), min(hi, b)
        if y > x:
            inside.append((x, y))
    inside.sort()
    outside = []
    cursor = lo
    for x, y in inside:
        if x > cursor:
            outside.append((cursor, x))
        cursor = y
    if hi > cursor:
        outside.append((cursor, hi))
    return inside, outside


def return_pieces(theta: Fraction, base: Fraction, max_steps: int = MAX_RETURN_STEPS) -> list[tuple]:
    """
    Partizione di Kakutani-Rokhlin della base [0, b) per la rotazione di θ:
    pezzi (lo, hi, r) con tempo di primo ritorno r.
    """
    pending = [(Fraction(0), base)]
    pieces = []
    for j in range(1, max_steps + 1):
        if not pending:
            break
        shift = (j * theta) % 1
        start = (1 - shift) % 1
        if start + base <= 1:
            window = [(start, start + base)]
        else:
            window = [(start, Fraction(1)), (Fraction(0), start + base - 1)]
        still = []
        for lo, hi in pending:
            inside, outside = _split(lo, hi, window)
            pieces.extend((x, y, j) for x, y in inside)
            still.extend(outside)
        pending = still
    if pending:
        raise TowerCoverageError(
            f"Tempi di ritorno oltre {max_steps} passi per la base [0, {float(base):.3g})", 0.0
        )
    return sorted(pieces)


def _shrink(box: Box, rho: Fraction) -> Box:
    return tuple(
        arc if arc.is_full else Arc.from_start(arc.lo + rho * arc.length, arc.length * (1 - 2 * rho))
        for arc in box
    )


def _box_measure(box: Box):
    return math.prod(arc.length for arc in box)


def _inner_sets(bases: Sequence[Box], delta: Fraction, height: int) -> tuple[Box, ...]:
    """S_i con μ(G_i) − μ(S_i) ≤ δ/(8LN) < δ/(4LN)"""
    count = len(bases)
    inner = []
    for box in bases:
        dim = len(box)
        mu = _box_measure(box)
        rho = min(Fraction(1, 4), delta / (16 * dim * count * height * mu))
        inner.append(_shrink(box, rho))
    return tuple(inner)


def _base_length(N: int, delta: Fraction, eta: Fraction) -> Fraction:
    if N == 1:
        return eta / 2
    return min(eta, delta / (N - 1)) / 2


def build_tower(map_: MinimalMap, N: int, delta: float, eta: float,
                max_steps: int = MAX_RETURN_STEPS) -> TowerSpec:
    """
    Torre di altezza N con copertura > 1 − δ.

    I candidati sono prima i pezzi di ritorno di Kakutani-Rokhlin della base
    [0, b) sulla prima coordinata, presi a passi di N lungo ogni colonna, poi
    (solo per rotazioni) una griglia diadica di riempimento di lato < η,
    usata finché la copertura non supera 1 − δ. Ogni candidato è ammesso
    solo se i suoi N traslati evitano quelli già ammessi.
    """
    if N < 1:
        raise ValueError(f"L'altezza deve essere ≥ 1: {N}")
    if not 0 < delta < 1:
        raise ValueError(f"δ deve stare in (0,1): {delta}")
    if eta <= 0:
        raise ValueError(f"η deve essere positivo: {eta}")
    if not map_.minimal:
        raise ValueError("La costruzione della torre richiede una mappa minimale")

    theta = Fraction(map_.theta) % 1
    delta_q, eta_q = Fraction(delta), Fraction(eta)
    b = _base_length(N, delta_q, eta_q)
    pieces = return_pieces(theta, b, max_steps)
    logger.debug("Base di ritorno [0, %.4g): %d pezzi, tempi %s", float(b), len(pieces),
                 sorted({r for _, _, r in pieces}))

    index = _SegmentIndex()
    arcs: list[Arc] = []
    coverage = Fraction(0)
    for lo, hi, r in pieces:
        for q in range(r // N):
            candidate = Arc(lo, hi).shifted(q * N * theta)
            segments = _translates(candidate, theta, N)
            if any(index.overlaps(a, c) for a, c in segments):
                continue
            for a, c in segments:
                index.add(a, c)
            arcs.append(candidate)
            coverage += N * candidate.length

    if map_.kind is MapKind.ROTATION and coverage <= 1 - delta_q:
        side = Fraction(dyadic_side(eta))
        for i in range(round(1 / side)):
            if coverage > 1 - delta_q:
                break
            candidate = Arc.from_start(i * side, side)
            segments = _translates(candidate, theta, N)
            if any(index.overlaps(a, c) for a, c in segments):
                continue
            for a, c in segments:
                index.add(a, c)
            arcs.append(candidate)
            coverage += N * side

    if coverage <= 1 - delta_q:
        raise TowerCoverageError(
            f"Copertura {float(coverage):.4f} ≤ 1 − δ = {1 - delta}", float(coverage)
        )

    if map_.dim == 1:
        bases = tuple((arc,) for arc in arcs)
    else:
        # ψ agisce sulla prima coordinata come rotazione: le celle fibra
        # ereditano la disgiunzione dei livelli dalla proiezione
        side = Fraction(dyadic_side(eta))
        cells = [Arc.from_start(i * side, side) for i in range(round(1 / side))]
        bases = tuple(
            (arc,) + fibre
            for arc in arcs
            for fibre in itertools.product(cells, repeat=map_.dim - 1)
        )

    inner = _inner_sets(bases, delta_q, N)
    logger.info("Torre costruita: N=%d, %d basi, copertura %.4f", N, len(bases), float(coverage))
    return TowerSpec(
        map=map_,
        bases=bases,
        inner=inner,
        height=N,
        delta=float(delta),
        eta=float(eta),
        coverage=float(coverage),
        exact=map_.dim == 1,
    )


def _arc_offset(arc: Arc, values: np.ndarray) -> np.ndarray:
    return np.mod(values - float(arc.lo), 1.0)


def open_mask(boxes: Sequence[Box], coords: np.ndarray) -> np.ndarray:
    """Appartenenza all'unione degli interni delle scatole"""
    coords = np.atleast_2d(coords)
    out = np.zeros(coords.shape[0], dtype=bool)
    for box in boxes:
        inside = np.ones(coords.shape[0], dtype=bool)
        for j, arc in enumerate(box):
            if arc.is_full:
                continue
            u = _arc_offset(arc, coords[:, j])
            inside &= (u > 0) & (u < float(arc.length))
        out |= inside
    return out


@dataclass(frozen=True)
class TowerVerification:
    exact: bool
    resolution: Optional[int]
    overlap: float
    inner_ok: bool
    coverage: float
    delta: float

    @property
    def disjoint(self) -> bool:
        return self.overlap == 0

    @property
    def passed(self) -> bool:
        return self.disjoint and self.inner_ok and self.coverage > 1 - self.delta


def _inner_ok(tower: TowerSpec) -> bool:
    count = len(tower.bases)
    slack = Fraction(tower.delta) / (4 * count * tower.height) if count else 0
    for box, sbox in zip(tower.bases, tower.inner):
        for arc, s in zip(box, sbox):
            if arc.is_full:
                continue
            u = (s.lo - arc.lo) % 1
            if not (u > 0 and u + s.length < arc.length):
                return False
        if not _box_measure(sbox) > _box_measure(box) - slack:
            return False
    return True


def verify_tower(tower: TowerSpec, resolution: int = SAMPLED_RESOLUTION) -> TowerVerification:
    """
    Disgiunzione dei livelli ψ^j(∪G), j < N: esatta sugli intervalli per le
    rotazioni, per campionamento delle controimmagini su griglia altrimenti.
    """
    inner_ok = _inner_ok(tower)
    if tower.exact and tower.dim == 1:
        theta = Fraction(tower.map.theta) % 1
        segments = sorted(
            seg for box in tower.bases for seg in _translates(box[0], theta, tower.height)
        )
        overlap = Fraction(0)
        run_end = Fraction(0)
        for lo, hi in segments:
            if run_end > lo:
                overlap += min(hi, run_end) - lo
            run_end = max(run_end, hi)
        total = sum((hi - lo for lo, hi in segments), Fraction(0))
        return TowerVerification(True, None, float(overlap), inner_ok, float(total), tower.delta)

    axis = (np.arange(resolution) + 0.5) / resolution
    grid = np.array(list(itertools.product(axis, repeat=tower.dim)))
    counts = np.zeros(grid.shape[0], dtype=int)
    pre = grid
    for _ in range(tower.height):
        counts += open_mask(tower.bases, pre)
        pre = apply_inverse_many(tower.map, pre)
    overlap = float(np.mean(counts >= 2))
    logger.debug("Verifica campionata su %d^%d punti: sovrapposizione %.3g", resolution, tower.dim, overlap)
    return TowerVerification(False, resolution, overlap, inner_ok, tower.coverage, tower.delta)


@dataclass(frozen=True)
class ModelAutomorphism:
    """α(X) = W* X W con W l'intertwiner della permutazione s: α(e)[s(a)] = e[a]"""
    permutation: Permutation
    block: int = 1
    bottleneck: float = 0.0

    @classmethod
    def from_stage(cls, points: Sequence[TorusPoint], map_: MinimalMap, block: int = 1) -> "ModelAutomorphism":
        eps_star, s = min_bottleneck(points, map_)
        return cls(s, block, eps_star)

    def apply_mask(self, mask: np.ndarray) -> np.ndarray:
        out = np.empty_like(mask)
        out[self.permutation.as_array()] = mask
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        q = block_index(self.permutation.inverse().as_array(), X.shape[0] // self.permutation.n)
        return X[np.ix_(q, q)]


@dataclass(frozen=True, eq=False)
class ProjectionFamily:
    """
    Proiezioni di livello e_1..e_N come maschere 0/1 sui punti del campione
    (tensorizzate con 1_m), con i campioni delle funzioni bump.
    """
    masks: tuple[np.ndarray, ...]
    block: int
    coords: np.ndarray
    g_prime: np.ndarray
    a_prime: np.ndarray
    h: np.ndarray
    mode: str = "geometric"
    geometric_levels: Optional[np.ndarray] = field(default=None)

    @property
    def height(self) -> int:
        return len(self.masks)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def ranks(self) -> list[int]:
        return [int(m.sum()) * self.block for m in self.masks]

    @property
    def covered(self) -> Fraction:
        return Fraction(sum(int(m.sum()) for m in self.masks), self.n)

    @property
    def levels(self) -> np.ndarray:
        """Livello (1-based) di ogni punto nella famiglia, 0 se scoperto"""
        out = np.zeros(self.n, dtype=int)
        for j, mask in enumerate(self.masks):
            out[mask] = j + 1
        return out

    @property
    def agreement(self) -> Fraction:
        """Frazione di punti in cui la famiglia coincide con i livelli geometrici della torre"""
        if self.geometric_levels is None:
            return Fraction(1)
        return Fraction(int(np.sum(self.levels == self.geometric_levels)), self.n)

    def projection(self, j: int) -> np.ndarray:
        """e_j (1-based) come matrice densa nm×nm"""
        return np.diag(np.repeat(self.masks[j - 1], self.block).astype(float))

    def bump_violations(self, tower: TowerSpec) -> int:
        """Campioni che violano 0 ≤ g′ ≤ 1, g′ = 1 su S̄, g′ = 0 fuori da G"""
        in_s = tower.inner_set.mask(self.coords)
        in_g = open_mask(tower.bases, self.coords)
        tol = 1e-9
        bad = (self.g_prime < 0) | (self.g_prime > 1)
        bad |= in_s & (self.g_prime < 1 - tol)
        bad |= ~in_g & (self.g_prime > tol)
        bad |= (self.a_prime > tol) & ~in_s
        return int(bad.sum())

    def to_rows(self) -> list[dict]:
        rows = []
        levels = self.levels
        for i in range(self.n):
            row = {"index": i, **{f"x{c + 1}": float(v) for c, v in enumerate(self.coords[i])}}
            row.update({"level": int(levels[i]), "g_prime": float(self.g_prime[i]), "a_prime": float(self.a_prime[i])})
            if self.geometric_levels is not None:
                row["tower_level"] = int(self.geometric_levels[i])
            rows.append(row)
        return rows


def _tent(boxes: Sequence[Box], inner: Sequence[Box], coords: np.ndarray) -> np.ndarray:
    """g′: 1 su S̄, 0 fuori da G, lineare nella corona; min sulle coordinate, max sulle scatole"""
    out = np.zeros(coords.shape[0])
    for box, sbox in zip(boxes, inner):
        value = np.ones(coords.shape[0])
        for j, (arc, s) in enumerate(zip(box, sbox)):
            if arc.is_full:
                continue
            length = float(arc.length)
            margin = float((s.lo - arc.lo) % 1)
            u = _arc_offset(arc, coords[:, j])
            inside = u < length
            ramp = np.minimum(1.0, np.minimum(u, length - u) / margin)
            value = np.minimum(value, np.where(inside, ramp, 0.0))
        out = np.maximum(out, value)
    return out


def _interior_bump(inner: Sequence[Box], coords: np.ndarray) -> np.ndarray:
    """a′: positiva esattamente sull'interno di S"""
    out = np.zeros(coords.shape[0])
    for sbox in inner:
        value = np.ones(coords.shape[0])
        for j, s in enumerate(sbox):
            if s.is_full:
                continue
            length = float(s.length)
            u = _arc_offset(s, coords[:, j])
            value = np.minimum(value, np.where(u < length, np.minimum(u, length - u) / (length / 2), 0.0))
        out = np.maximum(out, value)
    return out


def _geometric_levels(tower: TowerSpec, coords: np.ndarray) -> np.ndarray:
    """Livello j ≥ 1 del punto x se ψ^{j−1}(x) ∈ ∪S̄, 0 altrimenti; vince il primo livello"""
    inner = tower.inner_set
    levels = np.zeros(coords.shape[0], dtype=int)
    image = coords
    for j in range(1, tower.height + 1):
        hit = inner.mask(image) & (levels == 0)
        levels[hit] = j
        image = apply_many(tower.map, image)
    return levels


def _propagated(levels: np.ndarray, alpha: ModelAutomorphism, N: int) -> list[np.ndarray]:
    """
    e_1 = punti di livello 1 i cui successori s(a), …, s^{N−1}(a) evitano il
    livello 1; e_{j+1} = α^j(e_1). Le e_j sono ortogonali e α(e_j) = e_{j+1}
    per j < N esattamente.
    """
    images = alpha.permutation.as_array()
    base = levels == 1
    keep = base.copy()
    orbit = np.arange(levels.shape[0])
    for _ in range(1, N):
        orbit = images[orbit]
        keep &= ~base[orbit]
    masks = [keep]
    for _ in range(1, N):
        masks.append(alpha.apply_mask(masks[-1]))
    return masks


def cyclic_closure_residual(alpha: ModelAutomorphism, N: int) -> Fraction:
    """
    Frazione di punti su cicli di s di lunghezza non multipla di N. Una
    famiglia di proiezioni 0/1 con α(e_j) = e_{j+1} e α(e_N) = e_1 è unione
    di cicli interi di lunghezza multipla di N, quindi lascia scoperti
    almeno questi punti.
    """
    n = alpha.permutation.n
    open_points = sum(len(c) for c in alpha.permutation.cycles() if len(c) % N)
    return Fraction(open_points, n)


def tower_projections(tower: TowerSpec, points: Sequence[TorusPoint], m: int = 1,
                      alpha: Optional[ModelAutomorphism] = None) -> ProjectionFamily:
    """
    e_j seleziona i punti x con ψ^{j−1}(x) ∈ ∪S̄ (così α(e_j) ≈ e_{j+1}).
    Con `alpha` la famiglia si ottiene propagando con α il livello 1.
    """
    coords = np.array([p.coords for p in points], dtype=float)
    levels = _geometric_levels(tower, coords)
    N = tower.height
    if alpha is None:
        masks = [levels == j for j in range(1, N + 1)]
        mode = "geometric"
    else:
        masks = _propagated(levels, alpha, N)
        mode = "propagation"

    g_prime = _tent(tower.bases, tower.inner, coords)
    a_prime = _interior_bump(tower.inner, coords)
    h = np.empty((N, coords.shape[0]))
    image = coords
    for j in range(N):
        h[j] = _tent(tower.bases, tower.inner, image)
        image = apply_many(tower.map, image)
    return ProjectionFamily(tuple(masks), m, coords, g_prime, a_prime, h, mode, levels)


@dataclass(frozen=True)
class RokhlinReport:
    """Le tre quantità misurate, ciascuna confrontata strettamente con ε"""
    commutator: float
    shift_defects: tuple[float, ...]
    residual_trace: Fraction
    covered: Fraction
    eps: float
    cyclic: bool

    @property
    def shift_defect(self) -> float:
        return max(self.shift_defects, default=0.0)

    @property
    def commutator_ok(self) -> bool:
        return self.commutator < self.eps

    @property
    def shift_ok(self) -> bool:
        return self.shift_defect < self.eps

    @property
    def trace_ok(self) -> bool:
        return self.residual_trace < self.eps

    @property
    def passed(self) -> bool:
        return self.commutator_ok and self.shift_ok and self.trace_ok

    def to_json(self) -> dict:
        return {
            "commutator": self.commutator,
            "shift_defect": self.shift_defect,
            "shift_defects": list(self.shift_defects),
            "residual_trace": float(self.residual_trace),
            "covered": float(self.covered),
            "eps": self.eps,
            "cyclic": self.cyclic,
            "passed": self.passed,
        }


def _as_matrix(x, family: ProjectionFamily) -> np.ndarray:
    if hasattr(x, "evaluate_many"):
        return evaluate_diag(x, family.coords)
    return np.asarray(x, dtype=complex)


def check_tracial_rokhlin(family: ProjectionFamily, alpha: ModelAutomorphism, F: Sequence,
                          eps: float, cyclic: bool) -> RokhlinReport:
    """
    (1) max ‖e_j x − x e_j‖ su x ∈ F, (2) max_j ‖α(e_j) − e_{j+1}‖ con il
    ritorno e_N → e_1 solo se ciclico, (3) traccia normalizzata di 1 − Σe_j.
    """
    commutator = 0.0
    for x in F:
        X = _as_matrix(x, family)
        block = X.shape[0] // family.n
        for mask in family.masks:
            d = np.repeat(mask, block).astype(float)
            commutator = max(commutator, spectral_norm((d[:, None] - d[None, :]) * X))

    N = family.height
    pairs = [(j, j + 1) for j in range(N - 1)]
    if cyclic and N > 1:
        pairs.append((N - 1, 0))
    shifts = tuple(
        float(np.any(alpha.apply_mask(family.masks[i]) != family.masks[k]))
        for i, k in pairs
    )
    covered = family.covered
    report = RokhlinReport(commutator, shifts, 1 - covered, covered, eps, cyclic)
    logger.debug("Verifica di Rokhlin: commutatore %.3g, shift %.3g, traccia residua %.3g",
                 commutator, report.shift_defect, float(report.residual_trace))
    return report


@dataclass(frozen=True, eq=False)
class PipelineResult:
    tower: TowerSpec
    n: int
    points: tuple[TorusPoint, ...]
    alpha: ModelAutomorphism
    family: ProjectionFamily
    report: RokhlinReport
    attempts: tuple[tuple[int, bool], ...]

    @property
    def levels_ok(self) -> bool:
        return self.family.agreement >= 1 - Fraction(self.tower.delta)

    @property
    def closure_residual(self) -> Fraction:
        return cyclic_closure_residual(self.alpha, self.tower.height)

    @property
    def passed(self) -> bool:
        return self.report.passed and self.levels_ok


def _candidate_sizes(dim: int, min_points: int, span: int) -> list[int]:
    sizes = []
    for n in range(min_points, min_points + span + 1):
        root = round(n ** (1.0 / dim))
        if dim == 1 or root ** dim == n:
            sizes.append(n)
    return sizes


def run_rokhlin_pipeline(map_: MinimalMap, N: int, delta: float, eta: float, eps: float,
                         tests: Sequence, min_points: int, cyclic: bool = False,
                         progress_callback: Optional[Callable[[str, int, int], None]] = None) -> PipelineResult:
    """
    Torre, campione a griglia, automorfismo di modello dalla matching ottima,
    livelli della torre propagati con α e verifica di Rokhlin, provando le
    cardinalità da min_points in su. Restituisce la prima che supera la
    verifica con livelli concordi con la torre su almeno 1 − δ dei punti
    (o l'ultima tentata).

    Con `cyclic` il ritorno ‖α(e_N) − e_1‖ è misurato sulle stesse e_j.
    """
    tower = build_tower(map_, N, delta, eta)
    sizes = _candidate_sizes(map_.dim, min_points, GRID_SEARCH_SPAN * N)
    if not sizes:
        raise ValueError(f"Nessuna griglia di dimensione {map_.dim} tra {min_points} e {min_points + GRID_SEARCH_SPAN * N}")
    attempts = []
    result = None
    for i, n in enumerate(sizes):
        points = tuple(grid_points(map_.dim, n))
        alpha = ModelAutomorphism.from_stage(points, map_)
        family = tower_projections(tower, points, 1, alpha)
        report = check_tracial_rokhlin(family, alpha, tests, eps, cyclic)
        attempts.append((n, report.passed and family.agreement >= 1 - Fraction(delta)))
        result = PipelineResult(tower, n, points, alpha, family, report, tuple(attempts))
        if progress_callback:
            progress_callback(f"n={n}", i + 1, len(sizes))
        if result.passed:
            logger.info("Verifica di Rokhlin superata con n=%d", n)
            return result
        logger.debug("n=%d: ritorno %.3g, concordanza %.4f, residuo di chiusura %.4f", n,
                     report.shift_defect, float(family.agreement), float(result.closure_residual))
    logger.info("Nessuna cardinalità supera la verifica di Rokhlin (ultima n=%d)", result.n)
    return result
