"""
Rokhlin Model Checker - Limit Algebra Module
============================================
Modelli di stadio del limite induttivo lim (C(X)⊗M_{k(n)}, φ_n): mappe di
connessione a blocchi, automorfismi di stadio ψ^♮⊗id, successione di
intertwiner V_n con difetti misurati stadio per stadio, traccia di stadio
e manifest di esecuzione riproducibile.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from dynamics import MinimalMap, TorusPoint, DimensionError
from matalg import (
    IntertwinerMatrix, MatrixFunction, block_index, intertwining_defect,
    modulus_threshold, modulus_defect_bound, spectral_norm,
)
from matching import Permutation, find_matching, matching_defect, min_bottleneck
from measure import matching_aware_sample
from parallel_runner import ParallelEvaluator

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1


class NoMatchingError(RuntimeError):
    """Nessuna permutazione sotto la soglia richiesta a uno stadio"""

    def __init__(self, stage: int, threshold: float, bottleneck: float):
        super().__init__(
            f"Stadio {stage}: nessuna matching con difetto < {threshold:.6g} "
            f"(bottleneck raggiungibile {bottleneck:.6g})"
        )
        self.stage = stage
        self.threshold = threshold
        self.bottleneck = bottleneck


def default_eps(stages: int) -> list[float]:
    """ε_n = 2^{−n}, n = 1..stages"""
    return [2.0 ** -(n + 1) for n in range(stages)]


@dataclass(frozen=True)
class StageModel:
    """
    Parametri a_n, b_n (l_n = b_n − a_n punti per stadio) e archivio dei
    punti x(j, n) usati dalle mappe di connessione.
    """
    a: tuple[int, ...]
    b: tuple[int, ...]
    samples: tuple[tuple[TorusPoint, ...], ...]
    permutations: tuple[Permutation, ...] = ()

    def __post_init__(self):
        a = tuple(int(v) for v in self.a)
        b = tuple(int(v) for v in self.b)
        samples = tuple(tuple(s) for s in self.samples)
        if not (len(a) == len(b) == len(samples)):
            raise ValueError(f"Lunghezze incoerenti: a={len(a)}, b={len(b)}, campioni={len(samples)}")
        for n, (an, bn, pts) in enumerate(zip(a, b, samples)):
            if bn < 2 or an < 1 or bn - an < 1:
                raise ValueError(f"Stadio {n}: serve b ≥ 2, a ≥ 1, l = b − a ≥ 1 (a={an}, b={bn})")
            if len(pts) != bn - an:
                raise ValueError(f"Stadio {n}: servono {bn - an} punti, ricevuti {len(pts)}")
        for n in range(len(a) - 1):
            # a_{n+1}/b_{n+1} ≤ a_n/b_n
            if a[n + 1] * b[n] > a[n] * b[n + 1]:
                raise ValueError(f"a_n/b_n deve essere non crescente (stadi {n} e {n + 1})")
        if len(a) > 1 and a[-1] * b[0] >= a[0] * b[-1]:
            logger.warning("a_n/b_n non decresce (%d/%d all'ultimo stadio, %d/%d al primo): "
                           "la traccia del limite potrebbe non essere unica", a[-1], b[-1], a[0], b[0])
        dims = {p.dim for pts in samples for p in pts}
        if len(dims) > 1:
            raise DimensionError(f"Punti di dimensioni diverse: {sorted(dims)}")
        perms = tuple(self.permutations)
        if perms and len(perms) != len(a):
            raise ValueError(f"Servono {len(a)} permutazioni, ricevute {len(perms)}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "permutations", perms)

    @property
    def stages(self) -> int:
        return len(self.a)

    @property
    def l(self) -> tuple[int, ...]:
        return tuple(bn - an for an, bn in zip(self.a, self.b))

    def k(self, n: int) -> int:
        """k(0) = 1, k(n+1) = b_n·k(n)"""
        if not 0 <= n <= self.stages:
            raise ValueError(f"Stadio {n} fuori da 0..{self.stages}")
        return math.prod(self.b[:n])

    @classmethod
    def build(cls, map_: MinimalMap, a: Sequence[int], b: Sequence[int],
              testset: Sequence[MatrixFunction], eps: Optional[Sequence[float]] = None) -> "StageModel":
        """
        Campioni di stadio ε_n-densi la cui bottleneck matching sotto ψ resta
        sotto min(ε_n, δ_n), con δ_n la soglia che certifica difetti < ε_n.
        """
        eps = list(eps) if eps is not None else default_eps(len(a))
        samples = []
        for n, (an, bn) in enumerate(zip(a, b)):
            threshold = stage_threshold(testset, eps[n])
            mu, eps_star, _ = matching_aware_sample(map_, eps[n], {bn - an}, threshold)
            logger.info("Stadio %d: %d punti, ε* = %.3g (soglia %.3g)", n, mu.n, eps_star, threshold)
            samples.append(mu.support)
        return cls(tuple(a), tuple(b), tuple(samples))


def stage_threshold(testset: Sequence, eps: float) -> float:
    """min(ε, δ) con δ tale che modulus_defect_bound(g, δ) < ε per ogni g"""
    return min([eps] + [modulus_threshold(g, eps) for g in testset])


@dataclass(frozen=True, eq=False)
class BlockDiagonalFunction:
    """
    Funzione di stadio a blocchi: ogni blocco è (g, None), valutato nel
    punto, oppure (g, x), costante pari a g(x).
    """
    blocks: tuple[tuple[object, Optional[TorusPoint]], ...]

    @property
    def size(self) -> int:
        return sum(g.size for g, _ in self.blocks)

    @property
    def dim(self) -> int:
        return self.blocks[0][0].dim

    def evaluate_many(self, coords) -> np.ndarray:
        if not isinstance(coords, np.ndarray):
            coords = [p.coords if isinstance(p, TorusPoint) else tuple(p) for p in coords]
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        count = coords.shape[0]
        out = np.zeros((count, self.size, self.size), dtype=complex)
        offset = 0
        for g, point in self.blocks:
            q = g.size
            if point is None:
                out[:, offset:offset + q, offset:offset + q] = g.evaluate_many(coords)
            else:
                out[:, offset:offset + q, offset:offset + q] = g.evaluate_many(np.array([point.coords]))[0]
            offset += q
        return out

    def __call__(self, x) -> np.ndarray:
        return self.evaluate_many([x])[0]

    def compose(self, map_: MinimalMap) -> "BlockDiagonalFunction":
        """Solo i blocchi funzione vengono composti con ψ"""
        return BlockDiagonalFunction(tuple(
            (g.compose(map_) if point is None else g, point) for g, point in self.blocks
        ))

    def modulus(self, delta: float) -> float:
        return max((g.modulus(delta) for g, point in self.blocks if point is None), default=0.0)


@dataclass(frozen=True, eq=False)
class ConjugatedFunction:
    """x ↦ W·inner(x)·W*, con W data da un array di indici o da una matrice"""
    inner: object
    conjugator: Union[np.ndarray, IntertwinerMatrix]

    @property
    def size(self) -> int:
        return self.inner.size

    @property
    def dim(self) -> int:
        return self.inner.dim

    def evaluate_many(self, coords) -> np.ndarray:
        values = self.inner.evaluate_many(coords)
        if isinstance(self.conjugator, IntertwinerMatrix):
            W = self.conjugator.matrix
            return W[None, :, :] @ values @ W.conj().T[None, :, :]
        p = self.conjugator
        return values[:, p][:, :, p]

    def __call__(self, x) -> np.ndarray:
        return self.evaluate_many([x])[0]

    def compose(self, map_: MinimalMap) -> "ConjugatedFunction":
        return ConjugatedFunction(self.inner.compose(map_), self.conjugator)


@dataclass(frozen=True)
class StagePermutation:
    """
    Intertwiner di permutazione di stadio come array di indici p:
    V A V* = A[p][:, p]. Il prodotto P1·P2 ha indici p2[p1].
    """
    indices: tuple[int, ...]

    @classmethod
    def identity(cls, size: int) -> "StagePermutation":
        return cls(tuple(range(size)))

    @property
    def size(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=np.int64)

    def amplified(self, q: int) -> np.ndarray:
        """Indici di V ⊗ 1_q"""
        return block_index(self.as_array(), q)

    def next_stage(self, a: int, b: int, s: Permutation) -> "StagePermutation":
        """
        V_{n+1} = φ_n(V_n)·U_{n+1}: φ_n(V_n) ripete V_n in ciascuno dei b
        blocchi; U_{n+1} manda il blocco punto i nel blocco σ(i), σ = s⁻¹.
        """
        k = self.size
        p = self.as_array()
        p_phi = (np.arange(b)[:, None] * k + p[None, :]).reshape(-1)
        sigma = s.inverse().as_array()
        p_u = np.arange(b * k)
        p_u[a * k:] = a * k + block_index(sigma, k)
        return StagePermutation(tuple(int(v) for v in p_u[p_phi]))

    def to_intertwiner(self) -> IntertwinerMatrix:
        W = np.zeros((self.size, self.size), dtype=complex)
        W[np.arange(self.size), self.as_array()] = 1.0
        return IntertwinerMatrix(W)


def connecting_map(f, model: StageModel, n: int) -> BlockDiagonalFunction:
    """φ_n(f) = diag(f ×a_n, f(x(1,n)), …, f(x(l_n,n)))"""
    if not 0 <= n < model.stages:
        raise ValueError(f"Stadio {n} fuori da 0..{model.stages - 1}")
    k = model.k(n)
    if f.size % k:
        raise DimensionError(f"Dimensione {f.size} non multipla di k({n}) = {k}")
    blocks = [(f, None)] * model.a[n] + [(f, x) for x in model.samples[n]]
    return BlockDiagonalFunction(tuple(blocks))


def lift(g, model: StageModel, n: int):
    """φ_{0,n}(g)"""
    f = g
    for j in range(n):
        f = connecting_map(f, model, j)
    return f


def stage_automorphism(f, map_: MinimalMap, V: Optional[Union[IntertwinerMatrix, StagePermutation]] = None):
    """ad(V)(f∘ψ), oppure f∘ψ senza V"""
    composed = f.compose(map_)
    if V is None:
        return composed
    if isinstance(V, StagePermutation):
        if f.size % V.size:
            raise DimensionError(f"Intertwiner di dimensione {V.size} su funzione di dimensione {f.size}")
        return ConjugatedFunction(composed, V.amplified(f.size // V.size))
    if V.size != f.size:
        raise DimensionError(f"Intertwiner di dimensione {V.size} su funzione di dimensione {f.size}")
    return ConjugatedFunction(composed, V)


@dataclass(frozen=True)
class StageDefect:
    stage: int
    points: int
    eps: float
    threshold: float
    bottleneck: float
    defect: float
    certificate: float
    permutation: Permutation

    @property
    def passed(self) -> bool:
        return self.defect < self.eps

    @property
    def certified(self) -> bool:
        return self.defect <= self.certificate + 1e-12

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "points": self.points,
            "eps": self.eps,
            "threshold": self.threshold,
            "bottleneck": self.bottleneck,
            "defect": self.defect,
            "certificate": self.certificate,
            "passed": self.passed,
            "permutation": self.permutation.to_json(),
        }


@dataclass(frozen=True, eq=False)
class IntertwinerReport:
    """
    Difetti di stadio. Gli intertwiner V_n hanno dimensione k(n) e vengono
    ricostruiti su richiesta dalle permutazioni di stadio.
    """
    stages: tuple[StageDefect, ...]
    a: tuple[int, ...]
    b: tuple[int, ...]

    def intertwiner(self, n: int) -> StagePermutation:
        """V_n, con V_0 = 1"""
        if not 0 <= n <= len(self.stages):
            raise ValueError(f"Stadio {n} fuori da 0..{len(self.stages)}")
        V = StagePermutation.identity(1)
        for j in range(n):
            V = V.next_stage(self.a[j], self.b[j], self.stages[j].permutation)
        return V

    @property
    def telescoped(self) -> float:
        """Difetto del diagramma composto dallo stadio 0: massimo dei difetti di stadio"""
        return max((s.defect for s in self.stages), default=0.0)

    @property
    def telescoped_bound(self) -> float:
        return sum(s.defect for s in self.stages)

    @property
    def eps_total(self) -> float:
        return sum(s.eps for s in self.stages)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.stages) and self.telescoped < self.eps_total


def build_intertwiners(model: StageModel, map_: MinimalMap, testset: Sequence,
                       eps: Optional[Sequence[float]] = None,
                       evaluator: Optional[ParallelEvaluator] = None,
                       progress_callback: Optional[Callable[[str, int, int], None]] = None) -> IntertwinerReport:
    """
    Per ogni stadio: matching s_n sotto la soglia min(ε_n, δ_n) e difetto
    misurato max_g max_j ‖g(x_j) − g(ψ(x_{s(j)}))‖ con il relativo
    certificato. Gli intertwiner V_{n+1} = φ_n(V_n)·U_{n+1} si ricavano da
    report.intertwiner(n + 1).
    """
    eps = list(eps) if eps is not None else default_eps(model.stages)
    if len(eps) != model.stages:
        raise ValueError(f"Servono {model.stages} valori di ε, ricevuti {len(eps)}")
    evaluator = evaluator or ParallelEvaluator(1)
    stages = []
    for n in range(model.stages):
        points = list(model.samples[n])
        threshold = stage_threshold(testset, eps[n])
        if model.permutations:
            s = model.permutations[n]
        else:
            s = find_matching(points, map_, threshold)
            if s is None:
                bottleneck, _ = min_bottleneck(points, map_)
                raise NoMatchingError(n, threshold, bottleneck)
        bottleneck = matching_defect(points, map_, s)
        defects = evaluator.map(lambda g: intertwining_defect(g, points, map_, s), testset)
        certificate = 0.0
        if bottleneck > 0:
            certificate = max((modulus_defect_bound(g, bottleneck) for g in testset), default=0.0)
        stage = StageDefect(n, len(points), eps[n], threshold, bottleneck,
                            max(defects, default=0.0), certificate, s)
        stages.append(stage)
        logger.info("Stadio %d: difetto %.3g (ε_n = %.3g, certificato %.3g)",
                    n, stage.defect, eps[n], certificate)
        if progress_callback:
            progress_callback(f"Stadio {n}", n + 1, model.stages)
    return IntertwinerReport(tuple(stages), model.a, model.b)


def dense_stage_defect(g, model: StageModel, map_: MinimalMap, n: int,
                       report: IntertwinerReport, coords: np.ndarray) -> float:
    """
    ‖φ_n(ad(V_n)α_n(F)) − ad(V_{n+1})α_{n+1}(φ_n(F))‖ con F = φ_{0,n}(g),
    sulle matrici dense valutate nei punti dati.
    """
    F = lift(g, model, n)
    V_n, V_next = report.intertwiner(n), report.intertwiner(n + 1)
    left = connecting_map(stage_automorphism(F, map_, V_n), model, n)
    right = stage_automorphism(connecting_map(F, model, n), map_, V_next)
    diff = left.evaluate_many(coords) - right.evaluate_many(coords)
    return max(spectral_norm(D) for D in diff)


def dense_telescoped_defect(g, model: StageModel, map_: MinimalMap,
                            report: IntertwinerReport, coords: np.ndarray) -> float:
    """‖φ_{0,S}(α_0(g)) − ad(V_S)α_S(φ_{0,S}(g))‖ sul diagramma composto"""
    S = model.stages
    left = lift(g.compose(map_), model, S)
    right = stage_automorphism(lift(g, model, S), map_, report.intertwiner(S))
    diff = left.evaluate_many(coords) - right.evaluate_many(coords)
    return max(spectral_norm(D) for D in diff)


def _normalized_trace_values(f, coords: np.ndarray) -> np.ndarray:
    values = f.evaluate_many(coords)
    return np.trace(values, axis1=1, axis2=2) / f.size


def _weights(model: StageModel, m: int, n: int) -> list[float]:
    """c_m = 1, c_{j+1} = c_j·a_j/b_j"""
    c = [1.0]
    for j in range(m, n):
        c.append(c[-1] * model.a[j] / model.b[j])
    return c


def stage_trace(f: MatrixFunction, model: StageModel, m: int, n: int,
                basepoint: TorusPoint) -> tuple[complex, float]:
    """
    Traccia normalizzata di φ_{m,n}(f) nel punto base:
    c_n·t(x₀) + Σ_j (c_j/b_j)·Σ_i t(x(i,j)), con t la traccia normalizzata
    di f. Il limite di oscillazione è c_n·osc(t).
    """
    if not 0 <= m < n <= model.stages:
        raise ValueError(f"Servono 0 ≤ m < n ≤ {model.stages}: m={m}, n={n}")
    c = _weights(model, m, n)
    value = c[-1] * _normalized_trace_values(f, np.array([basepoint.coords]))[0]
    for idx, j in enumerate(range(m, n)):
        coords = np.array([p.coords for p in model.samples[j]])
        value += c[idx] / model.b[j] * _normalized_trace_values(f, coords).sum()
    oscillation = c[-1] * f.trace_polynomial().oscillation_bound
    return complex(value), float(oscillation)


@dataclass(frozen=True)
class TraceGap:
    gap: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.gap <= self.bound + 1e-12


def trace_invariance_gap(f: MatrixFunction, model: StageModel, map_: MinimalMap, m: int, n: int,
                         basepoint: TorusPoint, bottlenecks: Sequence[float]) -> TraceGap:
    """
    |τ(f) − τ(f∘ψ)| a confronto con c_n·osc(t) + Σ_j (c_j·l_j/b_j)·ω_t(ε*_j),
    dove ε*_j è il difetto di matching dello stadio j.
    """
    value, _ = stage_trace(f, model, m, n, basepoint)
    shifted, _ = stage_trace(f.compose(map_), model, m, n, basepoint)
    t = f.trace_polynomial()
    scale = f.lipschitz_factor
    c = _weights(model, m, n)
    bound = c[-1] * t.oscillation_bound
    for idx, j in enumerate(range(m, n)):
        bound += c[idx] * model.l[j] / model.b[j] * t.modulus(bottlenecks[j] * scale)
    return TraceGap(abs(value - shifted), bound)


def run_manifest(model: StageModel, map_: MinimalMap, testset: Sequence[MatrixFunction],
                 eps: Sequence[float], report: IntertwinerReport, seed: int) -> dict:
    """Tutto ciò che serve per rieseguire la costruzione"""
    return {
        "schema": MANIFEST_SCHEMA,
        "seed": seed,
        "map": map_.to_json(),
        "a": list(model.a),
        "b": list(model.b),
        "eps": list(eps),
        "samples": [[p.to_json() for p in pts] for pts in model.samples],
        "testset": [g.to_json() for g in testset],
        "stages": [s.to_json() for s in report.stages],
        "telescoped": report.telescoped,
        "eps_total": report.eps_total,
    }


def replay_manifest(manifest: dict, evaluator: Optional[ParallelEvaluator] = None) -> dict:
    """Ricostruisce modello e intertwiner dal manifest e ne produce uno nuovo"""
    map_ = MinimalMap.from_json(manifest["map"])
    samples = tuple(tuple(TorusPoint.from_json(c) for c in pts) for pts in manifest["samples"])
    model = StageModel(tuple(manifest["a"]), tuple(manifest["b"]), samples)
    testset = [MatrixFunction.from_json(g) for g in manifest["testset"]]
    eps = list(manifest["eps"])
    report = build_intertwiners(model, map_, testset, eps, evaluator)
    return run_manifest(model, map_, testset, eps, report, manifest.get("seed", 0))
