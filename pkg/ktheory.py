"""
Rokhlin Model Checker - K-Theory Module
=======================================
Contabilità intera esatta: mappe standard tra bouquet di cerchi, quadrati
di intertwining tra catene di matrici, mappe indotte sul gruppo limite e
matrici K₁ (grado uno) delle trasformazioni di Furstenberg, con un oracolo
numerico del numero di avvolgimento.
"""

import logging
import operator
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import sympy
from more_itertools import pairwise

from dynamics import MinimalMap, apply_many, wrap

logger = logging.getLogger(__name__)

MIN_WINDING_SAMPLES = 16
ALIAS_LIMIT = 0.45
CLOSURE_TOLERANCE = 1e-9
RESIDUE_LIMIT = 0.1


class ShapeError(ValueError):
    """Dimensioni di matrici incompatibili"""


class AliasingError(ValueError):
    """Passo angolare troppo grande per seguire il ramo dell'argomento"""


class OpenLoopError(ValueError):
    """Il cammino campionato non è chiuso"""


class SummandError(ValueError):
    """γ₀ non fissa l'addendo Z"""


@dataclass(frozen=True)
class IntMatrix:
    """Matrice di interi Python (precisione arbitraria)"""
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(operator.index(v) for v in row) for row in self.rows)
        if rows and len({len(r) for r in rows}) != 1:
            raise ShapeError("Righe di lunghezza diversa")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def identity(cls, n: int) -> "IntMatrix":
        return cls(tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @classmethod
    def zeros(cls, r: int, c: int) -> "IntMatrix":
        return cls(tuple((0,) * c for _ in range(r)))

    @classmethod
    def column(cls, values: Sequence[int]) -> "IntMatrix":
        return cls(tuple((v,) for v in values))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), (len(self.rows[0]) if self.rows else 0)

    def __getitem__(self, index: tuple[int, int]) -> int:
        i, j = index
        return self.rows[i][j]

    def __matmul__(self, other: "IntMatrix") -> "IntMatrix":
        r, c = self.shape
        c2, k = other.shape
        if c != c2:
            raise ShapeError(f"Prodotto {r}×{c} · {c2}×{k} non definito")
        cols = list(zip(*other.rows)) if other.rows else [()] * k
        return IntMatrix(tuple(
            tuple(sum(a * b for a, b in zip(row, col)) for col in cols)
            for row in self.rows
        ))

    def __mul__(self, scalar: int) -> "IntMatrix":
        scalar = operator.index(scalar)
        return IntMatrix(tuple(tuple(scalar * v for v in row) for row in self.rows))

    __rmul__ = __mul__

    def transpose(self) -> "IntMatrix":
        if not self.rows:
            return self
        return IntMatrix(tuple(zip(*self.rows)))

    def det(self) -> int:
        r, c = self.shape
        if r != c:
            raise ShapeError(f"Determinante di una matrice {r}×{c}")
        if r == 0:
            return 1
        return int(sympy.Matrix(self.rows).det())

    def is_identity(self) -> bool:
        r, c = self.shape
        return r == c and self == IntMatrix.identity(r)

    def to_json(self) -> list[list[int]]:
        return [list(row) for row in self.rows]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[int]]) -> "IntMatrix":
        return cls(tuple(tuple(row) for row in data))

    @classmethod
    def block_diag(cls, *blocks: "IntMatrix") -> "IntMatrix":
        total_cols = sum(b.shape[1] for b in blocks)
        rows = []
        offset = 0
        for b in blocks:
            r, c = b.shape
            for row in b.rows:
                rows.append((0,) * offset + row + (0,) * (total_cols - offset - c))
            offset += c
        return cls(tuple(rows))


@dataclass(frozen=True)
class WedgePoint:
    """Punto di un bouquet di cerchi: indice del cerchio e angolo in giri"""
    circle: int
    angle: float

    def __post_init__(self):
        angle = float(wrap(self.angle))
        object.__setattr__(self, "angle", angle)
        # il punto base è comune a tutti i cerchi
        object.__setattr__(self, "circle", 0 if angle == 0.0 else int(self.circle))

    @property
    def is_basepoint(self) -> bool:
        return self.angle == 0.0


@dataclass(frozen=True)
class StandardMap:
    """
    Mappa standard tra bouquet di cerchi.

    `matrix` è in orientamento per colonne di avvolgimento: l'entrata [j][i]
    è il grado con cui il cerchio sorgente i si avvolge sul cerchio
    bersaglio j. `kappa` è la trasposta.
    """
    matrix: IntMatrix

    @property
    def source_circles(self) -> int:
        return self.matrix.shape[1]

    @property
    def target_circles(self) -> int:
        return self.matrix.shape[0]

    @property
    def kappa(self) -> IntMatrix:
        return self.matrix.transpose()

    def evaluate(self, circle: int, t: float) -> WedgePoint:
        """
        Immagine del punto t del cerchio sorgente `circle`: il parametro è
        diviso in un segmento per cerchio bersaglio, percorso con grado
        matrix[j][circle]. Gli estremi dei segmenti vanno nel punto base.
        """
        if not 0 <= circle < self.source_circles:
            raise ShapeError(f"Cerchio sorgente {circle} fuori da 0..{self.source_circles - 1}")
        r = self.target_circles
        if r == 0:
            return WedgePoint(0, 0.0)
        scaled = float(t) * r
        j = min(int(scaled), r - 1)
        local = scaled - j
        return WedgePoint(j, wrap(self.matrix[j, circle] * local))

    def __call__(self, p: WedgePoint) -> WedgePoint:
        return self.evaluate(p.circle, p.angle)

    def loop(self, circle: int) -> Callable[[float], WedgePoint]:
        return lambda t: self.evaluate(circle, t)


def standard_map(matrix: IntMatrix) -> StandardMap:
    return StandardMap(matrix)


def compose_standard(s2: StandardMap, s1: StandardMap) -> StandardMap:
    """s2∘s1, con matrice M2·M1"""
    if s1.target_circles != s2.source_circles:
        raise ShapeError(
            f"s1 ha {s1.target_circles} cerchi bersaglio, s2 ne accetta {s2.source_circles}"
        )
    return StandardMap(s2.matrix @ s1.matrix)


def _signed(step: float) -> float:
    return (step + 0.5) % 1.0 - 0.5


def _check_step(step: float, where: str) -> float:
    if abs(step) > ALIAS_LIMIT:
        raise AliasingError(f"Passo angolare {step:.3f} giri {where}: aumentare i campioni")
    return step


def _round_windings(totals: Sequence[float]) -> list[int]:
    windings = []
    for c, total in enumerate(totals):
        k = round(total)
        if abs(total - k) > RESIDUE_LIMIT:
            raise AliasingError(f"Residuo {abs(total - k):.3f} sul cerchio {c}")
        windings.append(int(k))
    return windings


def _sample_loop(loop, samples: int) -> list:
    if callable(loop):
        if samples < MIN_WINDING_SAMPLES:
            raise ValueError(f"Servono almeno {MIN_WINDING_SAMPLES} campioni, ricevuti {samples}")
        return [loop(t) for t in np.linspace(0.0, 1.0, samples + 1)]
    points = list(loop)
    if len(points) < MIN_WINDING_SAMPLES:
        raise ValueError(f"Servono almeno {MIN_WINDING_SAMPLES} campioni, ricevuti {len(points)}")
    return points


def winding_vector(loop: Union[Callable[[float], WedgePoint], Sequence[WedgePoint]],
                   samples: int = 1024, circles: Optional[int] = None) -> IntMatrix:
    """
    Numeri di avvolgimento per cerchio di un cammino chiuso nel bouquet,
    sommando gli incrementi angolari con segno. Un cambio di cerchio passa
    dal punto base.
    """
    points = _sample_loop(loop, samples)
    first, last = points[0], points[-1]
    gap = abs(_signed(last.angle - first.angle))
    same_place = (first.circle == last.circle or (first.is_basepoint and last.is_basepoint))
    if not same_place or gap > CLOSURE_TOLERANCE:
        raise OpenLoopError(f"Estremi distinti: {first} e {last}")

    count = circles if circles is not None else 1 + max(p.circle for p in points)
    totals = [0.0] * count
    for p, q in pairwise(points):
        if max(p.circle, q.circle) >= count:
            raise ShapeError(f"Cerchio {max(p.circle, q.circle)} oltre i {count} dichiarati")
        if p.circle == q.circle:
            totals[p.circle] += _check_step(_signed(q.angle - p.angle), f"sul cerchio {p.circle}")
        else:
            totals[p.circle] += _check_step(_signed(-p.angle), f"verso il punto base da {p.circle}")
            totals[q.circle] += _check_step(_signed(q.angle), f"dal punto base verso {q.circle}")
    return IntMatrix.column(_round_windings(totals))


def torus_winding_vector(loop: Callable[[float], Sequence[float]], k: int, samples: int = 1024) -> IntMatrix:
    """Avvolgimento coordinata per coordinata di un cammino chiuso in T^k"""
    if samples < MIN_WINDING_SAMPLES:
        raise ValueError(f"Servono almeno {MIN_WINDING_SAMPLES} campioni, ricevuti {samples}")
    coords = np.array([np.asarray(loop(t), dtype=float).reshape(-1) for t in np.linspace(0.0, 1.0, samples + 1)])
    if coords.shape[1] != k:
        raise ShapeError(f"Cammino in dimensione {coords.shape[1]}, attesa {k}")
    steps = np.mod(np.diff(coords, axis=0) + 0.5, 1.0) - 0.5
    if np.abs(steps).max(initial=0.0) > ALIAS_LIMIT:
        raise AliasingError("Passo angolare troppo grande: aumentare i campioni")
    closure = np.abs(np.mod(coords[-1] - coords[0] + 0.5, 1.0) - 0.5).max()
    if closure > CLOSURE_TOLERANCE:
        raise OpenLoopError(f"Estremi distinti di {closure:.3g} giri")
    return IntMatrix.column(_round_windings(steps.sum(axis=0).tolist()))


def furstenberg_k1(d: Sequence[int], k: int) -> IntMatrix:
    """Blocco di grado uno su K₁(C(T^k)): unipotente, sottodiagonale d_j"""
    if len(d) != k - 1:
        raise ShapeError(f"Servono {k - 1} esponenti per k={k}, ricevuti {len(d)}")
    rows = [[int(i == j) for j in range(k)] for i in range(k)]
    for j, dj in enumerate(d):
        rows[j + 1][j] = operator.index(dj)
    return IntMatrix(tuple(tuple(r) for r in rows))


def k1_pullback(d: Sequence[int], k: int) -> IntMatrix:
    """Azione di ψ^♮ su K₁ in grado uno (trasposta di furstenberg_k1)"""
    return furstenberg_k1(d, k).transpose()


def k1_from_windings(map_: MinimalMap, samples: int = 1024) -> IntMatrix:
    """Colonna i: avvolgimento dell'immagine del cammino coordinato i"""
    k = map_.dim
    columns = []
    for i in range(k):
        def loop(t, i=i):
            x = np.zeros((1, k))
            x[0, i] = wrap(t)
            return apply_many(map_, x)[0]
        columns.append([row[0] for row in torus_winding_vector(loop, k, samples).rows])
    return IntMatrix(tuple(zip(*columns)))


@dataclass(frozen=True)
class SquareCheck:
    index: int
    identity: int
    passed: bool


@dataclass(frozen=True)
class ChainCheckReport:
    checks: tuple[SquareCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> Optional[SquareCheck]:
        return next((c for c in self.checks if not c.passed), None)


IDENTITY_LABELS = {
    1: "h[n+1]·κ[n] = κ[n+1]·h[n]",
    2: "h[n+1]·h̄[n] = κ[n+1]·κ[n]",
    3: "h̄[n+1]·h[n] = κ[n+1]·κ[n]",
}


def check_intertwining_squares(h: Sequence[IntMatrix], hbar: Sequence[IntMatrix],
                               kappa: Sequence[IntMatrix]) -> ChainCheckReport:
    """Le tre identità dei quadrati di intertwining, verificate esattamente"""
    if not (len(h) == len(hbar) == len(kappa)):
        raise ShapeError(f"Catene di lunghezze diverse: {len(h)}, {len(hbar)}, {len(kappa)}")
    checks = []
    for n in range(len(h) - 1):
        target = kappa[n + 1] @ kappa[n]
        checks.append(SquareCheck(n, 1, h[n + 1] @ kappa[n] == kappa[n + 1] @ h[n]))
        checks.append(SquareCheck(n, 2, h[n + 1] @ hbar[n] == target))
        checks.append(SquareCheck(n, 3, hbar[n + 1] @ h[n] == target))
    report = ChainCheckReport(tuple(checks))
    if report.first_failure is not None:
        failure = report.first_failure
        logger.info("Quadrato non commutativo all'indice %d: %s", failure.index, IDENTITY_LABELS[failure.identity])
    return report


@dataclass(frozen=True)
class LimitGroupModel:
    """
    Gruppi di stadio Z ⊕ G₀₀ ⊕ G₁ con G₀₀ = Z^rank00 e G₁ = Z^rank1;
    connessione b_n sull'addendo Z e a_n su G₀₀ e G₁.
    """
    rank00: int
    rank1: int
    a: tuple[int, ...]
    b: tuple[int, ...]

    def __post_init__(self):
        a = tuple(operator.index(v) for v in self.a)
        b = tuple(operator.index(v) for v in self.b)
        if len(a) != len(b):
            raise ValueError(f"Successioni a e b di lunghezze diverse: {len(a)} e {len(b)}")
        for n, (an, bn) in enumerate(zip(a, b)):
            if bn < 2 or an < 1 or bn - an < 1:
                raise ValueError(f"Stadio {n}: serve b ≥ 2, a ≥ 1, b − a ≥ 1 (a={an}, b={bn})")
        if self.rank00 < 0 or self.rank1 < 0:
            raise ValueError("I ranghi devono essere non negativi")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def stages(self) -> int:
        return len(self.a)

    @property
    def k(self) -> list[int]:
        """k(0) = 1, k(n+1) = b_n·k(n)"""
        values = [1]
        for bn in self.b:
            values.append(values[-1] * bn)
        return values

    def connecting_matrices(self, n: int) -> tuple[IntMatrix, IntMatrix]:
        c0 = IntMatrix.block_diag(IntMatrix(((self.b[n],),)), IntMatrix.identity(self.rank00) * self.a[n])
        c1 = IntMatrix.identity(self.rank1) * self.a[n]
        return c0, c1


@dataclass(frozen=True)
class StageMaps:
    stage: int
    gamma0: IntMatrix
    gamma1: IntMatrix
    commutes0: bool
    commutes1: bool


@dataclass(frozen=True)
class InducedLimitMap:
    stages: tuple[StageMaps, ...]

    @property
    def commutes(self) -> bool:
        return all(s.commutes0 and s.commutes1 for s in self.stages)

    @property
    def is_identity(self) -> bool:
        return all(s.gamma0.is_identity() and s.gamma1.is_identity() for s in self.stages)


def induced_limit_map(gamma0: IntMatrix, gamma1: IntMatrix, model: LimitGroupModel) -> InducedLimitMap:
    """Mappe di stadio di I(γ₀)⊕I(γ₁) e commutazione con le connessioni"""
    if gamma0.shape != (1 + model.rank00,) * 2:
        raise ShapeError(f"γ₀ deve essere {1 + model.rank00}×{1 + model.rank00}, ricevuta {gamma0.shape}")
    if gamma1.shape != (model.rank1,) * 2:
        raise ShapeError(f"γ₁ deve essere {model.rank1}×{model.rank1}, ricevuta {gamma1.shape}")
    e0 = tuple(int(j == 0) for j in range(1 + model.rank00))
    if gamma0.rows[0] != e0 or tuple(row[0] for row in gamma0.rows) != e0:
        raise SummandError(f"γ₀ deve fissare l'addendo Z: riga {gamma0.rows[0]}")
    if model.rank1 and gamma1.det() == 0:
        raise ValueError("γ₁ non è invertibile sui razionali (determinante nullo)")

    stages = []
    for n in range(model.stages):
        c0, c1 = model.connecting_matrices(n)
        stages.append(StageMaps(
            stage=n,
            gamma0=gamma0,
            gamma1=gamma1,
            commutes0=gamma0 @ c0 == c0 @ gamma0,
            commutes1=gamma1 @ c1 == c1 @ gamma1,
        ))
    return InducedLimitMap(tuple(stages))
