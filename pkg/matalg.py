"""
Rokhlin Model Checker - Matrix Algebra Module
=============================================
Funzioni a valori matriciali f ∈ C(X)⊗M_m con entrate polinomi
trigonometrici, omomorfismi di valutazione diagonale, intertwiner di
permutazione, norme operatoriali e stime dei difetti di intertwining.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from dynamics import MinimalMap, TorusPoint, DimensionError, apply_many, lipschitz
from matching import Permutation

logger = logging.getLogger(__name__)

UNITARITY_TOLERANCE = 1e-10
NORM_TOLERANCE = 1e-10
MAX_POWER_ITERATIONS = 100_000
THRESHOLD_MARGIN = 1e-9

Frequency = tuple[int, ...]


class ConvergenceError(RuntimeError):
    """L'iterazione di potenza non converge entro il numero massimo di passi"""


def _coords_of(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return np.atleast_2d(points.astype(float))
    if not points:
        raise ValueError("Insieme di punti vuoto")
    return np.array([p.coords if isinstance(p, TorusPoint) else tuple(p) for p in points], dtype=float)


@dataclass(frozen=True)
class TrigPolynomial:
    """
    Polinomio trigonometrico Σ c_n e^{2πi⟨n,x⟩} su T^k.

    I termini sono normalizzati: frequenze ordinate, coefficienti uguali
    sommati, coefficienti nulli eliminati.
    """
    dim: int
    terms: tuple[tuple[Frequency, complex], ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim deve essere ≥ 1")
        merged: dict[Frequency, complex] = {}
        for freq, coeff in self.terms:
            freq = tuple(int(n) for n in freq)
            if len(freq) != self.dim:
                raise DimensionError(f"Frequenza {freq} in dimensione {self.dim}")
            merged[freq] = merged.get(freq, 0j) + complex(coeff)
        terms = tuple(sorted((f, c) for f, c in merged.items() if c != 0))
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls, dim: int, value: complex) -> "TrigPolynomial":
        return cls(dim, (((0,) * dim, value),))

    @classmethod
    def monomial(cls, freq: Sequence[int], coeff: complex = 1) -> "TrigPolynomial":
        return cls(len(freq), ((tuple(freq), coeff),))

    @classmethod
    def coordinate(cls, dim: int, j: int = 0, power: int = 1) -> "TrigPolynomial":
        """z_j^power"""
        freq = [0] * dim
        freq[j] = power
        return cls.monomial(freq)

    # --- Valutazione -----------------------------------------------------

    def evaluate_many(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        if coords.shape[1] != self.dim:
            raise DimensionError(f"Punti di dimensione {coords.shape[1]}, polinomio di dimensione {self.dim}")
        out = np.zeros(coords.shape[0], dtype=complex)
        for freq, coeff in self.terms:
            out += coeff * np.exp(2j * np.pi * (coords @ np.array(freq, dtype=float)))
        return out

    def __call__(self, x: Union[TorusPoint, Sequence[float]]) -> complex:
        coords = x.coords if isinstance(x, TorusPoint) else tuple(x)
        return complex(self.evaluate_many(np.array([coords]))[0])

    # --- Algebra ---------------------------------------------------------

    def _check_same_dim(self, other: "TrigPolynomial") -> None:
        if other.dim != self.dim:
            raise DimensionError(f"Polinomi di dimensioni diverse: {self.dim} e {other.dim}")

    def __add__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        self._check_same_dim(other)
        return TrigPolynomial(self.dim, self.terms + other.terms)

    def __neg__(self) -> "TrigPolynomial":
        return TrigPolynomial(self.dim, tuple((f, -c) for f, c in self.terms))

    def __sub__(self, other: "TrigPolynomial") -> "TrigPolynomial":
        return self + (-other)

    def __mul__(self, other) -> "TrigPolynomial":
        if isinstance(other, TrigPolynomial):
            self._check_same_dim(other)
            terms = tuple(
                (tuple(a + b for a, b in zip(f1, f2)), c1 * c2)
                for f1, c1 in self.terms
                for f2, c2 in other.terms
            )
            return TrigPolynomial(self.dim, terms)
        scalar = complex(other)
        return TrigPolynomial(self.dim, tuple((f, c * scalar) for f, c in self.terms))

    __rmul__ = __mul__

    def adjoint(self) -> "TrigPolynomial":
        return TrigPolynomial(self.dim, tuple((tuple(-n for n in f), c.conjugate()) for f, c in self.terms))

    # --- Stime -----------------------------------------------------------

    @property
    def mean(self) -> complex:
        """∫ p dμ per la misura di Lebesgue: il coefficiente c₀"""
        zero = (0,) * self.dim
        return next((c for f, c in self.terms if f == zero), 0j)

    @property
    def is_constant(self) -> bool:
        return all(not any(f) for f, _ in self.terms)

    @property
    def lipschitz(self) -> float:
        """2π Σ |c_n|·‖n‖₁, rispetto alla metrica del massimo"""
        return 2.0 * math.pi * sum(abs(c) * sum(abs(n) for n in f) for f, c in self.terms)

    def modulus(self, delta: float) -> float:
        """ω(δ) = Σ |c_n|·min(2π‖n‖₁δ, 2)"""
        return sum(
            abs(c) * min(2.0 * math.pi * sum(abs(n) for n in f) * delta, 2.0)
            for f, c in self.terms
        )

    @property
    def sup_bound(self) -> float:
        return sum(abs(c) for _, c in self.terms)

    @property
    def deviation(self) -> float:
        """sup |p − c₀| ≤ Σ_{n≠0} |c_n|"""
        return sum(abs(c) for f, c in self.terms if any(f))

    @property
    def oscillation_bound(self) -> float:
        """sup |p(x) − p(y)| ≤ 2·Σ_{n≠0} |c_n|"""
        return 2.0 * self.deviation

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [[list(f), c.real, c.imag] for f, c in self.terms],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrigPolynomial":
        terms = tuple((tuple(t[0]), complex(t[1], t[2] if len(t) > 2 else 0.0)) for t in data.get("terms", ()))
        return cls(int(data["dim"]), terms)


@dataclass(frozen=True)
class MatrixFunction:
    """
    Elemento di C(X)⊗M_m: matrice m×m di polinomi trigonometrici, eventualmente
    precomposta con una catena di mappe (applicate nell'ordine di `maps`).
    """
    entries: tuple[tuple[TrigPolynomial, ...], ...]
    maps: tuple[MinimalMap, ...] = field(default=())

    def __post_init__(self):
        entries = tuple(tuple(row) for row in self.entries)
        m = len(entries)
        if m == 0 or any(len(row) != m for row in entries):
            raise ValueError("Le entrate devono formare una matrice quadrata non vuota")
        dims = {p.dim for row in entries for p in row}
        if len(dims) != 1:
            raise DimensionError(f"Entrate di dimensioni diverse: {sorted(dims)}")
        (dim,) = dims
        maps = tuple(self.maps)
        for map_ in maps:
            if map_.dim != dim:
                raise DimensionError(f"Mappa di dimensione {map_.dim} su funzioni di dimensione {dim}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "maps", maps)

    @classmethod
    def scalar(cls, poly: TrigPolynomial) -> "MatrixFunction":
        return cls(((poly,),))

    @classmethod
    def constant(cls, matrix, dim: int = 1) -> "MatrixFunction":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(tuple(
            tuple(TrigPolynomial.constant(dim, v) for v in row) for row in matrix
        ))

    @classmethod
    def identity(cls, m: int, dim: int = 1) -> "MatrixFunction":
        return cls.constant(np.eye(m), dim)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def dim(self) -> int:
        return self.entries[0][0].dim

    def _pulled_back(self, coords: np.ndarray) -> np.ndarray:
        for map_ in self.maps:
            coords = apply_many(map_, coords)
        return coords

    def evaluate_many(self, coords) -> np.ndarray:
        """Array n×m×m con f(x_j)"""
        coords = _coords_of(coords)
        if coords.shape[1] != self.dim:
            raise DimensionError(f"Punti di dimensione {coords.shape[1]}, funzione su T^{self.dim}")
        coords = self._pulled_back(coords)
        m = self.size
        out = np.empty((coords.shape[0], m, m), dtype=complex)
        for i in range(m):
            for j in range(m):
                out[:, i, j] = self.entries[i][j].evaluate_many(coords)
        return out

    def __call__(self, x) -> np.ndarray:
        return self.evaluate_many([x])[0]

    def compose(self, map_: MinimalMap) -> "MatrixFunction":
        """f∘ψ"""
        return MatrixFunction(self.entries, (map_,) + self.maps)

    def __matmul__(self, other: "MatrixFunction") -> "MatrixFunction":
        if other.size != self.size:
            raise ValueError(f"Dimensioni di blocco diverse: {self.size} e {other.size}")
        if other.maps != self.maps:
            raise ValueError("Il prodotto richiede la stessa catena di mappe")
        m = self.size
        entries = []
        for i in range(m):
            row = []
            for j in range(m):
                acc = self.entries[i][0] * other.entries[0][j]
                for t in range(1, m):
                    acc = acc + self.entries[i][t] * other.entries[t][j]
                row.append(acc)
            entries.append(tuple(row))
        return MatrixFunction(tuple(entries), self.maps)

    def adjoint(self) -> "MatrixFunction":
        m = self.size
        return MatrixFunction(
            tuple(tuple(self.entries[j][i].adjoint() for j in range(m)) for i in range(m)),
            self.maps,
        )

    @property
    def lipschitz_factor(self) -> float:
        return math.prod(lipschitz(map_) for map_ in self.maps)

    def modulus(self, delta: float) -> float:
        """Massimo modulo di continuità delle entrate (mappe incluse)"""
        scaled = delta * self.lipschitz_factor
        return max(p.modulus(scaled) for row in self.entries for p in row)

    @property
    def max_entry_lipschitz(self) -> float:
        return self.lipschitz_factor * max(p.lipschitz for row in self.entries for p in row)

    def trace_polynomial(self) -> TrigPolynomial:
        """Traccia normalizzata (1/m)·Σ f_ii come polinomio, senza le mappe"""
        acc = self.entries[0][0]
        for i in range(1, self.size):
            acc = acc + self.entries[i][i]
        return acc * (1.0 / self.size)

    @property
    def is_constant(self) -> bool:
        return all(p.is_constant for row in self.entries for p in row)

    def to_json(self) -> dict:
        return {
            "entries": [[p.to_json() for p in row] for row in self.entries],
            "maps": [map_.to_json() for map_ in self.maps],
        }

    @classmethod
    def from_json(cls, data: dict) -> "MatrixFunction":
        entries = tuple(tuple(TrigPolynomial.from_json(p) for p in row) for row in data["entries"])
        maps = tuple(MinimalMap.from_json(m) for m in data.get("maps", ()))
        return cls(entries, maps)


@dataclass(frozen=True, eq=False)
class IntertwinerMatrix:
    """Unitaria densa; se proviene da una permutazione, W = U_s ⊗ 1_m"""
    matrix: np.ndarray
    permutation: Optional[Permutation] = None
    block: int = 1

    @property
    def is_permutation(self) -> bool:
        return self.permutation is not None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index_array(self) -> np.ndarray:
        """p con W A W* = A[p][:, p] (solo per intertwiner di permutazione)"""
        if self.permutation is None:
            raise ValueError("L'intertwiner non è di permutazione")
        return block_index(self.permutation.as_array(), self.block)

    def conjugate(self, A: np.ndarray) -> np.ndarray:
        """W A W*"""
        if A.shape != self.matrix.shape:
            raise DimensionError(f"Matrice {A.shape} contro intertwiner {self.matrix.shape}")
        if self.permutation is not None:
            p = self.index_array()
            return A[np.ix_(p, p)]
        return self.matrix @ A @ self.matrix.conj().T

    def unitarity_defect(self) -> float:
        W = self.matrix
        return spectral_norm(W.conj().T @ W - np.eye(W.shape[0]))

    @property
    def is_unitary(self) -> bool:
        return self.unitarity_defect() <= UNITARITY_TOLERANCE


def block_index(images: np.ndarray, m: int) -> np.ndarray:
    """p[j·m + r] = s(j)·m + r"""
    return (images[:, None] * m + np.arange(m)[None, :]).reshape(-1)


def evaluate_diag(f: MatrixFunction, points) -> np.ndarray:
    """diag(f(x₁), …, f(x_n)) come matrice densa mn×mn"""
    blocks = f.evaluate_many(points)
    n, m, _ = blocks.shape
    out = np.zeros((n * m, n * m), dtype=complex)
    for j in range(n):
        out[j * m:(j + 1) * m, j * m:(j + 1) * m] = blocks[j]
    return out


def permutation_intertwiner(s: Permutation, m: int = 1) -> IntertwinerMatrix:
    """W = U_s ⊗ 1_m con U[j, s(j)] = 1: il blocco j di W·D·W* è D_{s(j)}"""
    if m < 1:
        raise ValueError("La dimensione di blocco deve essere ≥ 1")
    n = s.n
    U = np.zeros((n, n), dtype=complex)
    U[np.arange(n), s.as_array()] = 1.0
    return IntertwinerMatrix(np.kron(U, np.eye(m)), s, m)


def block_norms(blocks: np.ndarray) -> np.ndarray:
    """Norme operatoriali di una pila n×m×m di blocchi"""
    if blocks.shape[1] == 1:
        return np.abs(blocks[:, 0, 0])
    return np.linalg.norm(blocks, ord=2, axis=(1, 2))


def intertwining_defect(f, points, map_: MinimalMap, s: Permutation) -> float:
    """max_j ‖f(x_j) − f(ψ(x_{s(j)}))‖, calcolato a blocchi"""
    coords = _coords_of(points)
    if s.n != coords.shape[0]:
        raise ValueError(f"Permutazione di lunghezza {s.n} per {coords.shape[0]} punti")
    left = f.evaluate_many(coords)
    right = f.evaluate_many(apply_many(map_, coords[s.as_array()]))
    return float(block_norms(left - right).max())


def dense_intertwining_defect(f: MatrixFunction, points, map_: MinimalMap, s: Permutation) -> float:
    """‖diag(f(x)) − W·diag(f∘ψ(x))·W*‖ sulla matrice densa mn×mn"""
    W = permutation_intertwiner(s, f.size)
    lhs = evaluate_diag(f, points)
    rhs = W.matrix @ evaluate_diag(f.compose(map_), points) @ W.matrix.conj().T
    return spectral_norm(lhs - rhs, detect_blocks=False)


def modulus_defect_bound(f, delta: float) -> float:
    """m²·ω(δ): dist(x,x′) < δ ⇒ ‖f(x) − f(x′)‖ ≤ bound"""
    if delta <= 0:
        raise ValueError(f"δ deve essere positivo: {delta}")
    return f.size ** 2 * f.modulus(delta)


def modulus_threshold(f, eps: float) -> float:
    """δ con modulus_defect_bound(f, δ) < ε (inf per funzioni costanti)"""
    slope = f.size ** 2 * f.max_entry_lipschitz
    if slope == 0:
        return math.inf
    return eps / slope * (1.0 - THRESHOLD_MARGIN)


def _block_size(A: np.ndarray) -> int:
    """Il più piccolo b che divide n con A diagonale a blocchi b×b"""
    n = A.shape[0]
    rows, cols = np.nonzero(A)
    for b in range(1, n + 1):
        if n % b == 0 and np.array_equal(rows // b, cols // b):
            return b
    return n


def spectral_norm(A: np.ndarray, detect_blocks: bool = True) -> float:
    """
    Massimo valore singolare.

    Matrici diagonali e diagonali a blocchi sono trattate esattamente blocco
    per blocco; altrimenti iterazione di potenza su A*A con arresto sul
    residuo relativo 1e-10.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise ValueError(f"Attesa una matrice, ricevuto array di forma {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("La matrice contiene valori non finiti")
    n = A.shape[0]
    if A.size == 0:
        return 0.0
    if detect_blocks and A.shape[0] == A.shape[1]:
        b = _block_size(A)
        if b == 1:
            return float(np.abs(np.diag(A)).max())
        if b < n:
            blocks = np.stack([A[i:i + b, i:i + b] for i in range(0, n, b)])
            return float(block_norms(blocks).max())
    return _power_norm(A)


def _power_norm(A: np.ndarray) -> float:
    B = A.conj().T @ A
    rng = np.random.default_rng(0)
    v = rng.standard_normal(B.shape[0]) + 1j * rng.standard_normal(B.shape[0])
    v /= np.linalg.norm(v)
    for iteration in range(MAX_POWER_ITERATIONS):
        w = B @ v
        lam = float(np.vdot(v, w).real)
        residual = float(np.linalg.norm(w - lam * v))
        if residual <= NORM_TOLERANCE * abs(lam):
            logger.debug("Iterazione di potenza convergente in %d passi", iteration + 1)
            return math.sqrt(max(lam, 0.0))
        v = w / np.linalg.norm(w)
    raise ConvergenceError(f"Nessuna convergenza dopo {MAX_POWER_ITERATIONS} iterazioni")


def normalized_trace(A: np.ndarray) -> complex:
    return complex(np.trace(A) / A.shape[0])


@dataclass(frozen=True)
class ModulusCheck:
    pairs: int
    delta: float
    observed: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.observed <= self.bound + 1e-12


def check_modulus(f, delta: float, pairs: int, rng: np.random.Generator) -> ModulusCheck:
    """Verifica a campione di ‖f(x) − f(x′)‖ ≤ m²ω(δ) su coppie con dist < δ"""
    x = rng.random((pairs, f.dim))
    step = rng.uniform(-delta, delta, size=(pairs, f.dim)) * (1.0 - 1e-12)
    y = np.mod(x + step, 1.0)
    observed = float(block_norms(f.evaluate_many(x) - f.evaluate_many(y)).max())
    return ModulusCheck(pairs, delta, observed, modulus_defect_bound(f, delta))


def matrix_rows(A: np.ndarray) -> list[dict]:
    """Righe per l'esportazione CSV: coppie re/im in ordine di riga"""
    rows = []
    for i, row in enumerate(np.atleast_2d(A)):
        entry = {"row": i}
        for j, value in enumerate(row):
            entry[f"re_{j}"] = float(value.real)
            entry[f"im_{j}"] = float(value.imag)
        rows.append(entry)
    return rows
