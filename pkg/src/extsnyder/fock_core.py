"""Truncated multi-mode bosonic Fock space with sparse operators.

The phase space has D vector modes and D(D-1)/2 antisymmetric tensor modes.
Each mode is a single bosonic oscillator truncated at occupation ``n_max``;
states are occupation vectors enumerated lexicographically over the fixed
mode order (vector modes first, then tensor pairs (i, j), i < j).
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

DEFAULT_DIM_CAP = 2_000_000
DIM_CAP_ENV = "EXTSNYDER_DIM_CAP"


class StructuralError(ValueError):
    """Operands or modes that do not belong together."""


class DimensionCapError(ValueError):
    """Truncation too large for desk scale."""


def dimension_cap() -> int:
    raw = os.environ.get(DIM_CAP_ENV)
    return int(raw) if raw else DEFAULT_DIM_CAP


@dataclass(frozen=True, order=True)
class ModeId:
    """A vector mode ``(i, 0)`` or a tensor mode ``(i, j)`` with i < j (1-based)."""

    i: int
    j: int = 0

    def __post_init__(self):
        if self.i < 1 or (self.j != 0 and self.j <= self.i):
            raise StructuralError(f"invalid mode indices ({self.i}, {self.j})")

    @classmethod
    def vector(cls, i: int) -> "ModeId":
        return cls(i)

    @classmethod
    def tensor(cls, i: int, j: int) -> "ModeId":
        return cls(i, j)

    @property
    def is_vector(self) -> bool:
        return self.j == 0

    @property
    def label(self) -> str:
        return f"v{self.i}" if self.is_vector else f"t{self.i}{self.j}"

    def __repr__(self):
        return f"V{self.i}" if self.is_vector else f"T({self.i},{self.j})"


def vector_modes(d: int) -> list[ModeId]:
    return [ModeId.vector(i) for i in range(1, d + 1)]


def tensor_modes(d: int) -> list[ModeId]:
    return [ModeId.tensor(i, j) for i, j in itertools.combinations(range(1, d + 1), 2)]


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters, natural units (hbar = 1).

    ``tensor_mass`` is M; the vector-mode mass is M / beta**2.
    """

    d: int
    lam: float = 0.0
    beta: float = 1.0
    tensor_mass: float = 1.0
    omega: float = 1.0
    omega_tensor: float = 1.0
    n_max: int = 2
    interior_margin: int = 4

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError("d must be an integer >= 2")
        if int(self.n_max) != self.n_max or self.n_max < 0:
            raise ValueError("n_max must be a nonnegative integer")
        if self.interior_margin < 0:
            raise ValueError("interior_margin must be >= 0")
        for name in ("beta", "tensor_mass", "omega", "omega_tensor"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")
        if not math.isfinite(self.lam):
            raise ValueError("lam must be finite")

    @property
    def vector_mass(self) -> float:
        return self.tensor_mass / self.beta**2

    @property
    def n_modes(self) -> int:
        return self.d * (self.d + 1) // 2

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


class FockBasis:
    """Occupation-number basis {0..n_max}^(D(D+1)/2), lexicographically ordered."""

    def __init__(self, params: ModelParams, cap: int | None = None):
        self.params = params
        self.modes: list[ModeId] = vector_modes(params.d) + tensor_modes(params.d)
        self.levels = params.n_max + 1
        dim = self.levels ** len(self.modes)
        cap = dimension_cap() if cap is None else cap
        if dim > cap:
            raise DimensionCapError(
                f"truncation too large for desk scale: dimension {dim} exceeds cap {cap}"
            )
        self.dim = dim
        self._mode_pos = {m: k for k, m in enumerate(self.modes)}

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def n_max(self) -> int:
        return self.params.n_max

    @cached_property
    def states(self) -> np.ndarray:
        """Integer array of shape (dim, n_modes); row k is the k-th occupation vector."""
        digits = np.arange(self.dim)[:, None] // (
            self.levels ** np.arange(len(self.modes) - 1, -1, -1)
        )[None, :]
        states = (digits % self.levels).astype(np.int64)
        states.setflags(write=False)
        return states

    def position(self, mode: ModeId) -> int:
        try:
            return self._mode_pos[mode]
        except KeyError:
            raise StructuralError(f"mode {mode!r} not in basis with D={self.d}") from None

    def index(self, occupations) -> int:
        """Basis index of an occupation vector (sequence, or mapping ModeId/label -> n)."""
        vec = self.occupation_vector(occupations)
        idx = 0
        for n in vec:
            idx = idx * self.levels + int(n)
        return idx

    def occupation_vector(self, occupations) -> np.ndarray:
        if isinstance(occupations, dict):
            vec = np.zeros(len(self.modes), dtype=np.int64)
            by_label = {m.label: m for m in self.modes}
            for key, n in occupations.items():
                mode = by_label.get(key, key) if isinstance(key, str) else key
                if isinstance(mode, str):
                    raise StructuralError(f"unknown mode label {key!r}")
                vec[self.position(mode)] = n
        else:
            vec = np.asarray(occupations, dtype=np.int64)
            if vec.shape != (len(self.modes),):
                raise StructuralError("occupation vector has wrong length")
        if vec.min(initial=0) < 0 or vec.max(initial=0) > self.n_max:
            raise StructuralError(f"occupations {vec.tolist()} outside 0..{self.n_max}")
        return vec

    def occupations(self, index: int) -> dict[ModeId, int]:
        return {m: int(n) for m, n in zip(self.modes, self.states[index])}

    def same_as(self, other: "FockBasis") -> bool:
        return self is other or (
            self.modes == other.modes and self.levels == other.levels
        )

    def __repr__(self):
        return f"FockBasis(D={self.d}, n_max={self.n_max}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class Operator:
    """Sparse complex matrix on a FockBasis.

    Arithmetic is exact sparse matrix arithmetic; ``A @ B`` is the operator
    product, ``A * c`` scales by a number.
    """

    basis: FockBasis
    matrix: sp.csr_matrix
    hermitian_hint: bool | None = field(default=None)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=np.complex128)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise StructuralError(f"matrix shape {m.shape} does not match basis dim {self.basis.dim}")
        m.sum_duplicates()
        object.__setattr__(self, "matrix", m)

    def _check(self, other: "Operator"):
        if not isinstance(other, Operator):
            raise TypeError(f"expected Operator, got {type(other).__name__}")
        if not self.basis.same_as(other.basis):
            raise StructuralError("operands live on different Fock bases")

    def _new(self, matrix, hint=None):
        return Operator(self.basis, matrix, hint)

    def __add__(self, other):
        if isinstance(other, (int, float, complex)) and other == 0:
            return self
        self._check(other)
        return self._new(self.matrix + other.matrix)

    __radd__ = __add__

    def __sub__(self, other):
        self._check(other)
        return self._new(self.matrix - other.matrix)

    def __neg__(self):
        return self._new(-self.matrix, self.hermitian_hint)

    def __mul__(self, c):
        if isinstance(c, Operator):
            raise TypeError("use @ for operator products")
        return self._new(self.matrix * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self._new(self.matrix / c)

    def __matmul__(self, other):
        self._check(other)
        return self._new(self.matrix @ other.matrix)

    def adjoint(self) -> "Operator":
        return self._new(self.matrix.conj().T.tocsr(), self.hermitian_hint)

    @property
    def H(self) -> "Operator":
        return self.adjoint()

    def hermitian_part(self) -> "Operator":
        return self._new((self.matrix + self.matrix.conj().T) * 0.5, True)

    def hermiticity_defect(self) -> float:
        return max_abs(self.matrix - self.matrix.conj().T)

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def max_abs(self) -> float:
        return max_abs(self.matrix)

    def element(self, row, col) -> complex:
        r = row if isinstance(row, (int, np.integer)) else self.basis.index(row)
        c = col if isinstance(col, (int, np.integer)) else self.basis.index(col)
        return complex(self.matrix[r, c])

    @property
    def nnz(self) -> int:
        return self.matrix.nnz


def max_abs(m) -> float:
    if sp.issparse(m):
        m = sp.csr_matrix(m)
        m.eliminate_zeros()
        return float(np.abs(m.data).max()) if m.nnz else 0.0
    m = np.asarray(m)
    return float(np.abs(m).max()) if m.size else 0.0


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def anticommutator(a: Operator, b: Operator) -> Operator:
    return a @ b + b @ a


def sym(a: Operator, b: Operator) -> Operator:
    """Symmetrized product (AB + BA)/2."""
    return anticommutator(a, b) * 0.5


def enumerate_basis(params: ModelParams, cap: int | None = None) -> FockBasis:
    return FockBasis(params, cap)


def identity(basis: FockBasis) -> Operator:
    return Operator(basis, sp.identity(basis.dim, dtype=np.complex128, format="csr"), True)


def zero(basis: FockBasis) -> Operator:
    return Operator(basis, sp.csr_matrix((basis.dim, basis.dim), dtype=np.complex128), True)


def _single_mode_lower(levels: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, levels, dtype=float)), 1, format="csr")


def _embed(basis: FockBasis, mode: ModeId, local: sp.spmatrix) -> sp.csr_matrix:
    pos = basis.position(mode)
    n_after = len(basis.modes) - pos - 1
    left = sp.identity(basis.levels**pos, format="csr")
    right = sp.identity(basis.levels**n_after, format="csr")
    return sp.kron(sp.kron(left, local), right, format="csr")


def ladder(basis: FockBasis, mode: ModeId, kind: str = "lower") -> Operator:
    """Annihilation (``kind="lower"``) or creation (``"raise"``) operator of one mode."""
    a = _embed(basis, mode, _single_mode_lower(basis.levels))
    if kind == "lower":
        return Operator(basis, a, False)
    if kind == "raise":
        return Operator(basis, a.T.tocsr(), False)
    raise ValueError(f"kind must be 'lower' or 'raise', got {kind!r}")


def number_op(basis: FockBasis, mode: ModeId) -> Operator:
    n = basis.states[:, basis.position(mode)].astype(float)
    return Operator(basis, sp.diags(n, format="csr"), True)


def total_number(basis: FockBasis) -> Operator:
    return Operator(basis, sp.diags(basis.states.sum(axis=1).astype(float), format="csr"), True)


def canonical_pair(basis: FockBasis, mode: ModeId, mass: float, freq: float) -> tuple[Operator, Operator]:
    """Position and momentum of one mode as an oscillator of given mass and frequency.

    x = (a + a^dag) / sqrt(2 mass freq),  p = i sqrt(mass freq / 2) (a^dag - a).
    """
    if not (mass > 0 and freq > 0):
        raise ValueError(f"mass and freq must be positive, got mass={mass!r}, freq={freq!r}")
    a = _embed(basis, mode, _single_mode_lower(basis.levels))
    ad = a.T.tocsr()
    x = (a + ad) / math.sqrt(2.0 * mass * freq)
    p = (ad - a) * (1j * math.sqrt(mass * freq / 2.0))
    return Operator(basis, x, True), Operator(basis, p, True)


def interior_mask(basis: FockBasis, k: int) -> np.ndarray:
    if not 0 <= k <= basis.n_max:
        raise ValueError(f"interior margin K={k} must satisfy 0 <= K <= n_max={basis.n_max}")
    return basis.states.max(axis=1, initial=0) <= basis.n_max - k


def interior_projector(basis: FockBasis, k: int) -> Operator:
    """Diagonal projector onto states with every occupation <= n_max - K."""
    return Operator(basis, sp.diags(interior_mask(basis, k).astype(float), format="csr"), True)


def interior_residual_norm(a: Operator, k: int) -> float:
    """Max |<m|A|n>| over m, n both in the K-interior."""
    mask = interior_mask(a.basis, k)
    idx = np.flatnonzero(mask)
    return max_abs(a.matrix[idx][:, idx])


class PhaseSpace:
    """Canonical x, p for every mode with antisymmetric tensor lookup.

    Vector modes are oscillators of mass ``vector_mass`` and frequency
    ``vector_freq``; tensor modes use ``tensor_mass`` and ``tensor_freq``.
    Tensor access ``x(i, j)`` resolves j < i by sign and i == j to zero.
    """

    def __init__(self, basis: FockBasis, vector_mass: float, vector_freq: float,
                 tensor_mass: float, tensor_freq: float):
        self.basis = basis
        self.d = basis.d
        self.vector_mass, self.vector_freq = vector_mass, vector_freq
        self.tensor_mass, self.tensor_freq = tensor_mass, tensor_freq
        self._x: dict[ModeId, Operator] = {}
        self._p: dict[ModeId, Operator] = {}
        for mode in basis.modes:
            if mode.is_vector:
                x, p = canonical_pair(basis, mode, vector_mass, vector_freq)
            else:
                x, p = canonical_pair(basis, mode, tensor_mass, tensor_freq)
            self._x[mode], self._p[mode] = x, p
        self._zero = zero(basis)

    @classmethod
    def for_params(cls, basis: FockBasis, params: ModelParams, tensor_freq: float | None = None):
        freq = params.omega if tensor_freq is None else tensor_freq
        return cls(basis, params.vector_mass, params.omega, params.tensor_mass, freq)

    def _lookup(self, table, i, j):
        if j is None:
            return table[ModeId.vector(i)]
        if i == j:
            return self._zero
        if i < j:
            return table[ModeId.tensor(i, j)]
        return -table[ModeId.tensor(j, i)]

    def x(self, i: int, j: int | None = None) -> Operator:
        return self._lookup(self._x, i, j)

    def p(self, i: int, j: int | None = None) -> Operator:
        return self._lookup(self._p, i, j)

    # unified antisymmetric indices 1..D+1, with x_i = beta x_{i,D+1}, p_i = p_{i,D+1}/beta
    def xu(self, mu: int, nu: int, beta: float) -> Operator:
        return self._unified(self.x, mu, nu, 1.0 / beta)

    def pu(self, mu: int, nu: int, beta: float) -> Operator:
        return self._unified(self.p, mu, nu, beta)

    def _unified(self, get, mu, nu, scale):
        top = self.d + 1
        if mu == nu:
            return self._zero
        if nu == top and mu < top:
            return get(mu) * scale
        if mu == top and nu < top:
            return get(nu) * (-scale)
        return get(mu, nu)
