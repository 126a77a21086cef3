"""Qudit state vectors, the three-basis family, Born-rule measurement and
ancilla bookkeeping for entangling attacks.

States may carry an attached environment (Eve's ancilla registers). The
amplitude vector is then laid out travel-major: ``amps[t * env + e]``.
Measurements always act on the travel factor only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from itertools import accumulate

import numpy as np

from .errors import (
    DimensionMismatch,
    DimensionNotEven,
    DimensionTooSmall,
    InvalidPartition,
    NotNormalized,
    NotUnitary,
)
from .seeding import draw_index

TOL = 1e-9
SQRT_HALF = 1.0 / np.sqrt(2.0)


class BasisId(str, enum.Enum):
    B0 = "B0"
    B1 = "B1"
    B2 = "B2"
    FOURIER = "F"

    def __str__(self) -> str:
        return self.value


class StateVector:
    """Normalized complex amplitudes of a d-level system (plus optional environment).

    Instances are immutable; the amplitude array is marked read-only.
    """

    __slots__ = ("dim", "env", "amps", "_key")

    def __init__(self, dim: int, amps, env: int = 1, *, check: bool = True):
        a = np.asarray(amps, dtype=complex).reshape(-1)
        if check:
            if dim < 2:
                raise DimensionMismatch(f"dimension must be >= 2, got {dim}")
            if a.size != dim * env:
                raise DimensionMismatch(f"expected {dim * env} amplitudes, got {a.size}")
            norm = float(np.vdot(a, a).real)
            if abs(norm - 1.0) > TOL:
                raise NotNormalized(f"squared norm is {norm!r}")
        a.flags.writeable = False
        self.dim = dim
        self.env = env
        self.amps = a
        self._key = None

    @classmethod
    def ket(cls, dim: int, i: int) -> "StateVector":
        a = np.zeros(dim, dtype=complex)
        a[i] = 1.0
        return cls(dim, a)

    @classmethod
    def _raw(cls, dim: int, amps: np.ndarray, env: int = 1) -> "StateVector":
        return cls(dim, amps, env, check=False)

    @property
    def key(self) -> bytes:
        # byte identity of the amplitudes; used for probability caching
        if self._key is None:
            self._key = self.amps.tobytes()
        return self._key

    @property
    def matrix(self) -> np.ndarray:
        """Amplitudes reshaped to ``(dim, env)``."""
        return self.amps.reshape(self.dim, self.env)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def travel(self) -> "StateVector":
        """The travel factor, for states with a trivial environment."""
        if self.env != 1:
            raise DimensionMismatch("state is entangled with an environment")
        return self

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.dim == other.dim and self.env == other.env and self.key == other.key

    def __hash__(self) -> int:
        return hash((self.dim, self.env, self.key))

    def __repr__(self) -> str:
        env = f", env={self.env}" if self.env != 1 else ""
        return f"StateVector(dim={self.dim}{env}, amps={np.round(self.amps, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class Basis:
    dim: int
    vectors: tuple
    labels: tuple
    id: BasisId | None = None

    def __post_init__(self):
        m = np.column_stack([v.amps for v in self.vectors])
        m.flags.writeable = False
        object.__setattr__(self, "_matrix", m)
        object.__setattr__(self, "_adjoint", m.conj().T.copy())

    @property
    def matrix(self) -> np.ndarray:
        """Columns are the basis vectors."""
        return self._matrix

    @property
    def adjoint(self) -> np.ndarray:
        return self._adjoint

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, k: int) -> StateVector:
        return self.vectors[k]

    def __repr__(self) -> str:
        name = self.id.value if self.id else "Basis"
        return f"<{name} d={self.dim}>"


@dataclass(frozen=True)
class BasisFamily:
    dim: int
    b0: Basis
    b1: Basis
    b2: Basis
    fourier: Basis

    def __getitem__(self, basis_id: BasisId) -> Basis:
        return {
            BasisId.B0: self.b0,
            BasisId.B1: self.b1,
            BasisId.B2: self.b2,
            BasisId.FOURIER: self.fourier,
        }[BasisId(basis_id)]

    def __iter__(self):
        return iter((self.b0, self.b1, self.b2, self.fourier))


def _ket_label(i: int) -> str:
    return f"|{i}⟩"


def _pair_state(dim: int, a: int, b: int, sign: int) -> StateVector:
    amps = np.zeros(dim, dtype=complex)
    amps[a] = SQRT_HALF
    amps[b] = sign * SQRT_HALF
    return StateVector(dim, amps)


def _pair_label(a: int, b: int, sign: int) -> str:
    op = "+" if sign > 0 else "−"
    return f"(|{a}⟩{op}|{b}⟩)/√2"


@lru_cache(maxsize=None)
def computational_basis(dim: int) -> Basis:
    vecs = tuple(StateVector.ket(dim, i) for i in range(dim))
    return Basis(dim, vecs, tuple(_ket_label(i) for i in range(dim)), BasisId.B0)


@lru_cache(maxsize=None)
def fourier_basis(dim: int) -> Basis:
    j = np.arange(dim)
    vecs = []
    for k in range(dim):
        amps = np.exp(2j * np.pi * j * k / dim) / np.sqrt(dim)
        vecs.append(StateVector(dim, amps))
    labels = tuple(f"F{k}" for k in range(dim))
    return Basis(dim, tuple(vecs), labels, BasisId.FOURIER)


def _paired_basis(dim: int, basis_id: BasisId, offset: int) -> Basis:
    vecs, labels = [], []
    for m in range(dim // 2):
        a, b = 2 * m + offset, (2 * m + offset + 1) % dim
        for s in (0, 1):
            sign = -1 if s else 1
            vecs.append(_pair_state(dim, a, b, sign))
            labels.append(_pair_label(a, b, sign))
    return Basis(dim, tuple(vecs), tuple(labels), basis_id)


def check_even_dimension(d: int, minimum: int = 4) -> None:
    if d % 2:
        raise DimensionNotEven(f"dimension must be even, got {d}")
    if d < minimum:
        raise DimensionTooSmall(f"dimension must be at least {minimum}, got {d}")


@lru_cache(maxsize=None)
def build_bases(d: int) -> BasisFamily:
    """The computational basis, the two pair bases and the Fourier basis.

    B1 holds ``(|2m⟩ ± |2m+1⟩)/√2`` and B2 holds
    ``(|2m+1⟩ ± |2m+2 mod d⟩)/√2``; vector ``2m+s`` carries sign ``(-1)^s``.
    """
    check_even_dimension(d)
    return BasisFamily(
        d,
        computational_basis(d),
        _paired_basis(d, BasisId.B1, 0),
        _paired_basis(d, BasisId.B2, 1),
        fourier_basis(d),
    )


def basis_for(d: int, basis_id: BasisId) -> Basis:
    """Look up one basis; B0 and Fourier exist for every d >= 2."""
    basis_id = BasisId(basis_id)
    if basis_id is BasisId.B0:
        return computational_basis(d)
    if basis_id is BasisId.FOURIER:
        return fourier_basis(d)
    return build_bases(d)[basis_id]


def is_orthonormal(b: Basis, tol: float = TOL) -> bool:
    gram = b.adjoint @ b.matrix
    return bool(np.allclose(gram, np.eye(b.dim), atol=tol, rtol=0.0))


# -- measurement ------------------------------------------------------------

_CDF_CACHE: dict = {}
_CDF_CACHE_LIMIT = 1 << 14


def born_probabilities(s: StateVector, b: Basis) -> np.ndarray:
    """Outcome probabilities of measuring the travel factor of ``s`` in ``b``."""
    if s.dim != b.dim:
        raise DimensionMismatch(f"state dim {s.dim} vs basis dim {b.dim}")
    if s.env == 1:
        return np.abs(b.adjoint @ s.amps) ** 2
    overlaps = b.adjoint @ s.matrix
    return np.einsum("ke,ke->k", overlaps, overlaps.conj()).real


def _cdf(s: StateVector, b: Basis) -> list:
    key = (id(b), s.key)
    cdf = _CDF_CACHE.get(key)
    if cdf is None:
        cdf = list(accumulate(born_probabilities(s, b).tolist()))
        if len(_CDF_CACHE) >= _CDF_CACHE_LIMIT:
            _CDF_CACHE.clear()
        _CDF_CACHE[key] = cdf
    return cdf


def measure(s: StateVector, b: Basis, rng) -> tuple[int, StateVector]:
    """Projective measurement of the travel factor; returns (outcome, post-state).

    Unentangled states collapse onto the basis vector itself. For a state
    with an environment, the post-state is ``|b_k⟩ ⊗ (⟨b_k| ⊗ I)|ψ⟩``
    renormalized.
    """
    if s.dim != b.dim:
        raise DimensionMismatch(f"state dim {s.dim} vs basis dim {b.dim}")
    if s.env == 1:
        k = draw_index(_cdf(s, b), rng.random())
        return k, b.vectors[k]
    overlaps = b.adjoint @ s.matrix
    probs = np.einsum("ke,ke->k", overlaps, overlaps.conj()).real
    k = draw_index(list(accumulate(probs.tolist())), rng.random())
    env_part = overlaps[k] / np.sqrt(probs[k])
    post = np.outer(b.vectors[k].amps, env_part).reshape(-1)
    return k, StateVector._raw(s.dim, post, s.env)


def validate_partition(blocks, d: int) -> tuple:
    blocks = tuple(tuple(int(i) for i in blk) for blk in blocks)
    seen = [i for blk in blocks for i in blk]
    if any(len(blk) == 0 for blk in blocks) or sorted(seen) != list(range(d)):
        raise InvalidPartition(f"{blocks!r} is not a partition of range({d})")
    return blocks


def block_probabilities(s: StateVector, blocks) -> np.ndarray:
    weights = np.einsum("te,te->t", s.matrix, s.matrix.conj()).real
    return np.array([weights[list(blk)].sum() for blk in blocks])


def project_subspace(s: StateVector, blocks, rng) -> tuple[int, StateVector]:
    """Coarse-grained measurement: which block of the index partition holds the state.

    The post-state is the renormalized projection onto the chosen block's
    span; amplitudes inside the block keep their relative phases.
    """
    blocks = validate_partition(blocks, s.dim)
    probs = block_probabilities(s, blocks)
    k = draw_index(list(accumulate(probs.tolist())), rng.random())
    mask = np.zeros(s.dim, dtype=bool)
    mask[list(blocks[k])] = True
    m = np.where(mask[:, None], s.matrix, 0.0)
    post = (m / np.sqrt(probs[k])).reshape(-1)
    if s.env == 1 and np.array_equal(post, s.amps):
        return k, s
    return k, StateVector._raw(s.dim, post, s.env)


# -- unitaries and ancilla maps --------------------------------------------


def random_unitary(dim: int, rng=None) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase fix."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def check_unitary(U: np.ndarray, tol: float = TOL) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise NotUnitary(f"not a square matrix: shape {U.shape}")
    err = np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()
    if err > tol:
        raise NotUnitary(f"max |U†U - I| = {err:.3e}")
    return U


def copy_unitary(d: int) -> np.ndarray:
    """``|i⟩|a⟩ → |i⟩|a+i mod d⟩``; on a blank ancilla this copies the index."""
    U = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for a in range(d):
            U[i * d + (a + i) % d, i * d + a] = 1.0
    return U


@dataclass(frozen=True, eq=False)
class AncillaMap:
    """Sub-normalized ancilla vectors ``E_ij`` with ``|i⟩|0⟩ → Σ_j |j⟩|E_ij⟩``."""

    d_travel: int
    d_eve: int
    vectors: np.ndarray  # shape (d_travel, d_travel, d_eve)

    def __getitem__(self, ij) -> np.ndarray:
        i, j = ij
        return self.vectors[i, j]

    def gram(self) -> np.ndarray:
        """``G[i', i] = Σ_j ⟨E_i'j|E_ij⟩``; the identity for a valid map."""
        return np.einsum("pja,ija->pi", self.vectors.conj(), self.vectors)

    def sum_rule_residual(self) -> float:
        return float(np.abs(self.gram() - np.eye(self.d_travel)).max())


def extract_ancilla_map(U: np.ndarray, d: int, d_eve: int) -> AncillaMap:
    U = check_unitary(U)
    if U.shape[0] != d * d_eve:
        raise DimensionMismatch(f"unitary of size {U.shape[0]} does not factor as {d}·{d_eve}")
    # column (i, 0) of U holds Σ_j |j⟩|E_ij⟩ in travel-major order
    cols = U[:, [i * d_eve for i in range(d)]]
    vectors = cols.T.reshape(d, d, d_eve).copy()
    vectors.flags.writeable = False
    return AncillaMap(d, d_eve, vectors)


def _blank_columns(U: np.ndarray, d_eve: int) -> np.ndarray:
    """Columns of ``U`` reached from a blank ancilla, as a (d·d_eve, d) block."""
    key = (id(U), d_eve)
    hit = _COLUMN_CACHE.get(key)
    if hit is None or hit[0] is not U:
        hit = (U, np.ascontiguousarray(U[:, ::d_eve]))
        if len(_COLUMN_CACHE) > 256:
            _COLUMN_CACHE.clear()
        _COLUMN_CACHE[key] = hit
    return hit[1]


_COLUMN_CACHE: dict = {}


def apply_entangler(s: StateVector, U: np.ndarray, d_eve: int) -> StateVector:
    """Attach a fresh ancilla ``|0⟩`` and apply ``U`` on travel ⊗ new ancilla.

    Existing environment factors are left in place; the new ancilla becomes
    the innermost (last) environment factor.
    """
    d, env = s.dim, s.env
    out = _blank_columns(U, d_eve) @ s.amps.reshape(d, env)  # rows (j, f), columns e
    out = out.reshape(d, d_eve, env).transpose(0, 2, 1).reshape(-1)
    return StateVector._raw(d, out, env * d_eve)
