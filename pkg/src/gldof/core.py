"""Block partitions and the block-structured operators behind group sparsity.

Everything downstream (solver, sensitivity analysis, risk estimation) works
with coefficient vectors segmented into disjoint index blocks.  This module
owns that bookkeeping plus the two small linear operators built from a
blockwise-nonzero vector: per-block normalization and the scaled orthogonal
projector that appears in the solution's local differential.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg


class DegenerateBlockError(ValueError):
    """A block that must be nonzero has zero Euclidean norm."""


def _as_vector(values, n=None):
    v = np.ascontiguousarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {v.shape}")
    if n is not None and v.size != n:
        raise ValueError(f"expected length {n}, got {v.size}")
    return v


@dataclass(frozen=True)
class BlockPartition:
    """Segmentation of {0..N-1} into disjoint, covering, nonempty blocks.

    Blocks are stored in canonical form: indices strictly increasing within
    each block, blocks ordered by smallest index.  Construction canonicalizes
    and validates; instances are immutable and safe to share.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        canon = []
        for b in self.blocks:
            idx = tuple(sorted(int(i) for i in b))
            if not idx:
                raise ValueError("empty block")
            if len(set(idx)) != len(idx):
                raise ValueError(f"repeated index inside block {b}")
            canon.append(idx)
        canon.sort(key=lambda b: b[0])
        object.__setattr__(self, "blocks", tuple(canon))
        flat = [i for b in self.blocks for i in b]
        if len(flat) != len(set(flat)):
            raise ValueError("blocks are not disjoint")
        if min(flat) != 0 or max(flat) != len(flat) - 1:
            raise ValueError("blocks must cover exactly {0..N-1}")

    @classmethod
    def from_sizes(cls, sizes) -> "BlockPartition":
        """Contiguous partition with the given block sizes, in order."""
        sizes = [int(s) for s in sizes]
        if any(s <= 0 for s in sizes):
            raise ValueError("block sizes must be positive")
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return cls(tuple(tuple(range(a, b)) for a, b in zip(edges[:-1], edges[1:])))

    @property
    def total_dim(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @cached_property
    def block_sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.blocks], dtype=int)

    @cached_property
    def perm(self) -> np.ndarray:
        """Permutation mapping a full vector into block-stacked layout."""
        return np.array([i for b in self.blocks for i in b], dtype=int)

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start offset of each block in the block-stacked layout."""
        return np.concatenate([[0], np.cumsum(self.block_sizes)[:-1]])

    def block_norms(self, values) -> np.ndarray:
        """Euclidean norm of every block of a full-length vector."""
        v = _as_vector(values, self.total_dim)
        sq = np.add.reduceat(v[self.perm] ** 2, self.offsets)
        return np.sqrt(sq)

    def to_json(self) -> str:
        return json.dumps([list(b) for b in self.blocks])

    @classmethod
    def from_json(cls, text: str) -> "BlockPartition":
        return cls(tuple(tuple(b) for b in json.loads(text)))

    def __iter__(self):
        return iter(self.blocks)

    def __len__(self):
        return len(self.blocks)


@dataclass(frozen=True)
class BlockSupport:
    """An ordered subset of a partition's blocks (the active blocks).

    `active` holds positions into ``partition.blocks``, strictly increasing.
    """

    partition: BlockPartition
    active: tuple[int, ...]

    def __post_init__(self):
        act = tuple(int(i) for i in self.active)
        if sorted(set(act)) != list(act):
            raise ValueError("active block positions must be strictly increasing")
        if act and not (0 <= act[0] and act[-1] < self.partition.n_blocks):
            raise ValueError("active block position out of range")
        object.__setattr__(self, "active", act)

    @property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        return tuple(self.partition.blocks[i] for i in self.active)

    @property
    def n_active(self) -> int:
        return len(self.active)

    @property
    def active_dim(self) -> int:
        return sum(len(self.partition.blocks[i]) for i in self.active)

    @property
    def is_empty(self) -> bool:
        return not self.active

    @cached_property
    def indices(self) -> np.ndarray:
        """Coordinate indices of the active blocks, stacked in block order."""
        return np.array([i for b in self.blocks for i in b], dtype=int)

    @cached_property
    def offsets(self) -> np.ndarray:
        sizes = [len(b) for b in self.blocks]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def split(self, stacked) -> list[np.ndarray]:
        """Cut a stacked on-support vector back into per-block pieces."""
        v = _as_vector(stacked, self.active_dim)
        return [v[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def restrict(self, values) -> np.ndarray:
        """Extract the stacked on-support subvector of a full-length vector."""
        return _as_vector(values, self.partition.total_dim)[self.indices]

    def embed(self, stacked) -> np.ndarray:
        """Scatter a stacked on-support vector into a full-length zero vector."""
        out = np.zeros(self.partition.total_dim)
        out[self.indices] = _as_vector(stacked, self.active_dim)
        return out


@dataclass(frozen=True)
class Coefficients:
    """A coefficient vector together with its block partition."""

    values: np.ndarray
    partition: BlockPartition

    def __post_init__(self):
        v = _as_vector(self.values, self.partition.total_dim).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def block(self, i: int) -> np.ndarray:
        return self.values[np.array(self.partition.blocks[i], dtype=int)]

    def support(self, tol: float | None = None) -> "BlockSupport":
        return block_support(self, tol)


@dataclass(frozen=True)
class Design:
    """A full-column-rank design matrix with cached Gram factorization.

    Requires Q >= N columns-independent; the Gram matrix X'X must be
    symmetric positive definite, verified by Cholesky at construction.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("design must be a 2-D matrix")
        q, n = m.shape
        if q < n:
            raise ValueError(f"underdetermined design (Q={q} < N={n}) is unsupported")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        self.gram_cholesky  # fail fast on rank deficiency

    @classmethod
    def identity(cls, n: int) -> "Design":
        return cls(np.eye(n))

    @property
    def Q(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        g = self.matrix.T @ self.matrix
        g = 0.5 * (g + g.T)
        g.setflags(write=False)
        return g

    @cached_property
    def gram_cholesky(self):
        try:
            return scipy.linalg.cho_factor(self.gram, lower=True)
        except scipy.linalg.LinAlgError as e:
            raise ValueError("design columns are not linearly independent "
                             "(X'X is not positive definite)") from e

    def columns(self, indices) -> np.ndarray:
        return self.matrix[:, np.asarray(indices, dtype=int)]


def block_support(beta: Coefficients, tol: float | None = None) -> BlockSupport:
    """Blocks of `beta` whose Euclidean norm exceeds `tol`.

    With ``tol=None`` the threshold is relative, 1e-10 * max|beta|, so that
    near-zeros left behind by an iterative solver are screened at any scale.
    Pass an explicit nonnegative `tol` for an absolute cutoff (0 keeps every
    block that is not exactly zero).
    """
    norms = beta.partition.block_norms(beta.values)
    if tol is None:
        tol = 1e-10 * (np.max(np.abs(beta.values)) if beta.values.size else 0.0)
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    active = tuple(int(i) for i in np.nonzero(norms > tol)[0])
    return BlockSupport(beta.partition, active)


def normalize_blocks(beta_I, support: BlockSupport) -> np.ndarray:
    """Rescale each active block of a stacked on-support vector to unit norm.

    Raises DegenerateBlockError if any active block is zero.
    """
    v = _as_vector(beta_I, support.active_dim)
    out = np.empty_like(v)
    for k, (a, b) in enumerate(zip(support.offsets[:-1], support.offsets[1:])):
        nrm = np.linalg.norm(v[a:b])
        if nrm == 0.0:
            raise DegenerateBlockError(f"zero block at active position {k}")
        out[a:b] = v[a:b] / nrm
    return out


def delta_P_matrix(beta_I, support: BlockSupport) -> np.ndarray:
    """Block-diagonal matrix of scaled projectors orthogonal to each block.

    The block for b is (1/||beta_b||) (Id - beta_b beta_b' / ||beta_b||^2):
    symmetric positive semi-definite, annihilates beta_b, and vanishes on
    size-1 blocks.  Raises DegenerateBlockError on a zero block.
    """
    v = _as_vector(beta_I, support.active_dim)
    m = support.active_dim
    out = np.zeros((m, m))
    for k, (a, b) in enumerate(zip(support.offsets[:-1], support.offsets[1:])):
        blk = v[a:b]
        nrm = np.linalg.norm(blk)
        if nrm == 0.0:
            raise DegenerateBlockError(f"zero block at active position {k}")
        u = blk / nrm
        out[a:b, a:b] = (np.eye(b - a) - np.outer(u, u)) / nrm
    return out
