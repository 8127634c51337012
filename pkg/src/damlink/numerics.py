"""Complex linear-algebra and transform primitives shared by the whole library.

Everything here is deterministic and pure; sizes stay modest (a few hundred
antennas, up to ~1024 subcarriers), so dense LAPACK routines are fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_RTOL = 1e-12


class RankDeficientError(ValueError):
    """Raised when a matrix that must have full column rank does not.

    Carries the numerically detected rank so callers can decide whether to
    regenerate a degenerate channel draw or merge paths.
    """

    def __init__(self, detected_rank: int, expected_rank: int):
        self.detected_rank = detected_rank
        self.expected_rank = expected_rank
        super().__init__(
            f"matrix is rank deficient: detected rank {detected_rank}, "
            f"expected {expected_rank}"
        )


@dataclass(frozen=True)
class ReducedSvd:
    """Reduced SVD ``a = left @ diag(singulars) @ right.conj().T``.

    ``left`` and ``right`` have orthonormal columns; ``singulars`` are strictly
    positive and non-increasing. Columns beyond the numerical rank are dropped.
    """

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.singulars)

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singulars) @ self.right.conj().T


def orth_complement(h: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of the columns of ``h``.

    ``h`` is M x p with p < M and full column rank. The returned basis ``b``
    is M x (M - p) with ``h.conj().T @ b == 0`` and ``b.conj().T @ b == I``.
    For p == 0 the complement is the whole space and the identity is returned.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim == 1:
        h = h[:, None]
    m, p = h.shape
    if p == 0:
        return np.eye(m, dtype=complex)
    if p >= m:
        raise ValueError(f"need p < M for a nontrivial complement, got {h.shape}")
    u, s, _ = np.linalg.svd(h, full_matrices=True)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s[0] > 0 else 0
    if rank < p:
        raise RankDeficientError(rank, p)
    return u[:, p:]


def reduced_svd(a: np.ndarray) -> ReducedSvd:
    """Reduced SVD keeping only the numerically nonzero singular values."""
    a = np.asarray(a, dtype=complex)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        raise ValueError("cannot take the reduced SVD of an all-zero matrix")
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    return ReducedSvd(
        left=u[:, :rank],
        singulars=s[:rank].copy(),
        right=vh[:rank].conj().T,
    )


def unitary_dft(x: np.ndarray, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """Unitary K-point DFT along ``axis``.

    Forward kernel exp(-j 2 pi k n / K) / sqrt(K); the inverse is its adjoint,
    so both directions preserve energy and round-trip to the identity.
    """
    x = np.asarray(x, dtype=complex)
    k = x.shape[axis]
    if inverse:
        return np.fft.ifft(x, axis=axis) * np.sqrt(k)
    return np.fft.fft(x, axis=axis) / np.sqrt(k)
