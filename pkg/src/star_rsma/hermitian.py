"""Complex/Hermitian linear algebra used by the model and the SDP layer.

All functions are pure; inputs are never modified in place.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, NumericError

TOL_PSD = 1e-7
TOL_HERM = 1e-9


def herm(M: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.swapaxes(M, -1, -2))


def hermitize(M: np.ndarray) -> np.ndarray:
    """Return (M + M^H) / 2 as a complex array."""
    M = np.asarray(M, dtype=complex)
    return 0.5 * (M + herm(M))


def is_hermitian(M: np.ndarray, tol: float = TOL_HERM) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return bool(np.max(np.abs(M - herm(M)), initial=0.0) <= tol * scale)


def _check_finite(M: np.ndarray) -> None:
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix contains non-finite entries")


def trace_form(G: np.ndarray, P: np.ndarray, Q: np.ndarray) -> float:
    """Evaluate Tr(G P G^H Q).

    For ``P = w w^H`` and ``Q = q q^H`` this equals ``|q^H G w|^2``, i.e. the
    power received through the cascaded link ``G`` with reflection vector ``q``.

    Parameters
    ----------
    G : (n_s, n_t) complex array
    P : (n_t, n_t) Hermitian PSD array
    Q : (n_s, n_s) Hermitian PSD array
    """
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    P = np.atleast_2d(np.asarray(P, dtype=complex))
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    n_s, n_t = G.shape
    if P.shape != (n_t, n_t) or Q.shape != (n_s, n_s):
        raise ConfigurationError(
            f"trace_form dimension mismatch: G {G.shape}, P {P.shape}, Q {Q.shape}"
        )
    B = herm(G) @ Q @ G
    val = np.sum(B.T * P)
    if abs(val.imag) > 1e-9 * abs(val.real) + 1e-12:
        raise NumericError(f"trace form not real: {val}")
    return float(val.real)


def largest_eigpair(M: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of a Hermitian matrix and a unit eigenvector."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    _check_finite(M)
    w, V = np.linalg.eigh(hermitize(M))
    return float(w[-1]), V[:, -1]


def eigvalsh(M: np.ndarray) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    _check_finite(M)
    return np.linalg.eigvalsh(hermitize(M))


def nuclear_norm(M: np.ndarray) -> float:
    # singular values of a Hermitian matrix are |eigenvalues|
    return float(np.sum(np.abs(eigvalsh(M))))


def spectral_norm(M: np.ndarray) -> float:
    return float(np.max(np.abs(eigvalsh(M))))


def rank_one_gap(M: np.ndarray) -> float:
    """Nuclear minus spectral norm; zero exactly when M has rank at most one."""
    lam = np.abs(eigvalsh(M))
    return float(np.sum(lam) - np.max(lam))


def is_psd(M: np.ndarray, tol: float = TOL_PSD) -> bool:
    return bool(eigvalsh(M)[0] >= -tol)


def real_embed(M: np.ndarray) -> np.ndarray:
    """Map Hermitian ``M`` (n x n) to the real symmetric ``[[Re, -Im], [Im, Re]]``.

    The embedding is PSD iff ``M`` is, each eigenvalue of ``M`` appears twice,
    and ``Tr(A B) = Tr(embed(A) embed(B)) / 2`` for Hermitian ``A``, ``B``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    if not is_hermitian(M):
        raise ConfigurationError("real_embed requires a Hermitian matrix")
    M = hermitize(M)
    re, im = M.real, M.imag
    return np.block([[re, -im], [im, re]])


def real_unembed(Y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_embed` for an arbitrary real symmetric 2n x 2n ``Y``.

    A general symmetric ``Y`` is first projected onto the embedding structure by
    averaging its diagonal and off-diagonal blocks; the projection preserves
    positive semidefiniteness and all functionals ``Tr(embed(C) Y)``.
    """
    Y = np.asarray(Y, dtype=float)
    n2 = Y.shape[0]
    if n2 % 2 or Y.shape != (n2, n2):
        raise ConfigurationError(f"real_unembed expects an even square matrix, got {Y.shape}")
    n = n2 // 2
    Y = 0.5 * (Y + Y.T)
    re = 0.5 * (Y[:n, :n] + Y[n:, n:])
    im = 0.5 * (Y[n:, :n] - Y[:n, n:])
    return hermitize(re + 1j * im)


def principal_component(M: np.ndarray) -> np.ndarray:
    """Vector ``v`` with ``v v^H`` the best rank-one PSD approximation of ``M``."""
    lam, u = largest_eigpair(M)
    return np.sqrt(max(lam, 0.0)) * u


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return hermitize(A)


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    r = n if rank is None else rank
    A = rng.standard_normal((n, r)) + 1j * rng.standard_normal((n, r))
    return hermitize(A @ herm(A))
