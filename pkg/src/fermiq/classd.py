"""Class-D matrix algebra on the fermionic phase space.

All 2M x 2M matrices use the extended mode ordering (a_1..a_M, a_1^+..a_M^+).
Class-D Hermitian matrices (covariances sigma, stretched coordinates zeta) are
plain complex ndarrays validated by :func:`check_class_d`; Majorana
coordinates are real antisymmetric ndarrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DecompositionError, DomainError, MalformedInputError, SymmetryViolationError

TOL_SYM = 1e-12
TOL_RECON = 1e-10
TOL_CLUSTER = 1e-10


def mode_count(A: np.ndarray) -> int:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MalformedInputError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] % 2 or A.shape[0] == 0:
        raise MalformedInputError(f"matrix dimension {A.shape[0]} is not a positive even number")
    return A.shape[0] // 2


def swap_matrix(M: int) -> np.ndarray:
    """Block-swap matrix Sigma = [[0, I], [I, 0]]."""
    I = np.eye(M)
    Z = np.zeros((M, M))
    return np.block([[Z, I], [I, Z]])


def ibar(M: int) -> np.ndarray:
    """diag(-I, I)."""
    return np.diag(np.concatenate([-np.ones(M), np.ones(M)]))


def majorana_unitary(M: int) -> np.ndarray:
    I = np.eye(M)
    return np.block([[I, I], [1j * I, -1j * I]]) / np.sqrt(2.0)


def check_class_d(A, tol: float = TOL_SYM) -> tuple[bool, float]:
    """Return (ok, max violation) for A = A^+ = -Sigma A^T Sigma."""
    A = np.asarray(A, dtype=complex)
    M = mode_count(A)
    S = swap_matrix(M)
    herm = np.max(np.abs(A - A.conj().T))
    refl = np.max(np.abs(A + S @ A.T @ S))
    viol = float(max(herm, refl))
    return viol <= tol, viol


def require_class_d(A, tol: float = TOL_SYM, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    ok, viol = check_class_d(A, tol)
    if not ok:
        raise SymmetryViolationError(f"{name} is not class-D Hermitian (violation {viol:.3g} > {tol:.3g})")
    return A


def sigma_from_blocks(n, m, tol: float = TOL_SYM) -> np.ndarray:
    """Covariance sigma = [[n^T - I, m], [-m^*, I - n]] from normal/anomalous blocks."""
    n = np.atleast_2d(np.asarray(n, dtype=complex))
    m = np.atleast_2d(np.asarray(m, dtype=complex))
    M = n.shape[0]
    if n.shape != (M, M) or m.shape != (M, M):
        raise MalformedInputError(f"blocks must both be {M}x{M}, got {n.shape} and {m.shape}")
    if np.max(np.abs(n - n.conj().T)) > tol:
        raise SymmetryViolationError("normal block n is not Hermitian")
    if np.max(np.abs(m + m.T)) > tol:
        raise SymmetryViolationError("anomalous block m is not antisymmetric")
    I = np.eye(M)
    return np.block([[n.T - I, m], [-m.conj(), I - n]])


def blocks_from_sigma(sigma) -> tuple[np.ndarray, np.ndarray]:
    sigma = np.asarray(sigma, dtype=complex)
    M = mode_count(sigma)
    n = np.eye(M) - sigma[M:, M:]
    m = sigma[:M, M:]
    return n, m


def zeta_from_sigma(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=complex)
    return ibar(mode_count(sigma)) - 2.0 * sigma


def sigma_from_zeta(zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=complex)
    return 0.5 * (ibar(mode_count(zeta)) - zeta)


def antisym_from_upper(upper, M: int) -> np.ndarray:
    """Real antisymmetric 2M x 2M matrix from its strict upper triangle (row-major)."""
    D = 2 * M
    iu = np.triu_indices(D, 1)
    upper = np.asarray(upper, dtype=float)
    X = np.zeros(upper.shape[:-1] + (D, D))
    X[..., iu[0], iu[1]] = upper
    return X - np.swapaxes(X, -1, -2)


def upper_entries(X) -> np.ndarray:
    X = np.asarray(X)
    D = X.shape[-1]
    iu = np.triu_indices(D, 1)
    return X[..., iu[0], iu[1]]


def majorana_map(zeta, tol: float = TOL_SYM) -> np.ndarray:
    """X = i U0 zeta U0^{-1}; raises if the result is not real antisymmetric."""
    zeta = np.asarray(zeta, dtype=complex)
    M = mode_count(zeta)
    U0 = majorana_unitary(M)
    Xc = 1j * U0 @ zeta @ U0.conj().T
    resid = max(np.max(np.abs(Xc.imag)), np.max(np.abs(Xc + Xc.T)))
    if resid > tol:
        raise SymmetryViolationError(f"Majorana image not real antisymmetric (residual {resid:.3g})")
    return antisym_from_upper(upper_entries(Xc.real), M)


def inverse_majorana_map(X) -> np.ndarray:
    """zeta = -i U0^{-1} X U0; works on stacks of matrices."""
    X = np.asarray(X, dtype=float)
    M = X.shape[-1] // 2
    U0 = majorana_unitary(M)
    return -1j * (U0.conj().T @ X @ U0)


def domain_check(zeta, strict_margin: float = 0.0) -> tuple[bool, float]:
    """True iff every eigenvalue lies in (-1 + strict_margin, 1 - strict_margin)."""
    ev = np.linalg.eigvalsh(np.asarray(zeta, dtype=complex))
    margin = float(1.0 - np.max(np.abs(ev)))
    return margin > strict_margin, margin


def require_closed_domain(zeta, tol: float = 1e-10, name: str = "point") -> float:
    _, margin = domain_check(zeta)
    if margin < -tol:
        raise DomainError(f"{name} has an eigenvalue of modulus {1 - margin:.12g} > 1")
    return margin


@dataclass(frozen=True)
class PolarForm:
    """zeta = U^{-1} diag(eigvals, -eigvals) U with U = Sigma U^* Sigma."""

    U: np.ndarray
    eigvals: np.ndarray

    @property
    def M(self) -> int:
        return self.eigvals.shape[0]

    def diagonal(self) -> np.ndarray:
        return np.diag(np.concatenate([self.eigvals, -self.eigvals])).astype(complex)

    def reconstruct(self) -> np.ndarray:
        return self.U.conj().T @ self.diagonal() @ self.U


def _polar_from_columns(vecs: list[np.ndarray], vals: list[float], M: int) -> PolarForm:
    S = swap_matrix(M)
    order = np.argsort(-np.asarray(vals), kind="stable")
    V = np.column_stack([vecs[i] for i in order])
    W = np.hstack([V, S @ V.conj()])
    return PolarForm(U=W.conj().T, eigvals=np.asarray(vals, dtype=float)[order])


def _polar_diagonal(zeta: np.ndarray, M: int) -> PolarForm:
    z = zeta.diagonal().real[:M]
    eye = np.eye(2 * M, dtype=complex)
    vecs = [eye[:, j] if z[j] >= 0 else eye[:, j + M] for j in range(M)]
    return _polar_from_columns(vecs, list(np.abs(z)), M)


def _polar_schur(zeta: np.ndarray, M: int, tol_cluster: float) -> PolarForm:
    # In Majorana coordinates the class-D pairing v -> Sigma v^* is plain complex
    # conjugation, so the real Schur form of X yields correctly paired eigenvectors
    # even inside degenerate clusters.
    X = majorana_map(zeta, tol=1e-8)
    T, O = scipy.linalg.schur(X, output="real")
    U0h = majorana_unitary(M).conj().T
    vecs, vals, zero_cols = [], [], []
    i, D = 0, 2 * M
    while i < D:
        if i + 1 < D and abs(T[i + 1, i]) > tol_cluster:
            x = 0.5 * (T[i, i + 1] - T[i + 1, i])
            o1, o2 = O[:, i], O[:, i + 1]
            y = o1 + 1j * o2 if x >= 0 else o1 - 1j * o2
            vecs.append(U0h @ y / np.sqrt(2.0))
            vals.append(abs(x))
            i += 2
        else:
            zero_cols.append(i)
            i += 1
    if len(zero_cols) % 2:
        raise DecompositionError("odd number of unpaired zero modes in real Schur form")
    for a, b in zip(zero_cols[::2], zero_cols[1::2]):
        vecs.append(U0h @ (O[:, a] + 1j * O[:, b]) / np.sqrt(2.0))
        vals.append(0.0)
    return _polar_from_columns(vecs, vals, M)


def polar_decompose(zeta, tol_recon: float = TOL_RECON, tol_cluster: float = TOL_CLUSTER) -> PolarForm:
    """Class-D diagonalisation of a stretched coordinate.

    Eigenvalues are returned non-negative and sorted in descending order.
    Diagonal input is handled by a permutation so that zeta = 0 and
    diag(z, -z) with z >= 0 return U = I.
    """
    zeta = require_class_d(zeta, tol=1e-9, name="zeta")
    M = mode_count(zeta)
    offdiag = zeta - np.diag(zeta.diagonal())
    if np.max(np.abs(offdiag)) == 0.0:
        pf = _polar_diagonal(zeta, M)
    else:
        pf = _polar_schur(zeta, M, tol_cluster)
    resid = np.max(np.abs(pf.reconstruct() - zeta))
    unit = np.max(np.abs(pf.U @ pf.U.conj().T - np.eye(2 * M)))
    if resid > tol_recon or unit > tol_recon:
        raise DecompositionError(
            f"polar decomposition failed: reconstruction {resid:.3g}, unitarity {unit:.3g}"
        )
    return pf


def polar_decompose_batch(zetas, tol_cluster: float = TOL_CLUSTER) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised polar decomposition of a stack of class-D matrices.

    Uses a batched Hermitian eigensolver and synthesises partners as
    Sigma v^*; items with near-degenerate or near-zero eigenvalues are routed
    through :func:`polar_decompose`. Returns (U stack, eigenvalue stack).
    """
    zetas = np.asarray(zetas, dtype=complex)
    n, D, _ = zetas.shape
    M = D // 2
    S = swap_matrix(M)
    w, v = np.linalg.eigh(zetas)
    # ascending order: the top M eigenvalues are the non-negative half
    vals = w[:, M:][:, ::-1]
    V = v[:, :, M:][:, :, ::-1]
    W = np.concatenate([V, S @ V.conj()], axis=2)
    U = np.conj(np.swapaxes(W, 1, 2))
    gaps = np.diff(vals, axis=1) if M > 1 else np.zeros((n, 0))
    bad = vals[:, -1] < tol_cluster
    if M > 1:
        bad |= np.min(np.abs(gaps), axis=1) < tol_cluster
    for idx in np.nonzero(bad)[0]:
        pf = polar_decompose(zetas[idx])
        U[idx] = pf.U
        vals[idx] = pf.eigvals
    return U, vals


def random_class_d(M: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random class-D Hermitian matrix with Gaussian blocks."""
    b = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    b = 0.5 * (b + b.conj().T)
    c = rng.normal(size=(M, M)) + 1j * rng.normal(size=(M, M))
    c = 0.5 * (c - c.T)
    return scale * np.block([[b, c], [-c.conj(), -b.T]])


def random_domain_point(M: int, rng: np.random.Generator, max_radius: float = 0.95) -> np.ndarray:
    """Random interior zeta whose largest eigenvalue modulus is below max_radius."""
    z = random_class_d(M, rng)
    r = np.max(np.abs(np.linalg.eigvalsh(z)))
    target = rng.uniform(0.05, max_radius)
    return z * (target / r)


def random_pure_point(M: int, rng: np.random.Generator) -> np.ndarray:
    """Random boundary point (zeta^2 = I) obtained by rotating a sign pattern."""
    signs = rng.choice([-1.0, 1.0], size=M)
    D = np.diag(np.concatenate([signs, -signs])).astype(complex)
    U = random_class_d_unitary(M, rng)
    return U.conj().T @ D @ U


def random_class_d_unitary(M: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """exp(iA) with A class-D Hermitian; satisfies U = Sigma U^* Sigma."""
    return scipy.linalg.expm(1j * random_class_d(M, rng, scale))
