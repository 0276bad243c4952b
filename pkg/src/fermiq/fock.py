"""Brute-force Fock-space oracle.

Operators are dense 2^M x 2^M complex matrices in the occupation-number
basis |n_1 ... n_M> (mode 1 is the most significant bit). Two independent
constructions of the normalised Gaussian operator are provided:

* :func:`lambda_via_polar` builds the diagonal product form in rotated modes
  obtained from the class-D polar decomposition;
* :func:`lambda_direct` expands the normally ordered exponential term by term
  with explicit fermionic sign bookkeeping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from . import classd
from .exceptions import DomainError, MalformedInputError, ResourceLimitError, StepSizeError

M_MAX = 8
M_MAX_DIRECT = 2


@dataclass(frozen=True)
class ModeOperatorSet:
    """Jordan-Wigner annihilators plus the extended vectors a_hat and a_hat^+."""

    M: int
    annihilators: tuple

    @property
    def dim(self) -> int:
        return 2**self.M

    @property
    def creators(self) -> tuple:
        return tuple(a.T.copy() for a in self.annihilators)

    @property
    def ext(self) -> np.ndarray:
        """Stack (a_1..a_M, a_1^+..a_M^+), shape (2M, D, D)."""
        a = np.stack(self.annihilators)
        return np.concatenate([a, np.swapaxes(a, 1, 2)])

    @property
    def ext_dag(self) -> np.ndarray:
        """Stack (a_1^+..a_M^+, a_1..a_M)."""
        a = np.stack(self.annihilators)
        return np.concatenate([np.swapaxes(a, 1, 2), a])

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


@lru_cache(maxsize=None)
def mode_operators(M: int, M_max: int = M_MAX) -> ModeOperatorSet:
    """Annihilators with Jordan-Wigner parity strings; entries are 0 or +-1."""
    if M < 1:
        raise MalformedInputError(f"mode count must be positive, got {M}")
    if M > M_max:
        raise ResourceLimitError(f"Fock oracle limited to M <= {M_max}, got {M}")
    lower = np.array([[0, 1], [0, 0]], dtype=float)
    parity = np.diag([1.0, -1.0])
    ops = []
    for j in range(M):
        factors = [parity] * j + [lower] + [np.eye(2)] * (M - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        op = op.astype(complex)
        op.setflags(write=False)
        ops.append(op)
    return ModeOperatorSet(M=M, annihilators=tuple(ops))


def validate_physical(rho, tol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] & (rho.shape[0] - 1):
        raise MalformedInputError(f"operator shape {rho.shape} is not 2^M x 2^M")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise MalformedInputError("operator is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise MalformedInputError(f"operator trace {np.trace(rho).real:.15g} != 1")
    if np.min(np.linalg.eigvalsh(rho)) < -tol:
        raise MalformedInputError("operator has a negative eigenvalue")
    return rho


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product Tr(A B)."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise MalformedInputError(f"dimension mismatch {A.shape} vs {B.shape}")
    return complex(np.einsum("ij,ji->", A, B))


# ---------------------------------------------------------------- polar route


def mode_frame(U: np.ndarray) -> np.ndarray:
    """Mode rotation V = U (i Ibar) used by the product form.

    V diagonalises Ibar zeta Ibar whenever U diagonalises zeta. The extra
    i Ibar (a -> -i a) fixes the sign of the pairing block so that the
    product form coincides with the normally ordered exponential in
    ``sigma = (Ibar - zeta) / 2``; with plain b = U a the anomalous block
    would come out with the opposite sign.
    """
    M = U.shape[-1] // 2
    phase = np.concatenate([np.full(M, -1j), np.full(M, 1j)])
    return U * phase


def lambda_from_polar(U: np.ndarray, eigvals: np.ndarray, ops: ModeOperatorSet | None = None) -> np.ndarray:
    """prod_j [ (1 + z_j)/2 - z_j b_j^+ b_j ] with b = U a_hat (U taken as given)."""
    M = len(eigvals)
    ops = ops or mode_operators(M)
    B = np.einsum("jk,kab->jab", U[:M], ops.ext)
    out = ops.identity()
    for j in range(M):
        num = B[j].conj().T @ B[j]
        out = out @ (0.5 * (1 + eigvals[j]) * ops.identity() - eigvals[j] * num)
    return out


def lambda_from_polar_batch(U: np.ndarray, eigvals: np.ndarray, ops: ModeOperatorSet | None = None) -> np.ndarray:
    M = eigvals.shape[-1]
    ops = ops or mode_operators(M)
    B = np.einsum("njk,kab->njab", U[:, :M], ops.ext)
    num = np.einsum("njca,njcb->njab", B.conj(), B)
    eye = ops.identity()
    z = eigvals[:, :, None, None]
    factors = 0.5 * (1 + z) * eye - z * num
    out = factors[:, 0]
    for j in range(1, M):
        out = out @ factors[:, j]
    return out


def lambda_via_polar(zeta, ops: ModeOperatorSet | None = None, boundary_tol: float = 1e-10) -> np.ndarray:
    """Unit-trace Gaussian operator Lambda(sigma) at stretched coordinate zeta."""
    zeta = np.asarray(zeta, dtype=complex)
    pf = classd.polar_decompose(zeta)
    if pf.eigvals.size and pf.eigvals[0] > 1 + boundary_tol:
        raise DomainError(f"eigenvalue {pf.eigvals[0]:.12g} outside [-1, 1]")
    return lambda_from_polar(mode_frame(pf.U), pf.eigvals, ops)


def lambda_via_polar_batch(zetas, ops: ModeOperatorSet | None = None) -> np.ndarray:
    """Stack of Lambda(zeta) for a (n, 2M, 2M) stack of domain points."""
    U, vals = classd.polar_decompose_batch(zetas)
    return lambda_from_polar_batch(mode_frame(U), vals, ops)


# ------------------------------------------------------ normal-ordered route


def _normal_order(seq):
    """Normal-order a word of (is_creator, mode) letters.

    Returns (sign, creators, annihilators) with each group in ascending mode
    order, or (0, None, None) when a repeated letter makes the word vanish.
    """
    seq = list(seq)
    sign = 1
    # stable partition: creators left, counting transpositions
    n_ann_seen = 0
    for is_cr, _ in seq:
        if is_cr:
            if n_ann_seen % 2:
                sign = -sign
        else:
            n_ann_seen += 1
    cr = [m for is_cr, m in seq if is_cr]
    an = [m for is_cr, m in seq if not is_cr]
    for group in (cr, an):
        if len(set(group)) != len(group):
            return 0, None, None
        inv = sum(1 for i in range(len(group)) for j in range(i + 1, len(group)) if group[i] > group[j])
        if inv % 2:
            sign = -sign
    return sign, tuple(sorted(cr)), tuple(sorted(an))


def _word(key):
    cr, an = key
    return [(True, m) for m in cr] + [(False, m) for m in an]


def _normal_product(p: dict, q: dict) -> dict:
    out: dict = {}
    for k1, c1 in p.items():
        w1 = _word(k1)
        for k2, c2 in q.items():
            sign, cr, an = _normal_order(w1 + _word(k2))
            if sign == 0:
                continue
            key = (cr, an)
            out[key] = out.get(key, 0) + sign * c1 * c2
    return {k: v for k, v in out.items() if v != 0}


def normal_ordered_quadratic(mu) -> dict:
    """:a_hat^+ mu a_hat: as {(creators, annihilators): coefficient}."""
    mu = np.asarray(mu, dtype=complex)
    M = classd.mode_count(mu)
    poly: dict = {}
    for al in range(2 * M):
        left = (al < M, al % M)  # a_hat^+_alpha
        for be in range(2 * M):
            if mu[al, be] == 0:
                continue
            right = (be >= M, be % M)  # a_hat_beta
            sign, cr, an = _normal_order([left, right])
            if sign == 0:
                continue
            key = (cr, an)
            poly[key] = poly.get(key, 0) + sign * mu[al, be]
    return {k: v for k, v in poly.items() if v != 0}


def normal_ordered_exp(mu) -> dict:
    """:exp(-a_hat^+ mu a_hat / 2): as a terminating sum of normal-ordered monomials."""
    mu = np.asarray(mu, dtype=complex)
    M = classd.mode_count(mu)
    quad = {k: -0.5 * v for k, v in normal_ordered_quadratic(mu).items()}
    total = {((), ()): 1.0 + 0j}
    term = dict(total)
    for n in range(1, 2 * M + 1):
        term = {k: v / n for k, v in _normal_product(term, quad).items()}
        if not term:
            break
        for k, v in term.items():
            total[k] = total.get(k, 0) + v
    return total


def poly_to_matrix(poly: dict, ops: ModeOperatorSet) -> np.ndarray:
    out = np.zeros((ops.dim, ops.dim), dtype=complex)
    for (cr, an), coeff in poly.items():
        mat = ops.identity()
        for m in cr:
            mat = mat @ ops.annihilators[m].T
        for m in an:
            mat = mat @ ops.annihilators[m]
        out += coeff * mat
    return out


def lambda_unnormalized(mu, M_max: int = M_MAX_DIRECT) -> np.ndarray:
    """:exp(-a_hat^+ mu a_hat / 2): by symbolic normal ordering (M <= 2)."""
    mu = np.asarray(mu, dtype=complex)
    M = classd.mode_count(mu)
    if M > M_max:
        raise ResourceLimitError(f"direct normal-ordered expansion limited to M <= {M_max}, got {M}")
    return poly_to_matrix(normal_ordered_exp(mu), mode_operators(M))


def mu_from_sigma(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=complex)
    return np.linalg.inv(sigma) - 2 * classd.ibar(classd.mode_count(sigma))


def lambda_direct(mu, M_max: int = M_MAX_DIRECT) -> np.ndarray:
    """sqrt(det(i sigma)) :exp(-a_hat^+ mu a_hat / 2): with sigma = (mu + 2 Ibar)^{-1}."""
    mu = np.asarray(mu, dtype=complex)
    M = classd.mode_count(mu)
    sigma = np.linalg.inv(mu + 2 * classd.ibar(M))
    det = np.linalg.det(1j * sigma)
    # det(i sigma) is positive for Hermitian class-D sigma; the principal root
    # keeps holomorphic continuations (finite differences) on the same branch
    return np.sqrt(det + 0j) * lambda_unnormalized(mu, M_max)


def lambda_from_sigma(sigma, M_max: int = M_MAX_DIRECT) -> np.ndarray:
    return lambda_direct(mu_from_sigma(sigma), M_max)


# ------------------------------------------------------------------- moments


@dataclass(frozen=True)
class Moments:
    """Second moments of a density operator.

    ``antinormal[alpha, beta] = <{a_hat_alpha a_hat^+_beta}>``; for a Gaussian
    state this equals ``-Ibar sigma Ibar``. ``n[i, j] = <a_i^+ a_j>`` and
    ``m[i, j] = <a_i a_j>`` are the covariance blocks.
    """

    antinormal: np.ndarray
    n: np.ndarray
    m: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        Ib = classd.ibar(self.n.shape[0])
        return -Ib @ self.antinormal @ Ib


def antinormal_pair(ops: ModeOperatorSet, al: int, be: int) -> np.ndarray:
    """{a_hat_alpha a_hat^+_beta}: annihilators left, creators right."""
    M = ops.M
    x = ops.ext[al]
    y = ops.ext_dag[be]
    x_is_cr = al >= M
    y_is_cr = be < M
    if x_is_cr and not y_is_cr:
        return -(y @ x)
    return x @ y


def exact_moments(rho, validate: bool = True) -> Moments:
    rho = validate_physical(rho) if validate else np.asarray(rho, dtype=complex)
    M = int(round(math.log2(rho.shape[0])))
    ops = mode_operators(M)
    G = np.empty((2 * M, 2 * M), dtype=complex)
    for al in range(2 * M):
        for be in range(2 * M):
            G[al, be] = np.trace(rho @ antinormal_pair(ops, al, be))
    a = ops.annihilators
    n = np.array([[np.trace(rho @ a[i].T @ a[j]) for j in range(M)] for i in range(M)])
    m = np.array([[np.trace(rho @ a[i] @ a[j]) for j in range(M)] for i in range(M)])
    return Moments(antinormal=G, n=n, m=m)


# --------------------------------------------------------- differential ids


def identity_lhs(lam: np.ndarray, which: int, ops: ModeOperatorSet) -> np.ndarray:
    """Operator-valued 2M x 2M left-hand sides of the four ordering identities.

    1. :a_hat a_hat^+ L:      2. {a_hat :a_hat^+ L:}
    3. {:L a_hat: a_hat^+}    4. {a_hat a_hat^+ L}
    L keeps its internal ordering; outer orderings move bare ladder operators
    across L (which is even) with the usual fermionic signs.
    """
    M = ops.M
    a = ops.annihilators
    ad = [x.T for x in a]
    D = 2 * M
    out = np.empty((D, D, ops.dim, ops.dim), dtype=complex)
    for al in range(D):
        i = al % M
        for be in range(D):
            j = be % M
            top, left = al < M, be < M
            if which == 1:
                if top and left:
                    v = -ad[j] @ lam @ a[i]
                elif top:
                    v = lam @ a[i] @ a[j]
                elif left:
                    v = ad[i] @ ad[j] @ lam
                else:
                    v = ad[i] @ lam @ a[j]
            elif which == 2:
                if top and left:
                    v = a[i] @ ad[j] @ lam
                elif top:
                    v = a[i] @ lam @ a[j]
                elif left:
                    v = -ad[j] @ lam @ ad[i]
                else:
                    v = -lam @ a[j] @ ad[i]
            elif which == 3:
                if top and left:
                    v = lam @ a[i] @ ad[j]
                elif top:
                    v = -a[j] @ lam @ a[i]
                elif left:
                    v = ad[i] @ lam @ ad[j]
                else:
                    v = -a[j] @ ad[i] @ lam
            elif which == 4:
                if top and left:
                    v = a[i] @ lam @ ad[j]
                elif top:
                    v = a[i] @ a[j] @ lam
                elif left:
                    v = lam @ ad[i] @ ad[j]
                else:
                    v = -a[j] @ lam @ ad[i]
            else:
                raise MalformedInputError(f"identity index must be 1..4, got {which}")
            out[al, be] = v
    return out


def constrained_sigma_derivative(sigma, h: float = 1e-5, lam_fn=None) -> np.ndarray:
    """dL[alpha, beta] = derivative of Lambda along E_ab - E_{bbar abar}.

    The direction is split into Hermitian class-D parts H1 + i H2 and each is
    differenced centrally over the real parameters of sigma; holomorphy of
    Lambda in sigma gives d_D = d_H1 + i d_H2.
    """
    sigma = np.asarray(sigma, dtype=complex)
    M = classd.mode_count(sigma)
    D = 2 * M
    if lam_fn is None:
        lam_fn = lambda s: lambda_via_polar(classd.zeta_from_sigma(s))
    dim = 2**M
    out = np.zeros((D, D, dim, dim), dtype=complex)
    cache: dict = {}

    def ddir(H):
        key = H.tobytes()
        if key not in cache:
            cache[key] = (lam_fn(sigma + h * H) - lam_fn(sigma - h * H)) / (2 * h)
        return cache[key]

    for al in range(D):
        for be in range(D):
            Dm = np.zeros((D, D), dtype=complex)
            Dm[al, be] += 1
            Dm[(be + M) % D, (al + M) % D] -= 1
            if not Dm.any():
                continue
            H1 = 0.5 * (Dm + Dm.conj().T)
            H2 = (Dm - Dm.conj().T) / 2j
            val = ddir(H1) if H1.any() else 0
            if H2.any():
                val = val + 1j * ddir(H2)
            out[al, be] = val
    return out


def identity_rhs(sigma, lam: np.ndarray, dlam: np.ndarray, which: int) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=complex)
    M = classd.mode_count(sigma)
    st = classd.ibar(M) - sigma
    # matrix-derivative convention [d/d sigma]_{gk} = d/d sigma_{kg}
    grad = np.swapaxes(dlam, 0, 1)
    left, right, first, s0 = {
        1: (sigma, sigma, sigma, 1),
        2: (st, sigma, sigma, -1),
        3: (sigma, st, sigma, -1),
        4: (st, st, st, -1),
    }[which]
    term1 = s0 * np.einsum("ab,xy->abxy", first, lam)
    term2 = np.einsum("ag,gkxy,kb->abxy", left, grad, right)
    return term1 - term2


def check_diff_identity(sigma, which: int, h: float = 1e-5) -> float:
    """Max relative residual of one ordering identity, by finite differences."""
    sigma = classd.require_class_d(sigma, tol=1e-10, name="sigma")
    M = classd.mode_count(sigma)
    if M > M_MAX_DIRECT:
        raise ResourceLimitError(f"differential identity check limited to M <= {M_MAX_DIRECT}")
    _, margin = classd.domain_check(classd.zeta_from_sigma(sigma))
    # zeta = Ibar - 2 sigma moves by 2h per unit step in sigma
    if margin <= 10 * h:
        raise StepSizeError(f"domain margin {margin:.3g} too small for step {h:.3g}")
    ops = mode_operators(M)
    lam = lambda_via_polar(classd.zeta_from_sigma(sigma), ops)
    dlam = constrained_sigma_derivative(sigma, h)
    lhs = identity_lhs(lam, which, ops)
    rhs = identity_rhs(sigma, lam, dlam, which)
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


# ------------------------------------------------------------- group action


def fock_generator(A, ops: ModeOperatorSet | None = None) -> np.ndarray:
    """(1/2) a_hat^+ A a_hat as a Fock matrix."""
    A = np.asarray(A, dtype=complex)
    M = classd.mode_count(A)
    ops = ops or mode_operators(M)
    return 0.5 * np.einsum("ab,axy,byz->xz", A, ops.ext_dag, ops.ext)


def fock_rotation(U, ops: ModeOperatorSet | None = None) -> np.ndarray:
    """Fock unitary R with R a_hat R^+ = U a_hat (principal-log lift)."""
    U = np.asarray(U, dtype=complex)
    A = -1j * scipy.linalg.logm(U)
    A = 0.5 * (A + A.conj().T)
    return scipy.linalg.expm(-1j * fock_generator(A, ops))


def covariant_rotation(U, ops: ModeOperatorSet | None = None) -> np.ndarray:
    """Fock unitary R with Lambda(U zeta U^+) = R^+ Lambda(zeta) R.

    In the stretched coordinate the mode action of U appears conjugated by
    Ibar, so R is the lift of Ibar U Ibar.
    """
    U = np.asarray(U, dtype=complex)
    Ib = classd.ibar(classd.mode_count(U))
    return fock_rotation(Ib @ U @ Ib, ops)
