"""Closed-form measure constants of the class-D classical domain.

Everything is computed in log-space with ``gammaln``. Two measure
conventions are exposed:

* ``riem``: the Riemannian measure induced by ds^2 = Tr(dX^T dX);
* ``canon``: plain Lebesgue measure on the M(2M-1) independent entries of X.

They differ by the constant factor 2^{M(M-1/2)}. The canonical convention is
the one realised by the Monte-Carlo sampler, and all Q densities in this
package are reported against it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .exceptions import ConstantTableError, MalformedInputError

LOG2 = math.log(2.0)


def _check_mk(M: int, k: int = 0) -> None:
    if int(M) != M or M < 1:
        raise MalformedInputError(f"mode count must be a positive integer, got {M}")
    if int(k) != k or k < 0:
        raise MalformedInputError(f"scaling exponent k must be a non-negative integer, got {k}")


def riemannian_factor_log(M: int) -> float:
    """log of d mu(X) / dX = 2^{M(M-1/2)}."""
    return M * (M - 0.5) * LOG2


def vandermonde_sq(eigvals) -> float:
    """prod_{i<j} (z_i^2 - z_j^2)^2; equals 1 for a single eigenvalue."""
    z2 = np.asarray(eigvals, dtype=float) ** 2
    out = 1.0
    for i in range(z2.size):
        for j in range(i + 1, z2.size):
            out *= (z2[i] - z2[j]) ** 2
    return out


def vandermonde_sq_batch(eigvals) -> np.ndarray:
    z2 = np.asarray(eigvals, dtype=float) ** 2
    diff = z2[..., :, None] - z2[..., None, :]
    iu = np.triu_indices(z2.shape[-1], 1)
    return np.prod(diff[..., iu[0], iu[1]] ** 2, axis=-1)


def unitary_volume(M: int) -> float:
    """log C_R = M(M-1/2) log(2 pi) - sum_j [log j! + log Gamma(j-1/2)]."""
    _check_mk(M)
    j = np.arange(1, M + 1)
    return float(M * (M - 0.5) * math.log(2 * math.pi) - np.sum(gammaln(j + 1) + gammaln(j - 0.5)))


def _mehta_log(M: int) -> float:
    """log of int Delta^2(z^2) exp(-sum z^2/2) dz over R^M."""
    j = np.arange(1, M + 1)
    return float(M * (M - 0.5) * LOG2 + np.sum(gammaln(j + 1) + gammaln(j - 0.5)))


def gaussian_integral(M: int, rtol: float = 1e-12) -> float:
    """log G_M = M(M-1/2) log(4 pi), cross-checked against the polar (Mehta) form."""
    _check_mk(M)
    direct = M * (M - 0.5) * math.log(4 * math.pi)
    polar = unitary_volume(M) + _mehta_log(M)
    if abs(math.expm1(polar - direct)) > rtol:
        raise ConstantTableError(f"G_{M}: Cartesian and polar forms disagree ({direct} vs {polar})")
    return direct


def radial_integral(M: int, k: int = 0) -> float:
    """log of int_{[-1,1]^M} Delta^2(z^2) prod_j (1 - z_j^2)^k dz (Selberg form)."""
    _check_mk(M, k)
    j = np.arange(1, M + 1)
    return float(np.sum(gammaln(j + 1) + gammaln(j - 0.5) + gammaln(k + j) - gammaln(k + M + j - 0.5)))


def domain_volume(M: int) -> tuple[float, float]:
    """(log V_riem, log V_canon) of the classical domain I + X^2 > 0."""
    _check_mk(M)
    j = np.arange(1, M + 1)
    log_riem = float(M * (M - 0.5) * math.log(2 * math.pi) + np.sum(gammaln(j) - gammaln(M + j - 0.5)))
    return log_riem, log_riem - riemannian_factor_log(M)


def normalization(M: int, k: int = 0) -> tuple[float, float]:
    """(log N_riem, log N_canon) of the normalised Gaussian basis with S = det(I - zeta^2)^{k/2}."""
    _check_mk(M, k)
    j = np.arange(1, M + 1)
    log_riem = float(
        M * (M - 0.5) * math.log(2 * math.pi) - M * LOG2 + np.sum(gammaln(k + j) - gammaln(k + M + j - 0.5))
    )
    return log_riem, log_riem - riemannian_factor_log(M)


def selberg_volume_factor(M: int) -> float:
    """log prod_j j! Gamma(j-1/2) Gamma(j) / Gamma(M+j-1/2), the k = 0 radial integral."""
    j = np.arange(1, M + 1)
    return float(np.sum(gammaln(j + 1) + gammaln(j - 0.5) + gammaln(j) - gammaln(M + j - 0.5)))


def moment_constant(M: int) -> float:
    """C_M = 2M - 1/2 relating antinormal moments to the Q mean of zeta."""
    return 2.0 * M - 0.5


@dataclass(frozen=True)
class MeasureConstants:
    M: int
    k: int
    logC_R: float
    logG_M: float
    logI_zeta: float
    logV_riem: float
    logV_canon: float
    logN_riem: float
    logN_canon: float

    @property
    def V_canon(self) -> float:
        return math.exp(self.logV_canon)

    @property
    def N_canon(self) -> float:
        return math.exp(self.logN_canon)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in list(out):
            if key.startswith("log"):
                out[key[3:]] = math.exp(out[key])
        out["riemannian_factor"] = math.exp(riemannian_factor_log(self.M))
        out["C_M"] = moment_constant(self.M)
        return out


@lru_cache(maxsize=None)
def constants(M: int, k: int = 0) -> MeasureConstants:
    logV_riem, logV_canon = domain_volume(M)
    logN_riem, logN_canon = normalization(M, k)
    return MeasureConstants(
        M=M,
        k=k,
        logC_R=unitary_volume(M),
        logG_M=gaussian_integral(M),
        logI_zeta=radial_integral(M, k),
        logV_riem=logV_riem,
        logV_canon=logV_canon,
        logN_riem=logN_riem,
        logN_canon=logN_canon,
    )
