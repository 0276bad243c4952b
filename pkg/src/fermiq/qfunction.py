"""Gaussian states and closed-form Q-function evaluation.

A Gaussian density matrix is itself a normalised Gaussian operator, so a
state is identified by its stretched coordinate ``zeta_s``. Its Q-function at
a phase-space point ``zeta`` is

    Q(zeta) = F(zeta_s, zeta) * S(zeta) / N_canon(M, k),
    F = 2^{-M} sqrt(det(I + zeta_s zeta)),   S = det(I - zeta^2)^{k/2},

with densities taken against plain Lebesgue measure on the Majorana entries.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classd, measures
from .exceptions import ConditioningError, DomainError, MalformedInputError

NEG_DET_TOL = 1e-10


@dataclass(frozen=True)
class ScalingParams:
    k: int = 0
    s: float = 0.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise MalformedInputError(f"k must be a non-negative integer, got {self.k}")
        if not math.isfinite(self.s):
            raise MalformedInputError("s must be finite")

    def require_closed_form(self):
        if self.s != 0:
            raise MalformedInputError("closed-form densities need s = 0; use s only as an MC weight")


@dataclass(frozen=True)
class GaussianState:
    zeta: np.ndarray
    label: str = "custom"
    polar: classd.PolarForm = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        z = classd.require_class_d(np.asarray(self.zeta, dtype=complex), name="zeta")
        classd.require_closed_domain(z, name="state")
        z = z.copy()
        z.setflags(write=False)
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "polar", classd.polar_decompose(z))

    @property
    def M(self) -> int:
        return self.zeta.shape[0] // 2

    @property
    def sigma(self) -> np.ndarray:
        return classd.sigma_from_zeta(self.zeta)

    @property
    def is_pure(self) -> bool:
        return bool(np.max(np.abs(self.zeta @ self.zeta - np.eye(2 * self.M))) < 1e-10)

    def rotated(self, U) -> "GaussianState":
        U = np.asarray(U, dtype=complex)
        return GaussianState(U @ self.zeta @ U.conj().T, label=self.label)


@dataclass(frozen=True)
class MixtureState:
    components: tuple

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        if not comps:
            raise MalformedInputError("mixture needs at least one component")
        if any(w < 0 for w, _ in comps):
            raise MalformedInputError("mixture weights must be non-negative")
        if abs(sum(w for w, _ in comps) - 1.0) > 1e-12:
            raise MalformedInputError("mixture weights must sum to 1")
        if len({s.M for _, s in comps}) != 1:
            raise MalformedInputError("mixture components have different mode counts")
        object.__setattr__(self, "components", comps)

    @property
    def M(self) -> int:
        return self.components[0][1].M


# ---------------------------------------------------------------- builders


def thermal_state(occupations) -> GaussianState:
    n = np.asarray(occupations, dtype=float).ravel()
    if n.size == 0 or np.any(n < 0) or np.any(n > 1) or not np.all(np.isfinite(n)):
        raise MalformedInputError("occupations must lie in [0, 1]")
    d = np.concatenate([1 - 2 * n, 2 * n - 1])
    return GaussianState(np.diag(d).astype(complex), label="thermal")


def fermi_dirac(E, mu: float, kT: float) -> np.ndarray:
    if not kT > 0:
        raise MalformedInputError("kT must be positive")
    x = (np.asarray(E, dtype=float) - mu) / kT
    return 0.5 * (1.0 - np.tanh(0.5 * x))


def thermal_state_physical(E, mu: float, kT: float) -> GaussianState:
    """Thermal state from single-particle energies via Fermi-Dirac occupations."""
    return thermal_state(fermi_dirac(E, mu, kT))


def bcs_state(pairs, tol: float = 1e-10) -> GaussianState:
    """Product of pure pair states on modes (2j, 2j+1).

    Each pair carries <a^+ a> = |v|^2 on both modes and <a_{2j} a_{2j+1}> = u v^*.
    """
    pairs = [(complex(u), complex(v)) for u, v in pairs]
    if not pairs:
        raise MalformedInputError("need at least one (u, v) pair")
    M = 2 * len(pairs)
    n = np.zeros((M, M), dtype=complex)
    m = np.zeros((M, M), dtype=complex)
    for j, (u, v) in enumerate(pairs):
        if abs(abs(u) ** 2 + abs(v) ** 2 - 1) > tol:
            raise MalformedInputError(f"pair {j}: |u|^2 + |v|^2 != 1")
        p, q = 2 * j, 2 * j + 1
        n[p, p] = n[q, q] = abs(v) ** 2
        m[p, q] = u * np.conj(v)
        m[q, p] = -u * np.conj(v)
    sigma = classd.sigma_from_blocks(n, m)
    return GaussianState(classd.zeta_from_sigma(sigma), label="bcs")


def pure_number_state(bits) -> GaussianState:
    b = [int(x) for x in bits]
    if any(x not in (0, 1) for x in b):
        raise MalformedInputError("bits must be 0 or 1")
    st = thermal_state(b)
    return GaussianState(st.zeta, label="pure")


# -------------------------------------------------------------- evaluation


def _sqrt_det(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d)
    if np.any(np.abs(d.imag) > NEG_DET_TOL * np.maximum(1.0, np.abs(d.real))) or np.any(d.real < -NEG_DET_TOL):
        raise ConditioningError("det(I + zeta' zeta) is not real non-negative; inputs are not domain points")
    return np.sqrt(np.clip(d.real, 0.0, None))


def inner_product_F(zeta_a, zeta_b) -> float:
    """Tr(Lambda(a) Lambda(b)) = 2^{-M} sqrt(det(I + a b))."""
    a = classd.require_class_d(zeta_a, name="zeta_a")
    b = classd.require_class_d(zeta_b, name="zeta_b")
    if a.shape != b.shape:
        raise MalformedInputError("mode counts differ")
    classd.require_closed_domain(a, name="zeta_a")
    classd.require_closed_domain(b, name="zeta_b")
    M = a.shape[0] // 2
    d = np.linalg.det(np.eye(2 * M) + a @ b)
    return float(_sqrt_det(d)) / 2**M


def inner_product_F_batch(zeta_s, zetas) -> np.ndarray:
    """F against a stack of points; no validation (sampler hot path)."""
    zetas = np.asarray(zetas, dtype=complex)
    D = zetas.shape[-1]
    d = np.linalg.det(np.eye(D) + np.asarray(zeta_s) @ zetas)
    return _sqrt_det(d) / 2 ** (D // 2)


def scaling_factor(eigvals, k: int) -> np.ndarray:
    """S = prod_j (1 - z_j^2)^k from the non-negative eigenvalue half."""
    z = np.asarray(eigvals, dtype=float)
    return np.prod(np.clip(1 - z**2, 0.0, None) ** k, axis=-1)


def s_weight(zetas, s: float) -> np.ndarray:
    """Importance weight exp(-s Tr zeta^2 / 4) for s != 0 runs."""
    zetas = np.asarray(zetas, dtype=complex)
    tr = np.einsum("...ij,...ji->...", zetas, zetas).real
    return np.exp(-s * tr / 4)


def _point_eigs(point) -> np.ndarray:
    ev = np.linalg.eigvalsh(point)
    M = point.shape[0] // 2
    # eigenvalues come in +/- pairs; keep the non-negative half
    return np.clip(ev[M:], 0.0, None)[::-1]


def q_gaussian(state: GaussianState, point, scaling: ScalingParams | None = None) -> float:
    scaling = scaling or ScalingParams()
    scaling.require_closed_form()
    point = classd.require_class_d(point, name="point")
    if point.shape != state.zeta.shape:
        raise MalformedInputError("point and state have different mode counts")
    if classd.domain_check(point)[1] < -1e-10:
        raise DomainError("point lies outside the classical domain")
    F = inner_product_F(state.zeta, point)
    S = float(scaling_factor(_point_eigs(point), scaling.k)) if scaling.k else 1.0
    return F * S / measures.constants(state.M, scaling.k).N_canon


def q_mixture(mix: MixtureState, point, scaling: ScalingParams | None = None) -> float:
    return float(sum(w * q_gaussian(s, point, scaling) for w, s in mix.components))


def q_density(state, point, scaling: ScalingParams | None = None) -> float:
    if isinstance(state, MixtureState):
        return q_mixture(state, point, scaling)
    return q_gaussian(state, point, scaling)


def q_thermal_single_mode(zeta_th: float, zeta: float, k: int = 0) -> float:
    """(1/2N) (1 - z^2)^k (1 + z_th z) for one mode."""
    N = measures.constants(1, k).N_canon
    return (1 - zeta**2) ** k * (1 + zeta_th * zeta) / (2 * N)


def _gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


def single_mode_unity(k: int = 0) -> np.ndarray:
    """Quadrature of the normalised single-mode basis over [-1, 1]; should be I.

    The integrand is a polynomial of degree 2k + 1, so Gauss-Legendre with
    k + 2 nodes is exact up to rounding.
    """
    N = measures.constants(1, k).N_canon
    z, w = _gauss_legendre(k + 2)
    S = (1 - z * z) ** k / N
    # Lambda_1(z) = diag((1 + z)/2, (1 - z)/2) in the basis |0>, |1>
    return np.diag([np.sum(w * S * (1 + z) / 2), np.sum(w * S * (1 - z) / 2)])


def single_mode_moment(zeta_th: float) -> float:
    """3 int z Q_th(z) dz; reproduces <2 a a^+ - 1> = zeta_th."""
    if abs(zeta_th) > 1:
        raise MalformedInputError("|zeta_th| must be <= 1")
    z, w = _gauss_legendre(4)
    return 3 * float(np.sum(w * z * q_thermal_single_mode(zeta_th, z)))


# --------------------------------------------------------------------- I/O


def matrix_to_json(A) -> dict:
    A = np.asarray(A, dtype=complex)
    return {"M": A.shape[0] // 2, "re": A.real.tolist(), "im": A.imag.tolist()}


def matrix_from_json(obj) -> np.ndarray:
    try:
        M = int(obj["M"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float) if "im" in obj else np.zeros_like(re)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInputError(f"malformed matrix JSON: {exc}") from exc
    if re.shape != (2 * M, 2 * M) or im.shape != re.shape:
        raise MalformedInputError(f"matrix shapes {re.shape}/{im.shape} do not match M={M}")
    return re + 1j * im


def state_from_dict(obj):
    if not isinstance(obj, dict) or "type" not in obj:
        raise MalformedInputError("state JSON needs a 'type' field")
    kind = obj["type"]
    try:
        if kind == "thermal":
            return thermal_state(obj["occupations"])
        if kind == "bcs":
            pairs = [
                (complex(p.get("u_re", 0), p.get("u_im", 0)), complex(p.get("v_re", 0), p.get("v_im", 0)))
                for p in obj["pairs"]
            ]
            return bcs_state(pairs)
        if kind == "pure":
            return pure_number_state(obj["bits"])
        if kind == "custom":
            return GaussianState(matrix_from_json(obj["zeta"]), label="custom")
        if kind == "mixture":
            return MixtureState(tuple((c["weight"], state_from_dict(c["state"])) for c in obj["components"]))
    except (KeyError, TypeError) as exc:
        raise MalformedInputError(f"state JSON missing field: {exc}") from exc
    raise MalformedInputError(f"unknown state type {kind!r}")


def state_to_dict(state) -> dict:
    if isinstance(state, MixtureState):
        return {
            "type": "mixture",
            "components": [{"weight": w, "state": state_to_dict(s)} for w, s in state.components],
        }
    return {"type": "custom", "label": state.label, "zeta": matrix_to_json(state.zeta)}


def load_state(path):
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedInputError(f"cannot read state file {path}: {exc}") from exc
    return state_from_dict(obj)
