"""Monte-Carlo estimators over the class-D classical domain.

Proposals are uniform in the M(2M-1) independent Majorana entries X_ij and
are kept when I + X^2 > 0, which makes the kept points uniform under the
canonical (Lebesgue) measure. Random numbers are counter based: proposal i
lives in block i // BLOCK, and each block draws from a Philox stream keyed by
the seed with the block index in the counter. Every estimate is therefore a
pure function of (seed, samples), whatever the worker count or batch size.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from . import classd, fock, measures, qfunction
from .exceptions import InconclusiveRunError, MalformedInputError, ResourceLimitError

BLOCK = 16384
PROPOSALS = ("box", "ball")


@dataclass(frozen=True)
class MCConfig:
    samples: int = 100_000
    seed: int = 0
    workers: int = 1
    batch: int = 4 * BLOCK
    proposal: str = "box"

    def __post_init__(self):
        if int(self.samples) != self.samples or self.samples < 1:
            raise MalformedInputError(f"samples must be a positive integer, got {self.samples}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise MalformedInputError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise MalformedInputError(f"workers must be a positive integer, got {self.workers}")
        if int(self.batch) != self.batch or self.batch < 1:
            raise MalformedInputError(f"batch must be a positive integer, got {self.batch}")
        if self.proposal not in PROPOSALS:
            raise MalformedInputError(f"proposal must be one of {PROPOSALS}, got {self.proposal!r}")

    @classmethod
    def from_env(cls, **kw) -> "MCConfig":
        kw.setdefault("workers", int(os.environ.get("FERMIQ_WORKERS", "1")))
        return cls(**kw)


@dataclass
class MCReport:
    estimate: object
    stderr: object
    n_total: int
    n_accepted: int
    acceptance: float
    seed: int
    elapsed: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: to_jsonable(v) for k, v in asdict(self).items()}


def to_jsonable(v):
    if isinstance(v, dict):
        return {str(k): to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    if isinstance(v, np.ndarray) or isinstance(v, np.generic):
        v = np.asarray(v)
        if np.iscomplexobj(v):
            if not np.any(v.imag):
                return to_jsonable(v.real)
            return {"re": v.real.tolist(), "im": v.imag.tolist()}
        return v.tolist()
    if isinstance(v, complex):
        return {"re": v.real, "im": v.imag} if v.imag else v.real
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


# ------------------------------------------------------------ accumulation


class RunningStats:
    """Per-entry mean and M2 with Chan's pairwise merge."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    @classmethod
    def of(cls, x) -> "RunningStats":
        x = np.asarray(x, dtype=float)
        st = cls(x.shape[1:])
        st.n = x.shape[0]
        if st.n:
            st.mean = x.mean(axis=0)
            st.m2 = ((x - st.mean) ** 2).sum(axis=0)
        return st

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.n / n
        self.m2 = self.m2 + other.m2 + delta**2 * self.n * other.n / n
        self.n = n
        return self

    @property
    def var(self):
        return self.m2 / (self.n - 1) if self.n > 1 else np.full_like(self.mean, np.inf)

    @property
    def stderr(self):
        return np.sqrt(self.var / self.n) if self.n > 1 else np.full_like(self.mean, np.inf)


def _complex_stats(z) -> RunningStats:
    z = np.asarray(z)
    return RunningStats.of(np.stack([z.real, z.imag], axis=1))  # (n, 2, ...)


def _complex_mean_stderr(st: RunningStats):
    mean = st.mean[0] + 1j * st.mean[1]
    se = np.sqrt(st.var[0] + st.var[1]) / math.sqrt(st.n) if st.n > 1 else np.full(mean.shape, np.inf)
    return mean, se


# --------------------------------------------------------------- proposals


def n_entries(M: int) -> int:
    return M * (2 * M - 1)


def box_volume(M: int) -> float:
    return 2.0 ** n_entries(M)


def ball_volume(M: int) -> float:
    """Volume of the entry-space ball sum_{i<j} X_ij^2 < M containing the domain."""
    d = n_entries(M)
    return math.exp(0.5 * d * math.log(math.pi * M) - gammaln(0.5 * d + 1))


def proposal_volume(M: int, proposal: str) -> float:
    return box_volume(M) if proposal == "box" else ball_volume(M)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, 0, int(block), 0]))


def _block_sizes(samples: int) -> list[int]:
    nb, rem = divmod(samples, BLOCK)
    return [BLOCK] * nb + ([rem] if rem else [])


def in_domain(upper: np.ndarray, M: int) -> np.ndarray:
    """Exact test ||X||_op < 1 for rows of independent entries.

    The Frobenius bound sum X_ij^2 < M is a cheap necessary condition and
    screens most proposals before the eigenvalue test.
    """
    ok = np.einsum("ij,ij->i", upper, upper) < M
    if M == 1:
        return ok & (np.abs(upper[:, 0]) < 1)
    idx = np.nonzero(ok)[0]
    if idx.size:
        X = classd.antisym_from_upper(upper[idx], M)
        top = np.linalg.eigvalsh(-X @ X)[:, -1]
        ok[idx] = top < 1
    return ok


@dataclass
class DomainBlock:
    upper: np.ndarray  # kept proposals, independent entries
    u: np.ndarray  # one spare uniform per kept point
    n_proposed: int


def propose_block(M: int, seed: int, block: int, size: int, proposal: str = "box") -> DomainBlock:
    d = n_entries(M)
    rng = block_rng(seed, block)
    if proposal == "box":
        raw = rng.random((size, d + 1))
        upper = 2 * raw[:, :d] - 1
        u = raw[:, d]
    else:
        g = rng.standard_normal((size, d))
        r = rng.random(size) ** (1.0 / d)
        u = rng.random(size)
        upper = g * (math.sqrt(M) * r / np.linalg.norm(g, axis=1))[:, None]
    keep = in_domain(upper, M)
    return DomainBlock(upper=upper[keep], u=u[keep], n_proposed=size)


def _map_blocks(fn, M: int, cfg: MCConfig) -> list:
    """Apply fn(DomainBlock) to every block; results come back in block order."""
    sizes = _block_sizes(cfg.samples)

    def work(b):
        return fn(propose_block(M, cfg.seed, b, sizes[b], cfg.proposal))

    if cfg.workers == 1 or len(sizes) == 1:
        return [work(b) for b in range(len(sizes))]
    per_task = max(1, cfg.batch // BLOCK)
    with ThreadPoolExecutor(max_workers=cfg.workers) as ex:
        return list(ex.map(work, range(len(sizes)), chunksize=per_task))


def zetas_from_upper(upper: np.ndarray, M: int) -> np.ndarray:
    return classd.inverse_majorana_map(classd.antisym_from_upper(upper, M))


def sample_uniform_domain(M: int, cfg: MCConfig) -> tuple[np.ndarray, MCReport]:
    """Uniform domain points (as zeta stack) plus an acceptance report."""
    t0 = time.perf_counter()
    blocks = _map_blocks(lambda blk: (blk.upper, blk.n_proposed), M, cfg)
    upper = np.concatenate([b[0] for b in blocks])
    n_tot = sum(b[1] for b in blocks)
    rep = MCReport(
        estimate=upper.shape[0] / n_tot,
        stderr=math.sqrt(max(upper.shape[0] / n_tot * (1 - upper.shape[0] / n_tot), 0) / n_tot),
        n_total=n_tot,
        n_accepted=upper.shape[0],
        acceptance=upper.shape[0] / n_tot,
        seed=cfg.seed,
        elapsed=time.perf_counter() - t0,
        extra={"proposal": cfg.proposal},
    )
    return zetas_from_upper(upper, M), rep


def zscores(diff, se, atol: float = 1e-12) -> np.ndarray:
    """|diff| / se, with entries below atol (structural zeros, roundoff) set to 0."""
    diff = np.abs(np.asarray(diff))
    se = np.asarray(se, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(diff <= atol, 0.0, diff / se)
    return np.nan_to_num(z, nan=0.0, posinf=np.inf)


def _closed_form_extra(estimate: float, stderr: float, closed: float) -> dict:
    return {
        "closed_form": closed,
        "ratio": estimate / closed if closed else float("nan"),
        "z": (estimate - closed) / stderr if stderr > 0 else (0.0 if math.isclose(estimate, closed, rel_tol=1e-12) else float("inf")),
    }


def estimate_domain_volume(M: int, cfg: MCConfig) -> MCReport:
    if M > 4:
        raise ResourceLimitError("box acceptance is negligible beyond M = 4")
    t0 = time.perf_counter()
    counts = _map_blocks(lambda blk: (blk.upper.shape[0], blk.n_proposed), M, cfg)
    n_acc = sum(c[0] for c in counts)
    n_tot = sum(c[1] for c in counts)
    if n_acc == 0:
        raise InconclusiveRunError(f"no proposal landed in the M={M} domain out of {n_tot}")
    p = n_acc / n_tot
    vol = proposal_volume(M, cfg.proposal)
    est = p * vol
    se = vol * math.sqrt(p * (1 - p) / n_tot)
    closed = measures.constants(M).V_canon
    extra = {"proposal": cfg.proposal, "proposal_volume": vol}
    extra.update(_closed_form_extra(est, se, closed))
    return MCReport(est, se, n_tot, n_acc, p, cfg.seed, time.perf_counter() - t0, extra)


def _lambda_stack(upper: np.ndarray, M: int, ops) -> np.ndarray:
    return fock.lambda_via_polar_batch(zetas_from_upper(upper, M), ops)


def estimate_unity(M: int, cfg: MCConfig | None = None, quadrature: bool = False) -> MCReport:
    """max |2^M E_uniform[Lambda] - I| with per-entry standard errors.

    ``quadrature=True`` (M = 1 only) replaces Monte Carlo by exact
    Gauss-Legendre integration over the single eigenvalue.
    """
    t0 = time.perf_counter()
    if quadrature:
        if M != 1:
            raise MalformedInputError("the quadrature variant is single-mode only")
        dev = qfunction.single_mode_unity(0) - np.eye(2)
        return MCReport(float(np.max(np.abs(dev))), np.zeros((2, 2)), 0, 0, 1.0, 0,
                        time.perf_counter() - t0, {"method": "quadrature", "deviation": dev})
    if M > 3:
        raise ResourceLimitError("estimate_unity needs the Fock oracle; M <= 3")
    cfg = cfg or MCConfig()
    ops = fock.mode_operators(M)
    dim = 2**M

    def stats(blk):
        if blk.upper.shape[0] == 0:
            return RunningStats((2, dim * dim)), blk.n_proposed
        L = _lambda_stack(blk.upper, M, ops).reshape(-1, dim * dim) * dim
        return _complex_stats(L), blk.n_proposed

    out = _map_blocks(stats, M, cfg)
    acc = RunningStats((2, dim * dim))
    for st, _ in out:
        acc.merge(st)
    n_tot = sum(o[1] for o in out)
    if acc.n < 2:
        raise InconclusiveRunError(f"only {acc.n} domain points; increase samples")
    mean, se = _complex_mean_stderr(acc)
    dev = (mean - np.eye(dim).ravel()).reshape(dim, dim)
    se = se.reshape(dim, dim)
    z = zscores(dev, se)
    extra = {
        "proposal": cfg.proposal,
        "max_z": float(np.max(z)),
        "stderr_at_max": float(se.ravel()[np.argmax(np.abs(dev))]),
    }
    return MCReport(float(np.max(np.abs(dev))), se, n_tot, acc.n, acc.n / n_tot, cfg.seed,
                    time.perf_counter() - t0, extra)


# ------------------------------------------------------------- Q sampling


@dataclass
class QSamples:
    M: int
    upper: np.ndarray
    eigvals: np.ndarray
    q: np.ndarray
    weight: np.ndarray | None = None

    def zetas(self) -> np.ndarray:
        return zetas_from_upper(self.upper, self.M)

    def to_csv(self, handle=None) -> str:
        buf = handle or io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        iu = np.triu_indices(2 * self.M, 1)
        head = [f"X_{i + 1}_{j + 1}" for i, j in zip(*iu)] + [f"z_{j + 1}" for j in range(self.M)] + ["Q"]
        if self.weight is not None:
            head.append("weight")
        w.writerow(head)
        for r in range(self.upper.shape[0]):
            row = [repr(float(x)) for x in self.upper[r]] + [repr(float(x)) for x in self.eigvals[r]]
            row.append(repr(float(self.q[r])))
            if self.weight is not None:
                row.append(repr(float(self.weight[r])))
            w.writerow(row)
        return buf.getvalue() if handle is None else ""


def _components(state):
    if isinstance(state, qfunction.MixtureState):
        return state.components
    return ((1.0, state),)


def _accept_prob(state, zetas: np.ndarray, vals: np.ndarray, k: int) -> np.ndarray:
    """Q V_canon-relative acceptance F S, bounded by 1 since F, S <= 1."""
    F = sum(w * qfunction.inner_product_F_batch(s.zeta, zetas) for w, s in _components(state))
    return F * (qfunction.scaling_factor(vals, k) if k else 1.0)


def sample_q(state, scaling: qfunction.ScalingParams | None = None, cfg: MCConfig | None = None) -> tuple[QSamples, MCReport]:
    """Rejection sampling from Q on top of the uniform domain stream.

    Domain points are accepted with probability Q V_canon / 2^M = F S <= 1.
    With s != 0 each sample carries the weight exp(-s Tr zeta^2 / 4).
    """
    scaling = scaling or qfunction.ScalingParams()
    cfg = cfg or MCConfig()
    M = state.M
    t0 = time.perf_counter()
    N = measures.constants(M, scaling.k).N_canon

    def work(blk):
        if blk.upper.shape[0] == 0:
            e = np.zeros((0, n_entries(M)))
            return e, np.zeros((0, M)), np.zeros(0), blk.n_proposed, 0
        zetas = zetas_from_upper(blk.upper, M)
        _, vals = classd.polar_decompose_batch(zetas)
        a = _accept_prob(state, zetas, vals, scaling.k)
        keep = blk.u < a
        return blk.upper[keep], vals[keep], a[keep] / N, blk.n_proposed, blk.upper.shape[0]

    out = _map_blocks(work, M, cfg)
    upper = np.concatenate([o[0] for o in out])
    vals = np.concatenate([o[1] for o in out])
    q = np.concatenate([o[2] for o in out])
    n_prop = sum(o[3] for o in out)
    n_dom = sum(o[4] for o in out)
    weight = qfunction.s_weight(zetas_from_upper(upper, M), scaling.s) if scaling.s else None
    rep = MCReport(
        estimate=upper.shape[0] / n_dom if n_dom else 0.0,
        stderr=math.sqrt(upper.shape[0] / n_dom * (1 - upper.shape[0] / n_dom) / n_dom) if n_dom else float("inf"),
        n_total=n_dom,
        n_accepted=upper.shape[0],
        acceptance=upper.shape[0] / n_dom if n_dom else 0.0,
        seed=cfg.seed,
        elapsed=time.perf_counter() - t0,
        extra={"proposals": n_prop, "domain_acceptance": n_dom / n_prop, "k": scaling.k, "s": scaling.s,
               "proposal": cfg.proposal},
    )
    return QSamples(M, upper, vals, q, weight), rep


def exact_state_moments(state) -> np.ndarray:
    """<{a_hat a_hat^+}> of a Gaussian state or mixture from the Fock oracle."""
    out = 0
    for w, s in _components(state):
        rho = fock.lambda_via_polar(s.zeta)
        out = out + w * fock.exact_moments(rho).antinormal
    return out


def estimate_moments(state, scaling: qfunction.ScalingParams | None = None, cfg: MCConfig | None = None,
                     C: float | None = None) -> MCReport:
    """Antinormal Green's functions from the Q mean of zeta.

    <{a_hat a_hat^+}> = C_M Ibar E_Q[zeta] Ibar - Ibar / 2 with C_M = 2M - 1/2.
    The Ibar conjugation only flips the sign of the anomalous blocks; the
    unconjugated form is reported alongside as ``literal``. When the exact
    oracle is available (M <= 3) the report also carries a least-squares
    calibrated constant and the per-entry discrepancy in stderr units.
    """
    scaling = scaling or qfunction.ScalingParams()
    scaling.require_closed_form()
    if scaling.k:
        raise MalformedInputError("the moment formula is the k = 0 path")
    M = state.M
    C = measures.moment_constant(M) if C is None else C
    t0 = time.perf_counter()
    smp, qrep = sample_q(state, scaling, cfg)
    n = smp.upper.shape[0]
    if n < 2:
        raise InconclusiveRunError("fewer than two Q samples; increase samples")
    D = 2 * M
    Ib = classd.ibar(M)
    Z = smp.zetas().reshape(n, D * D)
    mean, se = _complex_mean_stderr(_complex_stats(Z))
    mean, se = mean.reshape(D, D), se.reshape(D, D)
    est = C * Ib @ mean @ Ib - 0.5 * Ib
    se_est = C * se
    extra = {
        "C_M": C,
        "mean_zeta": mean,
        "literal": C * mean - 0.5 * Ib,
        "proposals": qrep.extra["proposals"],
    }
    if M <= 3:
        exact = exact_state_moments(state)
        diff = est - exact
        z = zscores(diff, se_est)
        extra.update({"exact": exact, "discrepancy_z": z, "max_z": float(np.max(z))})
        x = (Ib @ mean @ Ib).ravel()
        y = (exact + 0.5 * Ib).ravel()
        # least squares y = C x with the noise power removed from |x|^2
        # (plain LS is biased toward zero when x itself is noisy)
        xx = float(np.vdot(x, x).real - np.sum(se**2))
        if xx > 4 * float(np.sqrt(np.sum(se**2))) * float(np.linalg.norm(x)) and xx > 1e-12:
            c_fit = float(np.vdot(x, y).real / xx)
            c_se = float(np.sqrt(np.sum(np.abs(y - 2 * c_fit * x) ** 2 * se.ravel() ** 2)) / xx)
            extra.update({"C_fit": c_fit, "C_fit_stderr": c_se})
    return MCReport(est, se_est, qrep.n_total, n, qrep.acceptance, qrep.seed, time.perf_counter() - t0, extra)


def estimate_q_integral(state, scaling: qfunction.ScalingParams | None = None, cfg: MCConfig | None = None) -> MCReport:
    """int Q dX as V_canon times the uniform-domain mean of Q.

    The domain volume enters as its closed form, so this checks the ratio
    N_canon(M, k) / V_canon and in particular the k > 0 normalisation.
    """
    scaling = scaling or qfunction.ScalingParams()
    scaling.require_closed_form()
    cfg = cfg or MCConfig()
    M = state.M
    t0 = time.perf_counter()
    V = measures.constants(M).V_canon
    N = measures.constants(M, scaling.k).N_canon

    def work(blk):
        if blk.upper.shape[0] == 0:
            return RunningStats(), blk.n_proposed
        zetas = zetas_from_upper(blk.upper, M)
        _, vals = classd.polar_decompose_batch(zetas)
        return RunningStats.of(V * _accept_prob(state, zetas, vals, scaling.k) / N), blk.n_proposed

    out = _map_blocks(work, M, cfg)
    acc = RunningStats()
    for st, _ in out:
        acc.merge(st)
    n_tot = sum(o[1] for o in out)
    if acc.n < 2:
        raise InconclusiveRunError("too few domain points")
    est, se = float(acc.mean), float(acc.stderr)
    extra = {"k": scaling.k, "proposal": cfg.proposal}
    extra.update(_closed_form_extra(est, se, 1.0))
    return MCReport(est, se, n_tot, acc.n, acc.n / n_tot, cfg.seed, time.perf_counter() - t0, extra)


def average_overlap_check(O, M: int, cfg: MCConfig | None = None) -> MCReport:
    """Compare 2^{-M} Tr O with the uniform-domain mean of Tr(O Lambda)."""
    if M > 3:
        raise ResourceLimitError("average_overlap_check needs the Fock oracle; M <= 3")
    O = np.asarray(O, dtype=complex)
    dim = 2**M
    if O.shape != (dim, dim):
        raise MalformedInputError(f"operator must be {dim}x{dim}")
    cfg = cfg or MCConfig()
    ops = fock.mode_operators(M)
    t0 = time.perf_counter()

    def work(blk):
        if blk.upper.shape[0] == 0:
            return RunningStats((2,)), blk.n_proposed
        L = _lambda_stack(blk.upper, M, ops)
        tr = np.einsum("ij,nji->n", O, L)
        return _complex_stats(tr), blk.n_proposed

    out = _map_blocks(work, M, cfg)
    acc = RunningStats((2,))
    for st, _ in out:
        acc.merge(st)
    n_tot = sum(o[1] for o in out)
    if acc.n < 2:
        raise InconclusiveRunError("too few domain points")
    est = acc.mean[0] + 1j * acc.mean[1]
    se = float(math.sqrt(acc.var[0] + acc.var[1]) / math.sqrt(acc.n))
    lhs = np.trace(O) / dim
    z = abs(est - lhs) / se if se > 0 else (0.0 if abs(est - lhs) < 1e-12 else float("inf"))
    return MCReport(est, se, n_tot, acc.n, acc.n / n_tot, cfg.seed, time.perf_counter() - t0,
                    {"exact": lhs, "z": z})
