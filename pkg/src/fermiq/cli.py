"""Command-line front end: ``fermiq <subcommand> [flags]``.

Exit codes: 0 success, 2 invalid input, 3 a numerical check failed.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys

import numpy as np

from . import classd, fock, measures, qfunction, sampler
from .exceptions import (
    ConditioningError,
    DomainError,
    FermiqError,
    InconclusiveRunError,
    MalformedInputError,
    ResourceLimitError,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _positive_int(name):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"--{name} expects an integer, got {text!r}")
        if v < 1:
            raise argparse.ArgumentTypeError(f"--{name} must be >= 1, got {v}")
        return v
    return conv


def _nonneg_int(name):
    def conv(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"--{name} expects an integer, got {text!r}")
        if v < 0:
            raise argparse.ArgumentTypeError(f"--{name} must be >= 0, got {v}")
        return v
    return conv


def _default_workers() -> int:
    raw = os.environ.get("FERMIQ_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fermiq", description="Fermionic Gaussian Q-function toolkit")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp, mc=False):
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--no-timestamp", action="store_true", help="omit timestamp and wall times")
        if mc:
            sp.add_argument("--samples", type=_positive_int("samples"), default=100_000)
            sp.add_argument("--seed", type=_nonneg_int("seed"), default=0)
            sp.add_argument("--workers", type=_positive_int("workers"), default=_default_workers())
            sp.add_argument("--batch", type=_positive_int("batch"), default=4 * sampler.BLOCK)
            sp.add_argument("--proposal", choices=sampler.PROPOSALS, default="box")
            sp.add_argument("--max-z", type=float, default=5.0, help="stderr threshold for exit code 3")

    sp = sub.add_parser("constants", help="closed-form measure constants")
    sp.add_argument("--m", type=_positive_int("m"), required=True)
    sp.add_argument("--k", type=_nonneg_int("k"), default=0)
    common(sp)

    sp = sub.add_parser("mc-volume", help="Monte-Carlo domain volume")
    sp.add_argument("--m", type=_positive_int("m"), required=True)
    common(sp, mc=True)

    sp = sub.add_parser("mc-unity", help="Monte-Carlo resolution of unity")
    sp.add_argument("--m", type=_positive_int("m"), required=True)
    sp.add_argument("--quadrature", action="store_true", help="exact single-mode variant")
    common(sp, mc=True)

    sp = sub.add_parser("qeval", help="evaluate Q at one point")
    sp.add_argument("--state", required=True)
    sp.add_argument("--point", required=True, help="matrix JSON {M, re, im} of zeta")
    sp.add_argument("--k", type=_nonneg_int("k"), default=0)
    sp.add_argument("--s", type=float, default=0.0)
    common(sp)

    sp = sub.add_parser("sample", help="rejection-sample Q")
    sp.add_argument("--state", required=True)
    sp.add_argument("--k", type=_nonneg_int("k"), default=0)
    sp.add_argument("--s", type=float, default=0.0)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    common(sp, mc=True)

    sp = sub.add_parser("moments", help="antinormal moments from Q samples")
    sp.add_argument("--state", required=True)
    common(sp, mc=True)

    sp = sub.add_parser("oracle-check", help="Fock-space identity suite")
    sp.add_argument("--m", type=_positive_int("m"), required=True)
    sp.add_argument("--trials", type=_positive_int("trials"), default=5)
    sp.add_argument("--seed", type=_nonneg_int("seed"), default=0)
    sp.add_argument("--h", type=float, default=1e-5)
    common(sp)
    return p


# ---------------------------------------------------------------- commands


def _mc_config(a) -> sampler.MCConfig:
    return sampler.MCConfig(samples=a.samples, seed=a.seed, workers=a.workers, batch=a.batch, proposal=a.proposal)


def _report(rep: sampler.MCReport, keep_time: bool) -> dict:
    d = rep.to_dict()
    if not keep_time:
        d.pop("elapsed", None)
    return d


def _gate(failures: list, value: float, limit: float, what: str):
    if not value <= limit:
        failures.append(f"{what} = {value:.4g} exceeds {limit:.4g}")


def cmd_constants(a) -> dict:
    c = measures.constants(a.m, a.k)
    out = c.to_dict()
    lhs = c.logN_riem + a.m * math.log(2) - c.logC_R
    checks = {
        "N_riem_2M_over_C_R": {"value": math.exp(lhs), "closed_form": math.exp(c.logI_zeta),
                               "ratio": math.exp(lhs - c.logI_zeta)},
    }
    if a.k == 0:
        checks["V_canon_over_2M_vs_N_canon"] = {
            "value": c.V_canon / 2**a.m, "closed_form": c.N_canon, "ratio": c.V_canon / 2**a.m / c.N_canon,
        }
    out["checks"] = checks
    for name, chk in checks.items():
        _gate(a.failures, abs(chk["ratio"] - 1), 1e-12, name)
    return out


def cmd_mc_volume(a) -> dict:
    rep = sampler.estimate_domain_volume(a.m, _mc_config(a))
    out = _report(rep, not a.no_timestamp)
    _gate(a.failures, abs(rep.extra["z"]), a.max_z, "volume |z|")
    return out


def cmd_mc_unity(a) -> dict:
    if a.quadrature:
        rep = sampler.estimate_unity(a.m, quadrature=True)
        out = _report(rep, not a.no_timestamp)
        _gate(a.failures, rep.estimate, 1e-12, "quadrature deviation")
        return out
    rep = sampler.estimate_unity(a.m, _mc_config(a))
    out = _report(rep, not a.no_timestamp)
    _gate(a.failures, rep.extra["max_z"], a.max_z, "unity max |z|")
    return out


def cmd_qeval(a) -> dict:
    state = qfunction.load_state(a.state)
    try:
        with open(a.point) as fh:
            point = qfunction.matrix_from_json(json.load(fh))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedInputError(f"--point: cannot read {a.point}: {exc}") from exc
    scaling = qfunction.ScalingParams(a.k, a.s)
    Q = qfunction.q_density(state, point, scaling)
    out = {"Q": Q, "V_canon": measures.constants(state.M).V_canon,
           "N_canon": measures.constants(state.M, a.k).N_canon}
    if isinstance(state, qfunction.GaussianState):
        out["F"] = qfunction.inner_product_F(state.zeta, point)
    return out


def cmd_sample(a):
    state = qfunction.load_state(a.state)
    smp, rep = sampler.sample_q(state, qfunction.ScalingParams(a.k, a.s), _mc_config(a))
    out = _report(rep, not a.no_timestamp)
    if a.format == "csv":
        # the stream goes to --out/stdout; the run report travels alongside
        a.sidecar = out
        return smp.to_csv()
    out["samples"] = {"upper": smp.upper, "eigvals": smp.eigvals, "Q": smp.q}
    if smp.weight is not None:
        out["samples"]["weight"] = smp.weight
    return sampler.to_jsonable(out)


def cmd_moments(a) -> dict:
    state = qfunction.load_state(a.state)
    rep = sampler.estimate_moments(state, cfg=_mc_config(a))
    out = _report(rep, not a.no_timestamp)
    M = state.M
    est = np.real(np.diag(rep.estimate))[:M]
    ex = np.real(np.diag(rep.extra["exact"]))[:M]
    # <2 a_i a_i^+ - 1>, the off-centre coordinate of each mode
    off = {"estimate": 2 * est - 1, "exact": 2 * ex - 1}
    with np.errstate(divide="ignore", invalid="ignore"):
        off["ratio"] = np.where(off["exact"] != 0, off["estimate"] / off["exact"], np.nan)
    out["offset"] = sampler.to_jsonable(off)
    _gate(a.failures, rep.extra["max_z"], a.max_z, "moments max |z|")
    return out


def cmd_oracle_check(a) -> dict:
    if a.m > 3:
        raise ResourceLimitError("oracle-check supports M <= 3")
    rng = np.random.default_rng(a.seed)
    res = {"inner_product": 0.0, "trace": 0.0, "min_eig": 0.0, "moments_sigma": 0.0}
    if a.m <= 2:
        res.update({"dual_route": 0.0, "identity_1": 0.0, "identity_2": 0.0, "identity_3": 0.0, "identity_4": 0.0})
    for _ in range(a.trials):
        z = classd.random_domain_point(a.m, rng, 0.9)
        z2 = classd.random_domain_point(a.m, rng, 0.9)
        L, L2 = fock.lambda_via_polar(z), fock.lambda_via_polar(z2)
        res["inner_product"] = max(res["inner_product"],
                                   abs(fock.hs_inner(L, L2) - qfunction.inner_product_F(z, z2)))
        res["trace"] = max(res["trace"], abs(np.trace(L) - 1))
        res["min_eig"] = min(res["min_eig"], float(np.linalg.eigvalsh(L)[0]))
        s = classd.sigma_from_zeta(z)
        res["moments_sigma"] = max(res["moments_sigma"], float(np.max(np.abs(fock.exact_moments(L).sigma - s))))
        if a.m <= 2:
            res["dual_route"] = max(res["dual_route"], float(np.max(np.abs(fock.lambda_from_sigma(s) - L))))
            for w in (1, 2, 3, 4):
                key = f"identity_{w}"
                res[key] = max(res[key], fock.check_diff_identity(s, w, a.h))
    limits = {"inner_product": 1e-10, "trace": 1e-12, "moments_sigma": 1e-10, "dual_route": 1e-10,
              "identity_1": 1e-5, "identity_2": 1e-5, "identity_3": 1e-5, "identity_4": 1e-5}
    out = {"M": a.m, "trials": a.trials, "residuals": res, "limits": limits}
    for key, lim in limits.items():
        if key in res:
            _gate(a.failures, float(res[key]), lim, key)
    _gate(a.failures, -res["min_eig"], 1e-12, "negative eigenvalue")
    return out


COMMANDS = {
    "constants": cmd_constants,
    "mc-volume": cmd_mc_volume,
    "mc-unity": cmd_mc_unity,
    "qeval": cmd_qeval,
    "sample": cmd_sample,
    "moments": cmd_moments,
    "oracle-check": cmd_oracle_check,
}


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:2] == ["oracle", "check"]:
        argv = ["oracle-check"] + argv[2:]
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    config = {k: v for k, v in vars(a).items() if k not in ("out", "no_timestamp")}
    a.failures = []
    try:
        payload = COMMANDS[a.cmd](a)
    except (InconclusiveRunError, ConditioningError) as exc:
        print(f"fermiq {a.cmd}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MalformedInputError, DomainError, ResourceLimitError) as exc:
        print(f"fermiq {a.cmd}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FermiqError as exc:
        print(f"fermiq {a.cmd}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    status = EXIT_OK
    for msg in a.failures:
        print(f"fermiq {a.cmd}: numerical check failed: {msg}", file=sys.stderr)
        status = EXIT_NUMERIC
    if isinstance(payload, str):
        _emit(payload, a.out)
        side = {"command": a.cmd, "config": config, "result": getattr(a, "sidecar", None), "failures": a.failures}
        side_text = json.dumps(sampler.to_jsonable(side), indent=2, sort_keys=True) + "\n"
        if a.out:
            _emit(side_text, a.out + ".report.json")
        else:
            sys.stderr.write(side_text)
        return status
    doc = {"command": a.cmd, "config": config, "result": sampler.to_jsonable(payload), "failures": a.failures}
    if not a.no_timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", a.out)
    return status


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
