"""Command-line interface.

Every command reads an optional JSON document (``--spec FILE``) whose keys
match the long option names; options given on the command line override it.
Nodes are numbered from 1 in all input and output.

Exit codes: 0 success, 2 validation error, 3 numerical failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from typing import Any, Sequence

from . import __version__
from .aloha_analytic import aloha_age, aloha_age_lower_bound, aloha_rates, foc_residual
from .core import AlohaConfig, AoiError, ChannelProfile, NumericalError, SfConfig, ValidationError
from .experiments import ExperimentSpec, _render, fmt, run_experiment, run_s_sweep
from .optimize import DEFAULT_MAX_ITER, DEFAULT_TOL, tau_approx, tau_exact_two, tau_multistart, tau_numeric
from .sf_analytic import sf_age, sf_moments_oracle, turn_success_prob
from .sim import SimConfig, replicate, simulate, write_trace
from .symmetric import symmetric_compare

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("aoimac")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message, "usage")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _params(args: argparse.Namespace, keys: Sequence[str]) -> dict[str, Any]:
    doc: dict[str, Any] = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValidationError("--spec must contain a JSON object", "bad_spec")
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            doc[k] = v
    return doc


def _need(params: dict, key: str):
    if params.get(key) is None:
        raise ValidationError(f"missing required parameter {key!r}", "missing")
    return params[key]


def _header(command: str, params: dict) -> list[str]:
    return [
        f"# tool: aoimac {__version__}",
        f"# command: {command}",
        f"# spec: {json.dumps(params, sort_keys=True, separators=(',', ':'))}",
    ]


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze_sf(args) -> str:
    params = _params(args, ["p", "S", "oracle"])
    profile = ChannelProfile(tuple(_need(params, "p")))
    cfg = SfConfig(profile, _need(params, "S"))
    b = sf_age(cfg)
    r = turn_success_prob(profile.array(), cfg.turn_cap)
    columns = ["node", "p", "r", "EZ", "EZ2", "age"]
    rows = []
    for i, (m, a) in enumerate(zip(b.moments, b.report.per_node)):
        row = [i + 1, profile.probs[i], float(r[i]), m.mean, m.second_moment, a]
        if params.get("oracle"):
            o = sf_moments_oracle(cfg, i)
            row += [o.moments.mean, o.moments.second_moment, o.second_error_bound]
        rows.append(row)
    if params.get("oracle"):
        columns += ["oracle_EZ", "oracle_EZ2", "oracle_EZ2_error_bound"]
    return _render(_header("analyze-sf", params), columns, rows, [f"network_age={fmt(b.report.network)}"])


def cmd_analyze_aloha(args) -> str:
    params = _params(args, ["p", "tau"])
    cfg = AlohaConfig(ChannelProfile(tuple(_need(params, "p"))), tuple(_need(params, "tau")))
    rates = aloha_rates(cfg)
    report = aloha_age(cfg)
    interior = all(0.0 < t < 1.0 for t in cfg.attempts)
    res = foc_residual(cfg).residuals if interior else [math.nan] * cfg.profile.M
    rows = [
        [i + 1, cfg.profile.probs[i], cfg.attempts[i], rates.gammas[i], report.per_node[i], float(res[i])]
        for i in range(cfg.profile.M)
    ]
    summary = [f"network_age={fmt(report.network)}"]
    if interior:
        d = aloha_age_lower_bound(cfg)
        summary += [f"foc_max_residual={fmt(foc_residual(cfg).max_norm)}", f"C={fmt(d.C)}",
                    f"C_prime={fmt(d.C_prime)}", f"age_lower_bound={fmt(d.age_lower_bound)}"]
    return _render(_header("analyze-aloha", params), ["node", "p", "tau", "gamma", "age", "foc_residual"], rows, summary)


def cmd_optimize_s(args) -> str:
    params = _params(args, ["p", "S_max"])
    spec = ExperimentSpec.from_dict({"kind": "s_sweep", "profile": _need(params, "p"), "S_max": _need(params, "S_max")})
    return run_s_sweep(spec).text


def cmd_optimize_tau(args) -> str:
    params = _params(args, ["p", "method", "tol", "max_iter", "multistart"])
    profile = ChannelProfile(tuple(_need(params, "p")))
    method = params.get("method") or "numeric"
    tol = float(params.get("tol") or DEFAULT_TOL)
    max_iter = int(params.get("max_iter") or DEFAULT_MAX_ITER)
    solutions = []
    summary = []
    if method in ("approx", "all"):
        solutions.append(tau_approx(profile))
    if method in ("exact2", "all") and (method == "exact2" or profile.M == 2):
        if profile.M != 2:
            raise ValidationError("the exact solution exists only for M = 2", "bad_M")
        solutions.append(tau_exact_two(*profile.probs))
    if method in ("numeric", "all"):
        if params.get("multistart"):
            a, b, gap = tau_multistart(profile, tol, max_iter)
            solutions += [a, b]
            summary.append(f"multistart_max_tau_gap={fmt(gap)}")
        else:
            solutions.append(tau_numeric(profile, tol, max_iter))
    if not solutions:
        raise ValidationError(f"unknown method {method!r}", "bad_method")
    rows = []
    for k, s in enumerate(solutions):
        for i, t in enumerate(s.taus):
            rows.append([k + 1, s.method, i + 1, profile.probs[i], t])
        summary.append(
            f"solution={k + 1} method={s.method} age={fmt(s.achieved_age)} "
            f"foc_max_residual={fmt(s.foc_max_residual)} iterations={s.iterations}"
        )
    return _render(_header("optimize-tau", params), ["solution", "method", "node", "p", "tau"], rows, summary)


def cmd_symmetric(args) -> str:
    params = _params(args, ["p"])
    profile = ChannelProfile(tuple(_need(params, "p")))
    rep = symmetric_compare(profile)
    rows = [[i + 1, p, t] for i, (p, t) in enumerate(zip(profile.probs, rep.taus))]
    summary = [
        f"age_sf={fmt(rep.age_sf)}", f"age_aloha={fmt(rep.age_aloha)}", f"beta_star={fmt(rep.beta_star)}",
        f"gamma_star={fmt(rep.gamma_star)}", f"L={fmt(rep.L)}", f"L_lower={fmt(rep.bounds[0])}",
        f"L_upper={fmt(rep.bounds[1])}", f"L_M={fmt(rep.L_M)}", f"R={fmt(rep.R)}", f"rho={fmt(rep.rho)}",
    ]
    return _render(_header("symmetric", params), ["node", "p", "tau"], rows, summary)


def cmd_simulate(args) -> str:
    params = _params(args, ["protocol", "p", "S", "tau", "horizon", "seed", "replications", "trace"])
    protocol = _need(params, "protocol")
    profile = ChannelProfile(tuple(_need(params, "p")))
    if protocol == "sf":
        proto = SfConfig(profile, _need(params, "S"))
    elif protocol == "aloha":
        proto = AlohaConfig(profile, tuple(_need(params, "tau")))
    else:
        raise ValidationError(f"protocol must be 'sf' or 'aloha', got {protocol!r}", "bad_protocol")
    seed = int(params.get("seed", 0))
    cfg = SimConfig(proto, int(_need(params, "horizon")), seed, record_turns=False)
    reps = int(params.get("replications") or 1)
    header = _header("simulate", params) + [f"# seed: {seed}"]
    if reps > 1:
        agg = replicate(cfg, reps, seed)
        rows = [[i + 1, agg.mean_inter_update[i], agg.se_inter_update[i], agg.mean_age[i], agg.se_age[i]]
                for i in range(profile.M)]
        return _render(header, ["node", "mean_Z", "se_mean_Z", "age", "se_age"], rows, [f"replications={reps}"])
    result = simulate(cfg)
    if params.get("trace"):
        with open(params["trace"], "w", encoding="utf-8", newline="\n") as fh:
            write_trace(result, fh)
    rows = [[i + 1, s.updates, s.mean_Z, s.se_mean_Z, s.second_Z, s.se_second_Z, s.age, s.se_age]
            for i, s in enumerate(result.stats)]
    cols = ["node", "updates", "mean_Z", "se_mean_Z", "second_Z", "se_second_Z", "age", "se_age"]
    return _render(header, cols, rows, [])


def cmd_experiment(args) -> str:
    doc: dict[str, Any] = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise ValidationError("--spec must contain a JSON object", "bad_spec")
    doc["kind"] = args.kind
    output = doc.pop("output_path", None) or doc.pop("output", None)
    if args.out is None and output:
        args.out = output
    for key in ("seed", "network_count", "M", "sample_count", "S_max", "p_low", "p_high"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    if args.p is not None:
        doc["profile"] = args.p
    if args.M_list is not None:
        doc["M_list"] = args.M_list
    spec = ExperimentSpec.from_dict(doc)
    return run_experiment(spec).text


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aoimac", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"aoimac {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--spec", metavar="FILE", help="JSON document with the command's parameters")
        sp.add_argument("--out", metavar="FILE", help="write CSV here instead of stdout")
        return sp

    sp = command("analyze-sf", cmd_analyze_sf, "per-node SF moments and ages")
    sp.add_argument("--p", type=_floats)
    sp.add_argument("--S", type=int)
    sp.add_argument("--oracle", action="store_true", default=None, help="also compose moments from the turn PMFs")

    sp = command("analyze-aloha", cmd_analyze_aloha, "per-node ALOHA success probabilities and ages")
    sp.add_argument("--p", type=_floats)
    sp.add_argument("--tau", type=_floats)

    sp = command("optimize-s", cmd_optimize_s, "sweep the SF turn cap")
    sp.add_argument("--p", type=_floats)
    sp.add_argument("--S-max", dest="S_max", type=int)

    sp = command("optimize-tau", cmd_optimize_tau, "age-minimizing ALOHA attempt probabilities")
    sp.add_argument("--p", type=_floats)
    sp.add_argument("--method", choices=["numeric", "approx", "exact2", "all"])
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-iter", dest="max_iter", type=int)
    sp.add_argument("--multistart", action="store_true", default=None,
                    help="solve from both the 1/sqrt(p) rule and 1/M and report the gap")

    sp = command("symmetric", cmd_symmetric, "symmetric SF vs ALOHA comparison")
    sp.add_argument("--p", type=_floats)

    sp = command("simulate", cmd_simulate, "Monte Carlo simulation of either protocol")
    sp.add_argument("--protocol", choices=["sf", "aloha"])
    sp.add_argument("--p", type=_floats)
    sp.add_argument("--S", type=int)
    sp.add_argument("--tau", type=_floats)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--trace", metavar="FILE", help="write one CSV row per update")

    sp = command("experiment", cmd_experiment, "regenerate figure data")
    sp.add_argument("kind", choices=["s-sweep", "scatter", "approx-cdf"])
    sp.add_argument("--seed", type=int)
    sp.add_argument("--p", type=_floats, help="profile for s-sweep")
    sp.add_argument("--S-max", dest="S_max", type=int)
    sp.add_argument("--network-count", dest="network_count", type=int)
    sp.add_argument("--M", type=int)
    sp.add_argument("--M-list", dest="M_list", type=_ints)
    sp.add_argument("--p-low", dest="p_low", type=float)
    sp.add_argument("--p-high", dest="p_high", type=float)
    sp.add_argument("--sample-count", dest="sample_count", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"aoimac: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.func(args)
        _emit(args, text)
    except ValidationError as exc:
        print(f"aoimac: invalid input ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, AoiError) as exc:
        print(f"aoimac: numerical failure ({exc.code}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except json.JSONDecodeError as exc:
        print(f"aoimac: invalid JSON in --spec: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"aoimac: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK
