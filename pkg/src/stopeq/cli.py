"""Command-line entry point: ``stopeq <command> --config problem.json [--out DIR]``.

Every command prints a short summary to stdout.  With ``--out`` it also
writes ``report.json`` and the command's CSV tables.  Exit codes: 0 on
success, 2 on invalid input, 3 when the solver fails or finds no answer.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from stopeq import __version__
from stopeq.config import load_config
from stopeq.discounting import check_DI, check_strict_DI
from stopeq.equilibrium import (
    DEFAULT_MAX_ITER,
    Method,
    enumerate_equilibria,
    is_equilibrium,
    iterate_to_fixpoint,
    optimal_equilibrium,
    theta_report,
)
from stopeq.errors import (
    ConfigParseError,
    EmptyEquilibriumFamily,
    SolverError,
    ValidationError,
)
from stopeq.evaluate import Region, continuation_value
from stopeq.finite_horizon import TimedRegion, backward_induction, iterate_finite
from stopeq.markov import Boundary
from stopeq.realopt import RealOptionParams, cross_validate, thresholds

log = logging.getLogger("stopeq")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
COMMANDS = ("di-check", "evaluate", "theta", "iterate", "verify", "enumerate", "optimal",
            "finite-horizon", "realopt")


class _Run:
    """Accumulates one command's results, CSV tables and summary text."""

    def __init__(self, command, args):
        self.command = command
        self.args = args
        self.config = None
        self.results = {}
        self.diagnostics = {}
        self.tables = {}
        self.lines = []

    def say(self, line=""):
        self.lines.append(line)

    def report(self, elapsed):
        flags = {k: v for k, v in sorted(vars(self.args).items())
                 if k not in ("command", "config", "out", "verbose") and v is not None}
        return {
            "command": self.command,
            "inputs": {"config": self.config.to_dict() if self.config else None, "flags": flags},
            "results": self.results,
            "diagnostics": {**self.diagnostics, "timing_seconds": round(elapsed, 6)},
        }


# -- helpers -------------------------------------------------------------------

def _fmt_region(labels):
    return " ".join(str(x) for x in labels)


def _braces(labels):
    return "{" + ", ".join(str(x) for x in labels) + "}"


def _parse_labels(text):
    text = text.strip()
    if not text:
        return []
    return [tok for tok in text.replace(",", " ").split() if tok]


def _region_arg(problem, text, flag):
    try:
        return problem.region(_parse_labels(text))
    except ValidationError as exc:
        raise ValidationError(f"{flag}: {exc}") from None


def _values_table(problem, report):
    rows = [["label", "f", "J", "V", "tail_bound"]]
    for label, f, J, V, tb in report.rows(problem):
        rows.append([label, _num(f), _num(J), _num(V), _num(tb)])
    return rows


def _num(x):
    return repr(float(x))


def _cell(x):
    if isinstance(x, bool):
        return str(x).lower()
    return _num(x) if isinstance(x, float) else x


def _value_results(problem, report):
    return [{"label": lab, "f": float(f), "J": float(J), "V": float(V), "tail_bound": float(tb)}
            for lab, f, J, V, tb in report.rows(problem)]


def _value_diag(report):
    return {"horizon_used": int(report.horizon_used),
            "max_tail_bound": float(report.tail_bound.max(initial=0.0))}


def _say_values(run, problem, report):
    run.say(f"{'state':>10} {'f':>14} {'J':>14} {'V':>14}")
    for label, f, J, V, _ in report.rows(problem):
        run.say(f"{str(label):>10} {f:14.10g} {J:14.10g} {V:14.10g}")


def _problem(run, args):
    if not args.config:
        raise ValidationError(f"{run.command} needs --config")
    cfg = load_config(args.config)
    if args.tol is not None or args.tie_tol is not None:
        cfg = type(cfg).from_dict({**cfg.to_dict(),
                                   **({"tol": args.tol} if args.tol is not None else {}),
                                   **({"tie_tol": args.tie_tol} if args.tie_tol is not None else {})})
    run.config = cfg
    return cfg, cfg.problem()


def _max_iter(args):
    return DEFAULT_MAX_ITER if args.max_iter is None else args.max_iter


# -- commands ------------------------------------------------------------------

def cmd_di_check(run, args):
    cfg, problem = _problem(run, args)
    H = args.horizon or 200
    di = check_DI(problem.discount, H)
    strict = check_strict_DI(problem.discount, H)
    weak = check_strict_DI(problem.discount, H, strict=False)
    run.results = {"DI": di.to_dict(), "strict_DI": strict.to_dict(),
                   "nondecreasing_ratios": weak.to_dict()}
    run.say(f"log-subadditivity on horizon {H}: {'holds' if di.holds else 'fails'}"
            + (f" (first violation at {di.first_violation})" if not di.holds else ""))
    run.say(f"strictly increasing discount ratios: {'holds' if strict.holds else 'fails'}"
            + (f" (first violation at {strict.first_violation})" if not strict.holds else ""))


def cmd_evaluate(run, args):
    cfg, problem = _problem(run, args)
    if args.region is None:
        raise ValidationError("evaluate needs --region")
    region = _region_arg(problem, args.region, "--region")
    report = continuation_value(problem, region, tol=cfg.tol)
    run.results = {"region": problem.labels_of(region), "values": _value_results(problem, report)}
    run.diagnostics = _value_diag(report)
    run.tables["values.csv"] = _values_table(problem, report)
    run.say(f"region {_braces(problem.labels_of(region))}")
    _say_values(run, problem, report)


def cmd_theta(run, args):
    cfg, problem = _problem(run, args)
    if args.region is None:
        raise ValidationError("theta needs --region")
    region = _region_arg(problem, args.region, "--region")
    image, report = theta_report(problem, region, cfg.tol, cfg.tie_tol)
    run.results = {"region": problem.labels_of(region), "theta": problem.labels_of(image),
                   "values": _value_results(problem, report)}
    run.diagnostics = _value_diag(report)
    run.tables["values.csv"] = _values_table(problem, report)
    run.say(f"theta({_braces(problem.labels_of(region))}) = {_braces(problem.labels_of(image))}")
    _say_values(run, problem, report)


def cmd_iterate(run, args):
    cfg, problem = _problem(run, args)
    seed = (_region_arg(problem, args.seed_region, "--seed-region")
            if args.seed_region is not None else Region.full(problem.n))
    trace = iterate_to_fixpoint(problem, seed, cfg.tol, cfg.tie_tol, _max_iter(args))
    run.results = trace.to_dict(problem)
    run.diagnostics = {"horizons": [int(r.horizon_used) for _, r in trace.steps],
                       "max_tail_bound": max(float(r.tail_bound.max(initial=0.0))
                                             for _, r in trace.steps)}
    run.tables["trace.csv"] = [["iter", "region"]] + [
        [k, _fmt_region(problem.labels_of(r))] for k, r in enumerate(trace.regions)]
    run.say(f"seed {_braces(problem.labels_of(seed))}; "
            f"theta(seed) within seed: {trace.precondition_held}")
    for k, r in enumerate(trace.regions):
        run.say(f"  step {k}: {_braces(problem.labels_of(r))}")
    if trace.converged:
        final = trace.steps[-1][1]
        run.tables["values.csv"] = _values_table(problem, final)
        run.say(f"fixed point {_braces(problem.labels_of(trace.S_infinity))} "
                f"reached at step {trace.fixed_at}")
    else:
        cyc = " -> ".join(_braces(problem.labels_of(r)) for r in trace.cycle)
        run.say(f"no fixed point from this seed; cycle {cyc}")
        log.warning("iteration entered a cycle without reaching an equilibrium")


def cmd_verify(run, args):
    cfg, problem = _problem(run, args)
    if args.region is None:
        raise ValidationError("verify needs --region")
    region = _region_arg(problem, args.region, "--region")
    cert = is_equilibrium(problem, region, cfg.tol, cfg.tie_tol)
    run.results = cert.to_dict(problem)
    run.diagnostics = _value_diag(cert.report)
    run.tables["values.csv"] = _values_table(problem, cert.report)
    verdict = "is" if cert.is_equilibrium else "is NOT"
    run.say(f"{_braces(problem.labels_of(region))} {verdict} an equilibrium "
            f"(theta gives {_braces(problem.labels_of(cert.theta_region))})")
    for s in cert.states:
        run.say(f"  {str(s.label):>10}  f-J = {s.margin:+.10g}  {'stop' if s.stop else 'continue'}")


def _equilibria_table(problem, certs, optimal):
    rows = [["id", "region", "is_optimal"]]
    for k, c in enumerate(certs):
        rows.append([k, _fmt_region(problem.labels_of(c.region)),
                     str(optimal is not None and c.region == optimal).lower()])
    return rows


def cmd_enumerate(run, args):
    cfg, problem = _problem(run, args)
    certs = enumerate_equilibria(problem, cfg.tol, cfg.tie_tol)
    optimal = None
    if certs:
        inter = Region.full(problem.n)
        for c in certs:
            inter = inter & c.region
        if any(c.region == inter for c in certs):
            optimal = inter
    run.results = {"equilibria": [problem.labels_of(c.region) for c in certs],
                   "optimal": problem.labels_of(optimal) if optimal is not None else None}
    run.tables["equilibria.csv"] = _equilibria_table(problem, certs, optimal)
    if not certs:
        log.warning("no equilibrium exists")
        run.say("no equilibrium exists")
        return
    run.say(f"{len(certs)} equilibri{'um' if len(certs) == 1 else 'a'}:")
    for c in certs:
        mark = "  (optimal)" if c.region == optimal else ""
        run.say(f"  {_braces(problem.labels_of(c.region))}{mark}")


def cmd_optimal(run, args):
    cfg, problem = _problem(run, args)
    seeds = None
    if args.seed_region is not None:
        seeds = [_region_arg(problem, args.seed_region, "--seed-region")]
    res = optimal_equilibrium(problem, cfg.tol, cfg.tie_tol, method=args.method or Method.ENUMERATE_INTERSECT,
                              seeds=seeds, max_iter=_max_iter(args))
    run.results = res.to_dict(problem)
    run.diagnostics = _value_diag(res.certificate.report)
    run.tables["equilibria.csv"] = _equilibria_table(problem, res.equilibria, res.region)
    run.tables["values.csv"] = _values_table(problem, res.certificate.report)
    run.say(f"optimal equilibrium {_braces(problem.labels_of(res.region))} "
            f"({res.method.value}, {'exhaustive' if res.exhaustive else 'from seeds only'})")
    _say_values(run, problem, res.certificate.report)


def cmd_finite_horizon(run, args):
    cfg, problem = _problem(run, args)
    if not args.horizon:
        raise ValidationError("finite-horizon needs --horizon N")
    N = args.horizon
    seed = None
    if args.seed_region is not None:
        seed = TimedRegion.constant(_region_arg(problem, args.seed_region, "--seed-region"), N)
    it = iterate_finite(problem, N, seed, args.max_iter, cfg.tie_tol)
    bw = backward_induction(problem, N, cfg.tie_tol)
    agree = it.region == bw.region
    run.results = {"N": N, "sections": it.region.to_list(problem),
                   "backward_sections": bw.region.to_list(problem),
                   "iterations": it.iterations, "agrees_with_backward_induction": agree}
    run.tables["sections.csv"] = [["t", "region"]] + [
        [t, _fmt_region(problem.labels_of(s))] for t, s in enumerate(it.region.sections)]
    run.tables["trace.csv"] = [["iter", "t", "region"]] + [
        [k, t, _fmt_region(problem.labels_of(s))]
        for k, tr in enumerate(it.trace) for t, s in enumerate(tr.sections)]
    run.say(f"N = {N}: fixed point after {it.iterations} iteration(s); "
            f"backward induction {'agrees' if agree else 'DISAGREES'}")
    for t, s in enumerate(it.region.sections):
        run.say(f"  t={t}: {_braces(problem.labels_of(s))}")
    if not agree:
        raise SolverError("time-extended iteration and backward induction disagree")


def cmd_realopt(run, args):
    missing = [f"--{k}" for k in ("u", "p", "beta", "K") if getattr(args, k) is None]
    if missing:
        raise ValidationError(f"realopt needs {' '.join(missing)}")
    params = RealOptionParams(args.u, args.p, args.beta, args.K)
    try:
        rep = thresholds(params)
        empty = False
    except EmptyEquilibriumFamily as exc:
        rep, empty = exc.report, True
    run.results = {"thresholds": rep.to_dict()}
    run.say(f"alpha1 = {rep.alpha1:.10f}, alpha' = {rep.alpha_prime:.10f}")
    run.say(f"L = {rep.L:.7f}, U = {rep.U:.7f}")
    if empty:
        run.say("no lattice point in (L K, U K]")
    else:
        ys = ", ".join(f"{y:.6g}" for y in rep.equilibrium_thresholds)
        run.say(f"equilibrium thresholds y: {ys}; optimal y* = {rep.y_star:.6g}")
    if not args.skip_lattice:
        window = args.window or 12
        tol = args.tol if args.tol is not None else 1e-10
        cv = cross_validate(params, window=window, tol=tol,
                            boundary=Boundary(args.boundary))
        run.results["cross_validation"] = cv.to_dict()
        keys = ["exponent", "y", "closed_form_equilibrium", "lattice_equilibrium",
                "J_at_y_lattice", "J_at_y_closed_form", "margin_at_y"]
        run.tables["cross_validation.csv"] = [keys] + [
            [_cell(r[k]) for k in keys] for r in cv.rows]
        run.say(f"lattice solver (window {window}, {cv.boundary.value}): "
                f"{'agrees' if cv.agrees else 'DISAGREES'} with the closed form")
        if not cv.agrees:
            raise SolverError("lattice solver disagrees with the closed-form thresholds")
    if empty:
        raise EmptyEquilibriumFamily("no lattice point in (L K, U K]", report=rep)


_DISPATCH = {
    "di-check": cmd_di_check, "evaluate": cmd_evaluate, "theta": cmd_theta,
    "iterate": cmd_iterate, "verify": cmd_verify, "enumerate": cmd_enumerate,
    "optimal": cmd_optimal, "finite-horizon": cmd_finite_horizon, "realopt": cmd_realopt,
}


# -- plumbing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stopeq", description=(
        "Equilibrium stopping regions for Markov stopping problems with non-exponential "
        "discounting."))
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="problem config (JSON)")
    ap.add_argument("--out", help="directory for report.json and CSV tables")
    ap.add_argument("--tol", type=float, help="truncation tolerance for continuation values")
    ap.add_argument("--tie-tol", type=float, help="slack in the stop test f >= J - tie_tol")
    ap.add_argument("--max-iter", type=int)
    ap.add_argument("--region", help="state labels, comma or space separated")
    ap.add_argument("--seed-region", help="state labels of the iteration seed")
    ap.add_argument("--method", choices=[m.value for m in Method])
    ap.add_argument("--horizon", type=int,
                    help="N for finite-horizon; check horizon for di-check (default 200)")
    ap.add_argument("--window", type=int, help="lattice half-width for realopt (default 12)")
    ap.add_argument("--u", type=float)
    ap.add_argument("--p", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--K", type=float)
    ap.add_argument("--boundary", choices=[b.value for b in Boundary], default=Boundary.REFLECT.value)
    ap.add_argument("--skip-lattice", action="store_true",
                    help="realopt: closed form only, no lattice cross-validation")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _write_outputs(out, run, report):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for name, rows in run.tables.items():
        with open(out / name, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    job = _Run(args.command, args)
    start = time.perf_counter()
    code = EXIT_OK
    try:
        _DISPATCH[args.command](job, args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        code = EXIT_INVALID
    except SolverError as exc:
        print(f"solver error ({type(exc).__name__}): {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    if job.lines:
        print("\n".join(job.lines))
    if args.out and (code == EXIT_OK or job.results):
        job.diagnostics["exit_code"] = code
        _write_outputs(args.out, job, job.report(time.perf_counter() - start))
    return code


def main():  # pragma: no cover - console script
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
