"""Command-line entry point. Exit codes: 0 success, 1 failed check, 2 usage error."""
import argparse
import dataclasses
import os
import sys

import numpy as np

from ..diagnostics import covariance_identity_audit
from ..errors import AuditFailed, ConfigError, EnkfLabError
from ..filters import KINDS
from . import audits
from .config import load_config
from .plotdata import emit_plot_data
from .runner import estimate_observable_criterion, run_scenario, write_json

OUT_ENV = "ENKFLAB_OUT"
DEFAULT_AUDIT_SEED = 20240601


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _out_dir(args):
    return args.out or os.environ.get(OUT_ENV) or None


def _load(args, mode=None):
    cfg = load_config(args.config, seed=args.seed, output_dir=_out_dir(args))
    if mode is not None and cfg.mode != mode:
        cfg = dataclasses.replace(cfg, mode=mode)
    return cfg


def _fmt_matrix(A):
    return np.array2string(np.asarray(A), precision=6, suppress_small=True)


# -- subcommands --------------------------------------------------------------

def _report_scenario(result):
    s = result.summary
    if s["mode"] == "memory-loss":
        print(f"{result.name}: median gamma={s['median_gamma']} median R2={s['median_r_squared']}")
    else:
        print(f"{result.name}: diverged {s['diverged_count']}/{len(s['replicates'])}, "
              f"worst contraction margin={s['worst_contraction_margin']}")
        for r in s["replicates"]:
            if "ceiling" in r:
                print(f"  replicate {r['replicate']}: tail mean={r['tail_mean']:.6g} ceiling={r['ceiling']:.6g}")
    print(f"{'PASS' if result.passed else 'FAIL'} {result.name}")
    return 0 if result.passed else 1


def cmd_run(args, mode=None):
    cfg = _load(args, mode)
    return _report_scenario(run_scenario(cfg, jobs=args.jobs))


def cmd_estimate(args):
    cfg = _load(args)
    model = cfg.build_model()
    op = cfg.build_observation(model.dim)
    est = estimate_observable_criterion(cfg, model, op)
    info = est.as_dict()
    print(f"beta={est.beta:.6g} +/- {est.beta_halfwidth:.3g}  K={est.K:.6g} +/- {est.K_halfwidth:.3g}  "
          f"admissible={est.admissible}")
    write_json(os.path.join(cfg.output_dir, cfg.name, "criterion.json"), info)
    return 0


def cmd_covariance_audit(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else DEFAULT_AUDIT_SEED)
    res = covariance_identity_audit(args.filter, args.count, rng, draws=args.draws)
    print(f"{res.kind}: max residual={res.max_residual:.3e} threshold={res.threshold:.3e} "
          f"over {res.count} {'draws' if res.kind == 'enkf' else 'instances'}")
    print("PASS" if res.passed else "FAIL")
    return 0 if res.passed else 1


def cmd_perturbation_audit(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else DEFAULT_AUDIT_SEED)
    rep = audits.perturbation_audit(args.count, rng)
    for q, e in rep.max_error.items():
        print(f"{q}: max error={e:.3e} slope={rep.slopes[q]:.4f}")
    print("PASS" if rep.passed else "FAIL")
    return 0 if rep.passed else 1


def cmd_basis_demo(args):
    r = audits.rank_deficient_basis_demo()
    print("forecast spread:\n" + _fmt_matrix(r["spread"]))
    print("rank-aware posterior spread:\n" + _fmt_matrix(r["correct"]))
    print(f"covariance residual: {r['correct_residual']:.3e}")
    print("posterior spread with basis G = R^T:\n" + _fmt_matrix(r["wrong"]))
    print(f"covariance residual: {r['wrong_residual']:.3e} (covariance scaled by {r['wrong_ratio']:.6g})")
    return 0


def cmd_jacobian(args):
    rng = np.random.default_rng(args.seed if args.seed is not None else DEFAULT_AUDIT_SEED)
    rep = audits.eakf_jacobian_audit(args.d, args.K, args.q, floor=args.floor, offset=args.offset, rng=rng)
    print(f"d={rep.d} K={rep.K} q={rep.q} offset={rep.offset}: smallest singular value={rep.min_singular:.6e}")
    print("PASS" if rep.passed else "FAIL")
    if args.offset:
        return 0
    return 0 if rep.passed else 1


def cmd_plot(args):
    target = args.results or _out_dir(args) or "results"
    for p in emit_plot_data(target):
        print(p)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="enkflab", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=None, help="master seed override")
    common.add_argument("--out", default=None, help=f"output directory (also ${OUT_ENV})")
    common.add_argument("--jobs", type=_positive, default=1, help="worker processes for replicates")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("run-filter", "run a scenario in its configured mode"),
                           ("boundedness", "run a scenario as a boundedness experiment"),
                           ("memory-loss", "run a scenario as a coupled memory-loss experiment"),
                           ("estimate-criterion", "estimate the observable energy criterion")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", required=True)

    p = sub.add_parser("covariance-audit", parents=[common], help="posterior covariance identity audit")
    p.add_argument("--count", type=_positive, default=1000)
    p.add_argument("--filter", choices=KINDS, default="eakf")
    p.add_argument("--draws", type=_positive, default=10_000)

    p = sub.add_parser("perturbation-audit", parents=[common], help="eigenstructure derivative audit")
    p.add_argument("--count", type=_positive, default=100)

    sub.add_parser("appendix-c-demo", parents=[common], help="rank-deficient EAKF basis demonstration")

    p = sub.add_parser("eakf-jacobian-audit", parents=[common], help="EAKF Jacobian at the M0 point")
    p.add_argument("--d", type=_positive, default=2)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--q", type=_positive, default=2)
    p.add_argument("--floor", type=float, default=audits.JACOBIAN_FLOOR)
    p.add_argument("--offset", type=float, default=0.0, help="move away from the base point (not asserted)")

    p = sub.add_parser("emit-plot-data", parents=[common], help="aggregate trial CSVs for plotting")
    p.add_argument("results", nargs="?", default=None)
    return parser


COMMANDS = {
    "run-filter": cmd_run,
    "boundedness": lambda a: cmd_run(a, "boundedness"),
    "memory-loss": lambda a: cmd_run(a, "memory-loss"),
    "estimate-criterion": cmd_estimate,
    "covariance-audit": cmd_covariance_audit,
    "perturbation-audit": cmd_perturbation_audit,
    "appendix-c-demo": cmd_basis_demo,
    "eakf-jacobian-audit": cmd_jacobian,
    "emit-plot-data": cmd_plot,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"enkflab: {exc}", file=sys.stderr)
        return 2
    except AuditFailed as exc:
        print(f"enkflab: audit failed: {exc}", file=sys.stderr)
        return 1
    except EnkfLabError as exc:
        print(f"enkflab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
