"""Command-line front end.

Subcommands
-----------
coherence   print mu, the Welch bound, and certificate verdicts for a matrix
solve       run one l1 solver (or the l0 oracle) on (X, y) and save alpha
gen         emit a staged instance or a kernel toy database as CSV files
src         classify a test vector over a labeled dictionary
ksrc        kernel-space classification of implicit test samples
exp         run a Monte-Carlo study and write its CSV tables
"""

import argparse
import os
import sys

import numpy as np

from . import classify, coherence, datagen, experiments, numerics, solvers


def _load_dictionary(x_path, labels_path=None):
    X = numerics.load_matrix(x_path)
    labels = None
    if labels_path is not None:
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    return coherence.Dictionary(X, labels)


def _cmd_coherence(args):
    X = numerics.load_matrix(args.matrix)
    D = coherence.Dictionary(numerics.normalize_columns(X))
    cert = coherence.certificate(D)
    print(f"mu={cert.mu:.17g}")
    if cert.welch is not None:
        print(f"welch={cert.welch:.17g}")
        print(f"slack={cert.slack:.17g}")
    print(f"k_max_noiseless={cert.k_max_noiseless:.17g}")
    print(f"k_max_noisy={cert.k_max_noisy:.17g}")
    if args.k is not None:
        verdict = cert.verdict_noisy(args.k) if args.noisy else cert.verdict_noiseless(args.k)
        print(f"k={args.k}")
        print(f"verdict={'pass' if verdict else 'fail'}")
    if args.csv:
        experiments.write_csv(
            args.csv,
            ["mu", "welch", "k_max_noiseless", "k_max_noisy"],
            [[cert.mu, cert.welch if cert.welch is not None else float("nan"),
              cert.k_max_noiseless, cert.k_max_noisy]],
        )
    return 0


def _cmd_solve(args):
    X = numerics.load_matrix(args.matrix)
    y = numerics.load_vector(args.target)
    cfg = solvers.SolverConfig(support_threshold=args.tau)
    if args.mode == "bp":
        alpha = solvers.basis_pursuit(X, y, cfg)
    elif args.mode == "lasso":
        alpha = solvers.lasso_homotopy(X, y, args.lam, cfg)
    elif args.mode == "bpdn":
        if args.eps is None:
            print("solve: --mode bpdn requires --eps", file=sys.stderr)
            return 2
        alpha = solvers.bpdn_constrained(X, y, args.eps, cfg)
    elif args.mode == "sigerr":
        alpha, z = solvers.signal_error_bp(X, y, cfg)
        if args.error_out:
            numerics.save_vector(args.error_out, z)
    else:  # oracle
        alpha = solvers.l0_oracle(X, y, args.kcap, support_threshold=args.tau)
    if args.out:
        numerics.save_vector(args.out, alpha.entries)
    residual = float(np.linalg.norm(X @ alpha.entries - y))
    print(
        f"residual={residual:.17g} l1={alpha.l1():.17g} "
        f"l0@{args.tau:g}={alpha.l0()} iterations={alpha.iterations}"
        + (f" flag={alpha.flag}" if alpha.flag else "")
    )
    return 0


def _cmd_gen(args):
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "staged":
        spec = datagen.StagedDatabaseSpec(args.n0, args.m, args.classes, args.stage, args.seed)
        inst = datagen.gen_staged(spec)
        if args.zeta is not None:
            inst = datagen.add_noise(inst, args.zeta)
        numerics.save_matrix(os.path.join(args.out, "X_tr.csv"), inst.dictionary.data)
        np.savetxt(
            os.path.join(args.out, "labels.csv"),
            inst.dictionary.labels,
            fmt="%d",
            newline="\n",
        )
        numerics.save_vector(os.path.join(args.out, "alpha0.csv"), inst.alpha0.entries)
        numerics.save_vector(os.path.join(args.out, "y0.csv"), inst.y0)
        if inst.y is not None:
            numerics.save_vector(os.path.join(args.out, "y.csv"), inst.y)
    else:  # toy
        D = datagen.gen_toy_kernel_db(args.n0, args.m, args.classes, args.eta, args.seed)
        numerics.save_matrix(os.path.join(args.out, "X_tr.csv"), D.data)
        np.savetxt(os.path.join(args.out, "labels.csv"), D.labels, fmt="%d", newline="\n")
    print(f"wrote {args.out}")
    return 0


def _cmd_src(args):
    D = _load_dictionary(args.matrix, args.labels)
    y = numerics.load_vector(args.target)
    if args.bp:
        cfg = solvers.SolverConfig()
    elif args.eps is not None:
        cfg = solvers.SolverConfig(epsilon=args.eps)
    else:
        cfg = solvers.SolverConfig(lam=args.lam)
    decision = classify.src_classify(D, y, cfg)
    print(f"label={decision.label}")
    print("residuals=" + ",".join(f"{r:.17g}" for r in decision.residuals))
    return 0


def _cmd_ksrc(args):
    D = _load_dictionary(args.matrix, args.labels)
    K = classify.gaussian_gram(D, args.sigma)
    tests = numerics.load_matrix(args.tests)
    correct = 0
    for row in tests:
        c, truth = row[:-1], int(row[-1])
        t = classify.KernelTestSample(solvers.CoefVector(c), truth)
        decision = classify.ksrc_classify(K, t, args.lam)
        correct += decision.label == truth
        print(f"truth={truth} label={decision.label}")
    print(f"accuracy={correct / tests.shape[0]:.17g}")
    return 0


def _cmd_exp(args):
    if args.config:
        cfg = experiments.config_from_file(args.config)
    else:
        pairs = {"study": args.study}
        for key in (
            "db",
            "stages",
            "trials",
            "seed",
            "zeta",
            "c",
            "k",
            "taus",
            "m_list",
            "eta",
            "sigma_grid",
            "per_class",
            "search_trials",
            "out",
            "workers",
        ):
            value = getattr(args, key)
            if value is not None:
                pairs[key] = str(value)
        if args.raw:
            pairs["raw"] = "true"
        cfg = experiments.config_from_mapping(pairs)
    for path in experiments.run_study(cfg):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparselab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coherence", help="coherence certificate for a matrix CSV")
    p.add_argument("matrix")
    p.add_argument("--k", type=int, default=None, help="sparsity level to test")
    p.add_argument("--noisy", action="store_true", help="use the noisy-case cap")
    p.add_argument("--csv", default=None, help="also write a one-row CSV")
    p.set_defaults(func=_cmd_coherence)

    p = sub.add_parser("solve", help="run one solver on (X, y)")
    p.add_argument("matrix")
    p.add_argument("target")
    p.add_argument("--mode", choices=["bp", "lasso", "bpdn", "sigerr", "oracle"], default="bp")
    p.add_argument("--lambda", dest="lam", type=float, default=solvers.BP_LAMBDA)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--tau", type=float, default=solvers.DEFAULT_SUPPORT_THRESHOLD)
    p.add_argument("--kcap", type=int, default=3)
    p.add_argument("-o", "--out", default=None, help="write alpha as CSV")
    p.add_argument("--error-out", default=None, help="sigerr: write the error part z")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("gen", help="generate synthetic data")
    p.add_argument("kind", choices=["staged", "toy"])
    p.add_argument("--n0", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--L", dest="classes", type=int, required=True)
    p.add_argument("--stage", type=int, default=1)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("src", help="classify a test vector")
    p.add_argument("matrix")
    p.add_argument("labels")
    p.add_argument("target")
    p.add_argument("--lambda", dest="lam", type=float, default=solvers.BP_LAMBDA)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--bp", action="store_true", help="exact basis pursuit mode")
    p.set_defaults(func=_cmd_src)

    p = sub.add_parser("ksrc", help="kernel-space classification")
    p.add_argument("matrix")
    p.add_argument("labels")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=solvers.BP_LAMBDA)
    p.add_argument(
        "--tests",
        required=True,
        help="CSV whose rows are generating coefficients with a trailing label",
    )
    p.set_defaults(func=_cmd_ksrc)

    p = sub.add_parser("exp", help="run a study")
    p.add_argument("study", nargs="?", default=None, choices=list(experiments.STUDIES) + [None])
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--db", default=None)
    p.add_argument("--stages", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--zeta", type=float, default=None)
    p.add_argument("--C", dest="c", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--taus", default=None)
    p.add_argument("--m-list", dest="m_list", default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--sigma-grid", dest="sigma_grid", default=None)
    p.add_argument("--per-class", dest="per_class", type=int, default=None)
    p.add_argument("--search-trials", dest="search_trials", type=int, default=None)
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--raw", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_exp)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "exp" and not args.config and not args.study:
        print("exp: give a study name or --config", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
