"""``netfair`` command line.

Every results file starts with a ``# run`` comment line holding the run
configuration as JSON and its digest, followed by CSV.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import dataio, discrete, fairness, nscm
from .mpva import MpvaConfig, MpvaModel, interventional_error


class InvariantViolation(RuntimeError):
    pass


# ------------------------------------------------------------------ helpers

def parse_int_list(text):
    """``"1..5"``, ``"0,2,4"`` or a bare count ``"5"`` (meaning ``0..4``)."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in text:
        return [int(v) for v in text.split(",") if v.strip()]
    return [int(text)]


def parse_seeds(text):
    vals = parse_int_list(text)
    if len(vals) == 1 and ".." not in str(text) and "," not in str(text):
        return list(range(vals[0]))
    return vals


def parse_float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def run_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return cfg, hashlib.sha256(blob).hexdigest()[:16]


def results_path(out, name):
    path = Path(out) / "results" / name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_results(path, args, header, rows):
    cfg, digest = run_config(args)
    with open(path, "w") as fh:
        fh.write("# run " + json.dumps({"digest": digest, "config": cfg}, sort_keys=True, default=str) + "\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
    return digest


def read_results(path):
    """Parse a results file into ``(run_info, header, rows)``."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# run "):
            raise ValueError(f"{path}: missing '# run' provenance line")
        info = json.loads(first[len("# run "):])
        header = fh.readline().rstrip("\n").split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return info, header, rows


def _lambda_arg(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def _mpva_config(args, layers=None, seed=None):
    return MpvaConfig(
        layers=args.layers if layers is None else layers,
        a_dim=args.a_dim, v_dim=args.v_dim, hidden=args.hidden,
        lr=args.lr, epochs_phase1=args.epochs_phase1, epochs_phase2=args.epochs_phase2,
        kl_beta=args.kl_beta, seed=args.seed if seed is None else seed,
    ).validate()


def _classifier_config(args, seed=None):
    return fairness.ClassifierConfig(
        hidden=args.clf_hidden, lr=args.clf_lr, epochs=args.clf_epochs,
        temperature=args.temperature, gcn=args.gcn, seed=args.seed if seed is None else seed)


def _check_report(report):
    try:
        report.check_finite()
    except fairness.FairnessError as exc:
        raise InvariantViolation(str(exc)) from None
    return report


def _fmt(v):
    return "" if v is None else f"{v:.6f}" if isinstance(v, float) else str(v)


# -------------------------------------------------------------- subcommands

def cmd_generate(args):
    overrides = {}
    if args.config:
        cfg = dataio.load_gen_config(dataio.resolve(args.config, args.root))
    else:
        cfg = nscm.preset(args.preset, seed=args.seed)
    for key in ("n", "hops"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    cfg = replace(cfg, seed=args.seed, **overrides).validate()
    base = nscm.make_credit_like_base(cfg.n, seed=cfg.seed)
    graph, table, spec = nscm.generate_semi_synthetic(base, cfg)
    table.meta["name"] = f"{cfg.preset}-seed{cfg.seed}"
    out = dataio.resolve(args.out, args.root)
    dataio.write_dataset(out, graph, table, provenance={
        "generator": asdict(cfg), "digest": cfg.digest(), "seed": cfg.seed})
    replay = spec.f_int(spec.f_mp(graph, table.s), table.base, table.xi)
    if not np.array_equal(replay, table.x):
        raise InvariantViolation("replaying the observed sensitive pattern does not reproduce x")
    print(f"wrote {out}: n={graph.n} edges={graph.num_edges} digest={cfg.digest()} seed={cfg.seed}")
    return 0


def _load(args):
    return dataio.read_dataset(dataio.resolve(args.data, args.root))


def cmd_train_mpva(args):
    graph, table = _load(args)
    model = MpvaModel(table.x.shape[1], table.z.shape[1], _mpva_config(args))
    model.fit(graph, table)
    out = dataio.resolve(args.out, args.root)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    recon = float(np.mean(np.abs(model.reconstruct(graph, table) - table.x)))
    print(f"saved {out} phase1={model.loss_trace['phase1'][-1]:.4f} "
          f"phase2={model.loss_trace['phase2'][-1]:.4f} recon_mae={recon:.4f}")
    return 0


def _report_rows(reports):
    return [[_fmt(getattr(r, k)) for k in fairness.FairnessReport.HEADER] for r in reports]


def cmd_audit(args):
    graph, table = _load(args)
    model = MpvaModel.load(dataio.resolve(args.model, args.root))
    if args.classifier:
        h = fairness.load_classifier(dataio.resolve(args.classifier, args.root), graph)
    else:
        h = fairness.Classifier(table.x.shape[1], args.clf_hidden, np.random.default_rng(args.seed),
                                gcn=args.gcn).bind(graph)
    x_tilde = fairness.interventional_features(model, graph, table)
    report = fairness.evaluate(h, graph, table, x_tilde=x_tilde)
    report.dataset = table.meta.get("name", "")
    report.method = "audit"
    report.seed = args.seed
    _check_report(report)
    if table.has_ground_truth:
        x_pos, x_neg = x_tilde
        err = np.mean([interventional_error(x_neg, table.x_do[0]), interventional_error(x_pos, table.x_do[1])])
        report.notes = f"interventional_mae={err:.6f}"
    rows = _report_rows([report])
    digest = write_results(results_path(dataio.resolve(args.out, args.root), f"audit-seed{args.seed}.csv"), args,
                           fairness.FairnessReport.HEADER, rows)
    print(f"audit acc={report.accuracy:.4f} rd={report.rd:.4f} cf={report.cf:.4f} "
          f"gcf={_fmt(report.gcf)} true_gcf={_fmt(report.true_gcf)} digest={digest}")
    return 0


def _mitigate_one(graph, table, x_tilde, objective, lam, ccfg, name):
    h, report = fairness.train_fair_classifier(
        graph, table, objective=objective, lam=lam, cfg=ccfg, x_tilde=x_tilde, dataset=name)
    return h, _check_report(report)


def cmd_mitigate(args):
    graph, table = _load(args)
    x_tilde = None
    if args.model:
        model = MpvaModel.load(dataio.resolve(args.model, args.root))
        x_tilde = fairness.interventional_features(model, graph, table)
    elif args.objective == "gcf":
        raise SystemExit("mitigate --objective gcf needs --model (a train-mpva checkpoint)")
    name = table.meta.get("name", "")
    ccfg = _classifier_config(args)
    if args.lam == "auto":
        grid = parse_float_list(args.lambdas)
        lam, h, report, tried = fairness.select_lambda(graph, table, args.objective, grid, args.budget, ccfg,
                                                       x_tilde=x_tilde, dataset=name)
        _check_report(report)
        for value, candidate in tried:
            print(f"lambda={candidate:g} own_train={value:.4f}")
        report.notes = f"lambda selected on training nodes (budget {args.budget:g})"
    else:
        lam = float(args.lam)
        h, report = _mitigate_one(graph, table, x_tilde, args.objective, lam, ccfg, name)
    tag = f"{args.objective}-lam{lam:g}-seed{args.seed}"
    ckpt = Path(dataio.resolve(args.out, args.root)) / "ckpt" / f"classifier-{tag}.nfck"
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    fairness.save_classifier(ckpt, h)
    write_results(results_path(dataio.resolve(args.out, args.root), f"mitigate-{tag}.csv"), args,
                  fairness.FairnessReport.HEADER, _report_rows([report]))
    print(f"{args.objective} lambda={lam:g}: acc={report.accuracy:.4f} rd={report.rd:.4f} "
          f"cf={report.cf:.4f} gcf={_fmt(report.gcf)} true_gcf={_fmt(report.true_gcf)} -> {ckpt}")
    return 0


def cmd_sweep(args):
    graph, table = _load(args)
    model = MpvaModel.load(dataio.resolve(args.model, args.root)) if args.model else None
    if model is None and args.objective == "gcf":
        raise SystemExit("sweep --objective gcf needs --model")
    x_tilde = None if model is None else fairness.interventional_features(model, graph, table)
    name = table.meta.get("name", "")
    reports = []
    for seed in parse_seeds(args.seeds):
        ccfg = _classifier_config(args, seed=seed)
        for lam in [0.0] + parse_float_list(args.lambdas):
            objective = "none" if lam == 0.0 else args.objective
            reports.append(_mitigate_one(graph, table, x_tilde, objective, lam, ccfg, name)[1])
    path = results_path(dataio.resolve(args.out, args.root), f"sweep-{args.objective}.csv")
    write_results(path, args, fairness.FairnessReport.HEADER, _report_rows(reports))
    for r in reports:
        print(f"seed={r.seed} lambda={r.lam:g} acc={r.accuracy:.4f} gcf={_fmt(r.gcf)} true_gcf={_fmt(r.true_gcf)}")
    return 0


def sensitivity_errors(preset, layers, seeds, mpva_kwargs, n=None, hops=3):
    """``errors[seed_index, layer_index]``: mean |x_tilde - x_do| over both
    interventions, with dataset and model seeded together."""
    errors = np.zeros((len(seeds), len(layers)))
    overrides = {"hops": hops} if n is None else {"hops": hops, "n": n}
    for a, seed in enumerate(seeds):
        graph, table, _ = nscm.generate_preset(preset, seed=seed, **overrides)
        for b, L in enumerate(layers):
            model = MpvaModel(table.x.shape[1], table.z.shape[1],
                              MpvaConfig(layers=L, seed=seed, **mpva_kwargs)).fit(graph, table)
            pair = model.interventional_pair(graph, table)
            errors[a, b] = np.mean([interventional_error(pair[v], table.x_do[v]) for v in (0, 1)])
    return errors


def cmd_sensitivity(args):
    layers = parse_int_list(args.layers)
    seeds = parse_seeds(args.seeds)
    kwargs = dict(a_dim=args.a_dim, v_dim=args.v_dim, hidden=args.hidden, lr=args.lr,
                  epochs_phase1=args.epochs_phase1, epochs_phase2=args.epochs_phase2, kl_beta=args.kl_beta)
    errors = sensitivity_errors(args.preset, layers, seeds, kwargs, n=args.n, hops=args.hops)
    if not np.isfinite(errors).all():
        raise InvariantViolation("non-finite interventional error in sensitivity study")
    mean, std = errors.mean(axis=0), errors.std(axis=0)
    rows = [[str(L), f"{m:.6f}", f"{s:.6f}", *[f"{e:.6f}" for e in errors[:, j]]]
            for j, (L, m, s) in enumerate(zip(layers, mean, std))]
    header = ["layers", "mean_error", "std_error", *[f"seed{s}" for s in seeds]]
    write_results(results_path(dataio.resolve(args.out, args.root), "sensitivity.csv"), args, header, rows)
    for L, m, s in zip(layers, mean, std):
        print(f"L={L} error={m:.4f} +- {s:.4f}")
    print(f"minimum mean error at L={layers[int(np.argmin(mean))]} (generation hops={args.hops})")
    return 0


def cmd_oracle_check(args):
    rng = np.random.default_rng(args.seed)
    rows, ok = [], 0
    t0 = time.perf_counter()
    for trial in range(args.trials):
        m = discrete.random_instance(rng, n_max=args.max_nodes)
        gaps = [float(np.abs(discrete.enumerate_intervention(m, v) - discrete.identification_formula(m, v)).max())
                for v in (0, 1)]
        residual = discrete.observational_decomposition_check(m)
        passed = max(gaps) <= args.tol and residual <= args.tol
        ok += passed
        rows.append([str(trial), str(m.n), str(m.hops), f"{max(gaps):.3e}", f"{residual:.3e}", str(int(passed))])
    elapsed = time.perf_counter() - t0
    write_results(results_path(dataio.resolve(args.out, args.root), "oracle-check.csv"), args,
                  ["trial", "n", "hops", "max_gap", "decomposition_residual", "passed"], rows)
    print(f"{ok}/{args.trials} within {args.tol:g} ({elapsed:.2f}s)")
    if ok != args.trials:
        raise InvariantViolation(f"{args.trials - ok} oracle trial(s) exceeded tolerance {args.tol:g}")
    return 0


# ------------------------------------------------------------------- parser

def _add_mpva_flags(p, layers=True):
    d = MpvaConfig()
    if layers:
        p.add_argument("--layers", type=int, default=d.layers)
    p.add_argument("--a-dim", type=int, default=d.a_dim)
    p.add_argument("--v-dim", type=int, default=d.v_dim)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--epochs-phase1", type=int, default=d.epochs_phase1)
    p.add_argument("--epochs-phase2", type=int, default=d.epochs_phase2)
    p.add_argument("--kl-beta", type=float, default=d.kl_beta)


def _add_classifier_flags(p):
    d = fairness.ClassifierConfig()
    p.add_argument("--clf-hidden", type=int, default=d.hidden)
    p.add_argument("--clf-lr", type=float, default=d.lr)
    p.add_argument("--clf-epochs", type=int, default=d.epochs)
    p.add_argument("--temperature", type=float, default=d.temperature)
    p.add_argument("--gcn", action="store_true", help="graph-convolutional classifier")


def build_parser():
    parser = argparse.ArgumentParser(prog="netfair", description="Graph causal fairness toolkit")
    parser.add_argument("--root", default=None, help=f"workspace root (default ${dataio.ROOT_ENV} or cwd)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a semi-synthetic dataset with ground truth")
    p.add_argument("--preset", choices=sorted(nscm.PRESETS), default="d1")
    p.add_argument("--config", help="generator config file (JSON or key = value)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int)
    p.add_argument("--hops", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-mpva", help="fit the interventional feature model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.nfck)")
    p.add_argument("--seed", type=int, default=0)
    _add_mpva_flags(p)
    p.set_defaults(func=cmd_train_mpva)

    p = sub.add_parser("audit", help="fairness metrics of a classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--classifier")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    _add_classifier_flags(p)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("mitigate", help="train a classifier with a fairness penalty")
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--objective", choices=fairness.OBJECTIVES, default="gcf")
    p.add_argument("--lambda", dest="lam", type=_lambda_arg, default=1.0,
                   help="penalty weight, or 'auto' to pick from --lambdas on training nodes")
    p.add_argument("--lambdas", default=",".join(f"{v:g}" for v in fairness.LAMBDA_GRID))
    p.add_argument("--budget", type=float, default=0.02, help="own-metric target for --lambda auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    _add_classifier_flags(p)
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("sweep", help="accuracy/fairness trade-off over lambda")
    p.add_argument("--data", required=True)
    p.add_argument("--model")
    p.add_argument("--objective", choices=fairness.OBJECTIVES[1:], default="gcf")
    p.add_argument("--lambdas", default=",".join(f"{v:g}" for v in fairness.LAMBDA_GRID))
    p.add_argument("--seeds", default="1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    _add_classifier_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sensitivity", help="interventional error against MPNN depth")
    p.add_argument("--preset", choices=sorted(nscm.PRESETS), default="s3")
    p.add_argument("--hops", type=int, default=3)
    p.add_argument("--layers", default="1..5")
    p.add_argument("--seeds", default="5")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    _add_mpva_flags(p, layers=False)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("oracle-check", help="enumeration vs identification formula")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--max-nodes", type=int, default=6)
    p.add_argument("--tol", type=float, default=discrete.TOL)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.root is not None:
        os.environ[dataio.ROOT_ENV] = args.root
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 2
    except (dataio.DataError, nscm.GenerationError, fairness.FairnessError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
