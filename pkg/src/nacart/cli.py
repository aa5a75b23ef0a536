"""Command-line front end.

Subcommands: simulate, ampute, impute, em, fit, theory, bench, selectfreq.
A plain-text config file of `key = value` lines can preload any flag;
explicit command-line flags win. Exit codes: 0 success, 2 configuration
error, 3 runtime or data error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench as bench_mod
from . import plots, theory
from .data import (
    complete,
    read_csv,
    read_target_csv,
    write_csv,
    write_target_csv,
)
from .ensemble import fit_boosting, fit_forest
from .impute import GaussianImputer, fit_constant, fit_gaussian_em, transform
from .synth import AmputationSpec, ModelSpec, ampute, gen_model, gen_predictive
from .tree import TreeHyper, dump_tree, fit_tree


class ConfigError(ValueError):
    pass


def _parse_cols(text: str) -> tuple[int, ...]:
    """1-based comma list -> 0-based column tuple."""
    cols = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        j = int(part)
        if j < 1:
            raise ConfigError(f"column indices are 1-based; got {j}")
        cols.append(j - 1)
    return tuple(cols)


def _parse_grid(text: str) -> list[float]:
    """Either `start:stop:step` or a comma list."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        if step <= 0:
            raise ConfigError("grid step must be positive")
        values = []
        v = start
        while v <= stop + 1e-12:
            values.append(round(v, 12))
            v += step
        return values
    return [float(v) for v in text.split(",") if v.strip()]


def _load_config_file(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line without '=': {line!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def _apply_config_defaults(args: argparse.Namespace, parser_defaults: dict):
    """Fill unset flags from --config file, then from hardcoded defaults."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
    for key, default in parser_defaults.items():
        if hasattr(args, key):
            continue
        if key in file_values:
            raw = file_values[key]
            if isinstance(default, bool):
                setattr(args, key, raw.lower() in ("1", "true", "yes", "on"))
            elif isinstance(default, int) and not isinstance(default, bool):
                setattr(args, key, int(raw))
            elif isinstance(default, float):
                setattr(args, key, float(raw))
            elif default is None:
                setattr(args, key, _coerce(raw))
            else:
                setattr(args, key, raw)
        else:
            setattr(args, key, default)
    for key, raw in file_values.items():
        if not hasattr(args, key):
            setattr(args, key, _coerce(raw))


def _require(args, key: str) -> str:
    value = getattr(args, key, "")
    if not value:
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return value


def _sibling_y_path(out: str) -> str:
    if out.endswith(".csv"):
        return out[: -len(".csv")] + ".y.csv"
    return out + ".y.csv"


def _model_spec(args) -> ModelSpec:
    return ModelSpec(
        model_id=args.model, d=args.d, rho=args.rho, noise_sd=args.noise_sd
    )


def _pattern_spec(args) -> AmputationSpec:
    return AmputationSpec(
        mechanism=args.pattern,
        p=args.p,
        target_columns=_parse_cols(args.cols) if args.cols else (),
        shift=args.shift,
    )


def _cmd_simulate(args) -> int:
    spec = _model_spec(args)
    if args.pattern == "predictive":
        cols = _parse_cols(args.cols) if args.cols else (0,)
        ds = gen_predictive(spec, args.n, args.p, args.shift, args.seed,
                            column=cols[0])
        features = ds.features
    else:
        ds = gen_model(spec, args.n, args.seed)
        features = ds.features
        if args.pattern != "none":
            features = ampute(features, _pattern_spec(args), args.seed + 1)
    write_csv(args.out, features)
    write_target_csv(_sibling_y_path(args.out), ds.y)
    return 0


def _cmd_ampute(args) -> int:
    matrix, names = read_csv(_require(args, "in_file"))
    out = ampute(matrix, _pattern_spec(args), args.seed)
    write_csv(args.out, out, names)
    return 0


def _cmd_impute(args) -> int:
    train, names = read_csv(_require(args, "train"))
    apply_path = args.apply if args.apply else args.train
    target, _ = read_csv(apply_path)
    if args.method == "gaussian":
        imp = GaussianImputer(max_iter=args.max_iter, tol=args.tol).fit(train)
        filled = imp.transform(target, add_mask=args.mask)
    else:
        imp = fit_constant(train, kind=args.method)
        filled = transform(imp, target, add_mask=args.mask)
    out_names = list(names)
    if args.mask:
        out_names += [f"m_{name}" for name in names]
    write_csv(args.out, complete(filled), out_names)
    return 0


def _cmd_em(args) -> int:
    matrix, _ = read_csv(_require(args, "in_file"))
    params, trace = fit_gaussian_em(matrix, max_iter=args.max_iter, tol=args.tol)
    payload = {
        "mu": [repr(float(v)) for v in params.mu],
        "sigma": [repr(float(v)) for v in params.sigma.reshape(-1)],
        "d": int(params.mu.size),
        "iterations": len(trace) - 1,
        "observed_loglik": repr(float(trace[-1])),
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return 0


def _cmd_fit(args) -> int:
    x, _ = read_csv(_require(args, "train"))
    y = read_target_csv(_require(args, "target"))
    hyper = TreeHyper(max_depth=args.max_depth, min_split=args.min_split,
                      min_leaf=args.min_leaf, min_gain=args.min_gain)
    if args.learner == "tree":
        model = fit_tree(x, y, strategy=args.strategy, hyper=hyper,
                         seed=args.seed)
        text = dump_tree(model)
    elif args.learner == "forest":
        forest = fit_forest(x, y, strategy=args.strategy, hyper=hyper,
                            b=args.trees, mtry=args.mtry, seed=args.seed)
        text = "".join(
            f"tree {t}\n" + dump_tree(tree) for t, tree in enumerate(forest.trees)
        )
    else:
        boost = fit_boosting(x, y, strategy=args.strategy, hyper=hyper,
                             rounds=args.rounds, learning_rate=args.lr,
                             seed=args.seed)
        text = f"init {boost.init_value:.17g}\n" + "".join(
            f"stage {m} lr={lr:.17g}\n" + dump_tree(tree)
            for m, (tree, lr) in enumerate(boost.stages)
        )
    with open(args.dump, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return 0


def _cmd_theory(args) -> int:
    p_grid = _parse_grid(args.p_grid)
    etas = _parse_grid(args.eta)
    mc_cols = []
    if args.mc_check:
        mc_cols = ["mia", "block", "prob", "surr"]
    header = "p,eta,s_star_L,risk_mia,risk_block,risk_block_cf,risk_prob,risk_surr"
    for name in mc_cols:
        header += f",mc_{name},mc_{name}_se"
    lines = [header]
    strategies = {"mia": "mia", "block": "block", "prob": "prob",
                  "surr": "surrogate"}
    for p in p_grid:
        for eta in etas:
            point = theory.risk_closed_forms(p, eta)
            row = ",".join(
                repr(float(v))
                for v in (
                    p, eta, point.s_star_mia, point.risks["mia"],
                    point.risks["block"], point.risks["block_cf"],
                    point.risks["prob"], point.risks["surr"],
                )
            )
            for name in mc_cols:
                est = theory.mc_stump_risk(
                    strategies[name], p, eta, n=args.mc_n, reps=args.mc_reps,
                    seed=args.seed,
                )
                row += f",{float(est.mean)!r},{float(est.std_error)!r}"
            lines.append(row)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


def _cmd_bench(args) -> int:
    methods = tuple(
        m.strip() for m in args.methods.split(",") if m.strip()
    )
    config = bench_mod.ExperimentConfig(
        model=_model_spec(args),
        pattern=_pattern_spec(args),
        n_train=args.n_train,
        n_test=args.n_test,
        reps=args.reps,
        learner=args.learner,
        methods=methods,
        master_seed=args.seed,
        trees=args.trees,
        mtry=args.mtry,
        rounds=args.rounds,
        learning_rate=args.lr,
        max_depth=args.max_depth,
        min_split=args.min_split,
        min_leaf=args.min_leaf,
        min_gain=args.min_gain,
        timings=not args.no_timings,
    )
    records = bench_mod.run_experiment(config, workers=args.workers)
    if args.format == "csv":
        bench_mod.emit_csv(records, args.out)
    else:
        plots.emit_svg(bench_mod.relative_scores(records), args.out, kind="box")
    return 0


def _cmd_selectfreq(args) -> int:
    rows = bench_mod.selection_frequency_experiment(
        p_grid=_parse_grid(args.p_grid),
        n_grid=[int(v) for v in _parse_grid(args.n_grid)],
        missing_on=args.missing_on,
        reps=args.reps,
        seed=args.seed,
    )
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("p,n,frequency\n")
        for row in rows:
            fh.write(f"{row['p']!r},{row['n']},{row['frequency']!r}\n")
    return 0


_DEFAULTS: dict[str, dict] = {
    "simulate": dict(model="quadratic", n=1000, d=9, rho=0.5, noise_sd=0.1,
                     pattern="none", p=0.2, cols="", shift=3.0, seed=0,
                     out="data.csv"),
    "ampute": dict(in_file="", pattern="mcar", p=0.2, cols="", shift=3.0,
                   seed=0, out="amputed.csv"),
    "impute": dict(method="mean", mask=False, train="", apply="",
                   max_iter=500, tol=1e-8, out="imputed.csv"),
    "em": dict(in_file="", max_iter=500, tol=1e-8, out="params.json"),
    "fit": dict(strategy="mia", learner="tree", max_depth=30, min_split=10,
                min_leaf=5, min_gain=0.0, trees=100, mtry=None, rounds=200,
                lr=0.1, seed=0, train="", target="", dump="tree.txt"),
    "theory": dict(p_grid="0:0.95:0.01", eta="0.2,0.5,0.8", mc_check=False,
                   mc_n=10_000, mc_reps=8, seed=0, out="curves.csv"),
    "bench": dict(model="quadratic", d=9, rho=0.5, noise_sd=0.1,
                  pattern="mcar", p=0.2, cols="1,2,3", shift=3.0,
                  n_train=1000, n_test=1000, reps=10, learner="tree",
                  methods="mia,surrogate,prob,block,impute_mean,"
                          "impute_mean+mask,impute_oor,impute_oor+mask,"
                          "impute_gaussian",
                  seed=0, trees=100, mtry=None, rounds=200, lr=0.1,
                  max_depth=30, min_split=10, min_leaf=5, min_gain=0.0,
                  workers=1, no_timings=False, format="csv", out="bench.csv"),
    "selectfreq": dict(p_grid="0,0.75", n_grid="50", missing_on="x1",
                       reps=500, seed=0, out="selectfreq.csv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nacart",
        description="Regression trees and benchmarks for learning with missing values",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS, **kwargs)
        p.add_argument("--config", default=None,
                       help="key = value file preloading any flag")
        return p

    p = add("simulate", help="generate a synthetic dataset")
    p.add_argument("--model", choices=("quadratic", "linear", "friedman",
                                       "nonlinear"))
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--noise-sd", type=float, dest="noise_sd")
    p.add_argument("--pattern", choices=("none", "mcar", "mnar", "predictive"))
    p.add_argument("--p", type=float)
    p.add_argument("--cols", help="1-based comma list of amputed columns")
    p.add_argument("--shift", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("ampute", help="insert missing values into a CSV matrix")
    p.add_argument("--in", dest="in_file")
    p.add_argument("--pattern", choices=("mcar", "mnar"))
    p.add_argument("--p", type=float)
    p.add_argument("--cols")
    p.add_argument("--shift", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("impute", help="fit an imputer on train data and complete a matrix")
    p.add_argument("--method", choices=("mean", "oor", "gaussian"))
    p.add_argument("--mask", action="store_true")
    p.add_argument("--no-mask", action="store_false", dest="mask")
    p.add_argument("--train")
    p.add_argument("--apply")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--tol", type=float)
    p.add_argument("--out")

    p = add("em", help="fit Gaussian parameters by EM and dump them")
    p.add_argument("--in", dest="in_file")
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--tol", type=float)
    p.add_argument("--out")

    p = add("fit", help="fit a tree, forest, or boosting model")
    p.add_argument("--strategy", choices=("mia", "surrogate", "prob", "block"))
    p.add_argument("--learner", choices=("tree", "forest", "boost"))
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--min-leaf", type=int, dest="min_leaf")
    p.add_argument("--min-split", type=int, dest="min_split")
    p.add_argument("--min-gain", type=float, dest="min_gain")
    p.add_argument("--trees", type=int)
    p.add_argument("--mtry", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--train")
    p.add_argument("--target")
    p.add_argument("--dump")

    p = add("theory", help="tabulate closed-form criteria and risks")
    p.add_argument("--p-grid", dest="p_grid")
    p.add_argument("--eta")
    p.add_argument("--mc-check", action="store_true", dest="mc_check")
    p.add_argument("--mc-n", type=int, dest="mc_n")
    p.add_argument("--mc-reps", type=int, dest="mc_reps")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("bench", help="run a benchmark experiment")
    p.add_argument("--model", choices=("quadratic", "linear", "friedman",
                                       "nonlinear"))
    p.add_argument("--d", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--noise-sd", type=float, dest="noise_sd")
    p.add_argument("--pattern", choices=("mcar", "mnar", "predictive"))
    p.add_argument("--p", type=float)
    p.add_argument("--cols")
    p.add_argument("--shift", type=float)
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--reps", type=int)
    p.add_argument("--learner", choices=("tree", "forest", "boost"))
    p.add_argument("--methods")
    p.add_argument("--seed", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--mtry", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--min-split", type=int, dest="min_split")
    p.add_argument("--min-leaf", type=int, dest="min_leaf")
    p.add_argument("--min-gain", type=float, dest="min_gain")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-timings", action="store_true", dest="no_timings")
    p.add_argument("--format", choices=("csv", "svg"))
    p.add_argument("--out")

    p = add("selectfreq", help="root-feature selection frequencies")
    p.add_argument("--p-grid", dest="p_grid")
    p.add_argument("--n-grid", dest="n_grid")
    p.add_argument("--missing-on", choices=("x1", "both"), dest="missing_on")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "ampute": _cmd_ampute,
    "impute": _cmd_impute,
    "em": _cmd_em,
    "fit": _cmd_fit,
    "theory": _cmd_theory,
    "bench": _cmd_bench,
    "selectfreq": _cmd_selectfreq,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_defaults(args, _DEFAULTS[args.command])
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"nacart: config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"nacart: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
