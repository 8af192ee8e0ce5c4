"""Command-line experiment runner.

Subcommands: ``gen-data``, ``train``, ``sweep``, ``single``, ``complexity``,
``ingest``.  Every subcommand accepts ``--config FILE`` with a JSON document
whose keys match the long flag names (underscored); explicit flags override
the file.  All randomness flows from ``--seed``/``--sample-seed``, and data
outputs are byte-identical across repeated runs of one configuration.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import (ExperimentConfig, complexity_report, ingest_iq_grid,
                    metric_rows_table, run_single, run_sweep, write_csv,
                    write_iq_grid, write_manifest)
from .cplx import ComplexArray
from .harmonic import (build_dictionary, dictionary_from_meta, draw_sampling,
                       gen_dataset, read_dataset, write_dataset)
from .nets import forward, init_network, load_network, save_network
from .solvers import SolverConfig, default_lambda, ista
from .training import TrainConfig, loss_nmse, train


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise SystemExit(f"missing required option --{name.replace('_', '-')}")


def _shape_from(args) -> tuple[int, ...]:
    if args.problem == "2d":
        _require(args, "m1", "m2")
        return (args.m1, args.m2)
    _require(args, "m")
    return (args.m,)


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v != ""]


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v != ""]


def _add_problem_flags(p: argparse.ArgumentParser):
    p.add_argument("--problem", choices=("1d", "2d"), default="1d")
    p.add_argument("--m", type=int, help="1-D grid size")
    p.add_argument("--m1", type=int, help="first 2-D grid size")
    p.add_argument("--m2", type=int, help="second 2-D grid size")
    p.add_argument("--n", type=int, help="number of observed samples")
    p.add_argument("--k", type=int, default=5, help="number of components")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-seed", type=int, default=0,
                   help="seed of the random index set")


def _add_method_flags(p: argparse.ArgumentParser):
    p.add_argument("--methods", default="ista,fista",
                   help="comma list from: ista,fista,lista,convlista,lista-toeplitz")
    p.add_argument("--budget-ista", type=int, default=1000)
    p.add_argument("--budget-fista", type=int, default=100)
    p.add_argument("--lambda-scale", type=float, default=0.1,
                   help="penalty = scale * max|phi^H y|")
    p.add_argument("--model-lista")
    p.add_argument("--model-convlista")
    p.add_argument("--model-lista-toeplitz")


def _load_models(args, methods) -> dict:
    paths = {"lista": args.model_lista, "convlista": args.model_convlista,
             "lista-toeplitz": args.model_lista_toeplitz}
    models = {}
    for name in methods:
        if name in ("ista", "fista"):
            continue
        path = paths.get(name)
        if not path:
            raise SystemExit(f"method {name} needs --model-{name}")
        models[name] = load_network(path)
    return models


def _experiment_config(args) -> ExperimentConfig:
    _require(args, "n")
    methods = [m.strip() for m in str(args.methods).split(",") if m.strip()]
    return ExperimentConfig(
        shape=_shape_from(args),
        n_obs=args.n,
        k=args.k,
        noise_powers_db=_float_list(getattr(args, "noise_db", [0.0])),
        methods=methods,
        trials_per_point=getattr(args, "trials", 1),
        seed=args.seed,
        sample_seed=args.sample_seed,
        budgets={"ista": args.budget_ista, "fista": args.budget_fista},
        lambda_scale=args.lambda_scale,
        models=_load_models(args, methods),
        timing=getattr(args, "timing", False),
    )


def _echo_config(args, skip=("func",)) -> dict:
    doc = {}
    for key, val in sorted(vars(args).items()):
        if key in skip or callable(val):
            continue
        doc[key] = val
    return doc


# -- subcommands -------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    _require(args, "n", "samples", "out")
    shape = _shape_from(args)
    sampling = draw_sampling(int(np.prod(shape)), args.n, args.sample_seed)
    d = build_dictionary(shape, sampling)
    ds = gen_dataset(d, args.samples, args.k, args.sigma2, args.seed)
    write_dataset(args.out, ds)
    if args.export_iq:
        if len(shape) != 2:
            raise SystemExit("--export-iq needs a 2-D problem")
        col = args.export_index
        y = ComplexArray(ds.obs.re[:, col].copy(), ds.obs.im[:, col].copy())
        write_iq_grid(args.export_iq, shape, sampling.omega, y)
    print(f"wrote {args.out} ({ds.count} samples)")
    return 0


def _cmd_train(args) -> int:
    _require(args, "data", "arch", "out")
    train_ds = read_dataset(args.data)
    if args.val:
        val_ds = read_dataset(args.val)
    else:
        count = train_ds.count
        n_val = max(1, int(count * args.val_frac))
        val_ds = train_ds.take(np.arange(count - n_val, count))
        train_ds = train_ds.take(np.arange(count - n_val))
    d = dictionary_from_meta(train_ds.meta)
    est = train_ds if args.estimate_dict else None
    net = init_network(args.arch, d, args.depth, args.lam,
                       dataset_for_estimate=est)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                      epochs=args.epochs, lr_decay_patience=args.patience,
                      seed=args.seed)
    init_val = loss_nmse(net, val_ds)
    net, report = train(net, train_ds, val_ds, cfg)
    final_val = loss_nmse(net, val_ds)
    meta = {
        "train_config": {
            "learning_rate": cfg.learning_rate, "batch_size": cfg.batch_size,
            "epochs": cfg.epochs, "lr_decay_patience": cfg.lr_decay_patience,
            "seed": cfg.seed, "lam": args.lam,
        },
        "initial_val_nmse": init_val,
        "final_val_nmse": final_val,
        "best_epoch": report.best_epoch,
        "loss_history": report.loss_history,
        "val_history": report.val_history,
    }
    save_network(args.out, net, extra_meta=meta)
    gain_db = 20.0 * np.log10(init_val / final_val) if final_val > 0 else float("inf")
    print(f"wrote {args.out} (val NMSE {init_val:.4f} -> {final_val:.4f}, "
          f"gain {gain_db:.1f} dB)")
    return 0


def _cmd_sweep(args) -> int:
    _require(args, "out")
    cfg = _experiment_config(args)
    rows = run_sweep(cfg)
    header, table = metric_rows_table(rows)
    write_csv(args.out, header, table)
    write_manifest(args.out + ".manifest.json", _echo_config(args))
    print(f"wrote {args.out} ({len(table)} rows)")
    return 0


def _cmd_single(args) -> int:
    _require(args, "out")
    cfg = _experiment_config(args)
    header, rows = run_single(cfg, offgrid=args.offgrid, frac=args.frac,
                              sigma2=args.sigma2, seed=args.seed)
    write_csv(args.out, header, rows)
    write_manifest(args.out + ".manifest.json", _echo_config(args))
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_complexity(args) -> int:
    _require(args, "out")
    header, rows = complexity_report(_int_list(args.sizes), n_obs=args.n,
                                     repeats=args.repeats,
                                     timing=not args.no_timing)
    write_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    return 0


def _cmd_ingest(args) -> int:
    _require(args, "path", "out")
    y, d = ingest_iq_grid(args.path)
    if args.model:
        net = load_network(args.model)
        if net.shape != d.shape or net.n_obs != d.n_obs:
            raise SystemExit("model dimensions do not match the IQ grid")
        x_hat = forward(net, y)
        method = f"model:{net.arch}"
    else:
        scfg = SolverConfig(lam=default_lambda(d, y, args.lambda_scale),
                            max_iter=args.budget, tol=0.0)
        x_hat = ista(d, y, scfg).x_hat
        method = "ista"
    m1, m2 = d.shape
    mags = x_hat.abs()
    rows = [[idx, idx // m2, idx % m2, mags[idx]] for idx in range(d.total)]
    write_csv(args.out, ["index", "axis1_cell", "axis2_cell", "magnitude"], rows)
    write_manifest(args.out + ".manifest.json",
                   {**_echo_config(args), "method": method,
                    "grid": list(d.shape), "n_obs": d.n_obs})
    print(f"wrote {args.out}")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hunfold",
        description="Sparse harmonic retrieval benchmarks: classical "
                    "proximal solvers and structured unfolded networks.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {}

    p = sub.add_parser("gen-data", help="generate a labelled synthetic dataset")
    _add_problem_flags(p)
    p.add_argument("--sigma2", type=float, default=0.0, help="noise power")
    p.add_argument("--samples", type=int)
    p.add_argument("--out")
    p.add_argument("--export-iq", help="also write sample --export-index "
                                       "as an IQ grid file (2-D only)")
    p.add_argument("--export-index", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)
    commands["gen-data"] = p

    p = sub.add_parser("train", help="train an unfolded network on a dataset")
    p.add_argument("--data")
    p.add_argument("--val", help="validation dataset (default: split from --data)")
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--arch",
                   choices=("lista", "toeplitz1d", "toeplitz2d", "convlista"))
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--lam", type=float, default=0.1,
                   help="penalty weight setting the initial threshold")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--estimate-dict", action="store_true",
                   help="initialise from the least-squares dictionary estimate")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_train)
    commands["train"] = p

    p = sub.add_parser("sweep", help="noise sweep with per-method metrics")
    _add_problem_flags(p)
    _add_method_flags(p)
    p.add_argument("--noise-db", default="0",
                   help="comma list of noise powers in dB (10*log10 sigma2)")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock per recovery (breaks byte "
                        "reproducibility of the CSV)")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)
    commands["sweep"] = p

    p = sub.add_parser("single", help="single-trial recovery dump per method")
    _add_problem_flags(p)
    _add_method_flags(p)
    p.add_argument("--offgrid", action="store_true")
    p.add_argument("--frac", type=float, default=0.25,
                   help="off-grid displacement as a fraction of a cell")
    p.add_argument("--sigma2", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_single)
    commands["single"] = p

    p = sub.add_parser("complexity", help="parameter counts and layer timings")
    p.add_argument("--sizes", default="512,1024,2048,4096",
                   help="comma list of grid sizes")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--no-timing", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_complexity)
    commands["complexity"] = p

    p = sub.add_parser("ingest", help="recover a spectrum from an IQ grid file")
    p.add_argument("--path")
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--lambda-scale", type=float, default=0.1)
    p.add_argument("--model", help="trained 2-D model file (default: ista)")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ingest)
    commands["ingest"] = p

    return parser, commands


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, commands = build_parser()
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            parser.error("--config needs a file argument")
        with open(argv[i + 1], "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        del argv[i:i + 2]
        for p in commands.values():
            p.set_defaults(**overrides)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
