"""Command-line entry point.

Subcommands:
  solve PRESET           train a built-in problem and write artifacts
  bundle PRESET          train a parameterized problem family
  invert PRESET          recover bundle parameters from observed data
  bench-operators        time naive vs fused differential operators

Every run writes machine-readable artifacts (CSV/JSON) into --out; rerunning
with identical flags and seed reproduces them bit-identically (timing columns
of the benchmark excepted).  NEURODIFF_SEED overrides the default seed.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import config, operators, presets
from .callbacks import (AfterEpoch, Callback, SetLearningRate, SetLoss,
                        ValidationConverged)
from .losses import LossSpec
from .network import MLP
from .solver import (Adam, SolverConfig, Solution, TrainingDiverged, fit,
                     fit_inverse, get_solution)

LOSS_FLAGS = {"l2": "l2", "mse": "mse", "l1": "l1", "linf": "linf",
              "h1": "h1", "semi-h1": "semi_h1"}


def _default_seed():
    return int(os.environ.get("NEURODIFF_SEED", "0"))


def _add_common(p):
    # unset flags fall back to per-preset defaults
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--hidden", type=str, default=None,
                   help="comma-separated hidden layer sizes, e.g. 32,32")
    p.add_argument("--activation", choices=("tanh", "sin", "softplus"),
                   default=None)
    p.add_argument("--loss", choices=sorted(LOSS_FLAGS), default="mse")
    p.add_argument("--out", type=str, default="out")
    p.add_argument("--precision", choices=("f32", "f64"), default="f64")
    p.add_argument("--switch-loss", choices=sorted(LOSS_FLAGS), default=None,
                   help="switch to this loss once validation converges")
    p.add_argument("--switch-delta", type=float, default=1e-4)
    p.add_argument("--switch-window", type=int, default=20)
    p.add_argument("--manifest", type=str, default=None,
                   help="load all flags from a run manifest")


def build_parser():
    parser = argparse.ArgumentParser(prog="neurodiff")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="train a built-in problem")
    ps.add_argument("preset", choices=presets.SOLVE_PRESETS)
    ps.add_argument("--dim", type=int, default=3,
                    help="spatial dimension for the heat preset")
    ps.add_argument("--allow-large", action="store_true",
                    help="allow heat dimensions above 3")
    _add_common(ps)

    pb = sub.add_parser("bundle", help="train a problem family")
    pb.add_argument("preset", choices=presets.BUNDLE_PRESETS)
    _add_common(pb)

    pi = sub.add_parser("invert", help="fit bundle parameters to data")
    pi.add_argument("preset", choices=presets.BUNDLE_PRESETS)
    pi.add_argument("--data", type=str, required=True,
                    help="CSV of observations with coordinate and value columns")
    pi.add_argument("--bundle-dir", type=str, required=True,
                    help="output directory of a previous bundle run")
    pi.add_argument("--init-theta", type=str, default=None,
                    help="comma-separated name=value initial guesses")
    pi.add_argument("--steps", type=int, default=1000)
    pi.add_argument("--lr", type=float, default=0.3)
    pi.add_argument("--out", type=str, default="out")
    pi.add_argument("--seed", type=int, default=None)

    pbench = sub.add_parser("bench-operators", help="naive vs fused timings")
    pbench.add_argument("--sizes", type=int, nargs="+", default=[4096])
    pbench.add_argument("--repeats", type=int, default=10)
    pbench.add_argument("--out", type=str, default=None,
                        help="CSV output path (default stdout)")
    pbench.add_argument("--seed", type=int, default=None)
    return parser


def _resolve_hidden(args, preset):
    if args.hidden:
        return tuple(int(h) for h in args.hidden.split(","))
    return tuple(preset.hidden)


def _write_metrics(path, metrics):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "valid_loss", "loss_kind", "lr"])
        for row in metrics:
            w.writerow([row["epoch"], repr(row["train_loss"]),
                        repr(row["valid_loss"]), row["loss_kind"], row["lr"]])


def _write_solution(path, coord_names, grid, pred, true):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = list(coord_names) + ["u_pred"]
        if true is not None:
            header += ["u_true", "abs_err"]
        w.writerow(header)
        for i in range(len(pred)):
            row = [repr(float(g[i])) for g in grid] + [repr(float(pred[i]))]
            if true is not None:
                row += [repr(float(true[i])),
                        repr(abs(float(pred[i]) - float(true[i])))]
            w.writerow(row)


def _write_manifest(outdir, payload):
    with open(os.path.join(outdir, "manifest.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)


def _apply_manifest(args):
    if getattr(args, "manifest", None):
        with open(args.manifest) as f:
            saved = json.load(f)
        for key, value in saved["flags"].items():
            if key not in ("out", "manifest"):
                setattr(args, key, value)
        args.preset = saved["preset"]
    return args


def _train_common(args, preset, outdir):
    config.set_precision(args.precision)
    seed = args.seed if args.seed is not None else _default_seed()
    epochs = args.epochs if args.epochs is not None else preset.epochs
    hidden = _resolve_hidden(args, preset)
    batch = args.batch_size if args.batch_size is not None else preset.batch
    lr = args.lr if args.lr is not None else preset.lr
    activation = args.activation or preset.activation
    args.batch_size, args.lr, args.activation = batch, lr, activation
    problem = preset.problem(batch)
    cfg = SolverConfig(
        networks=preset.network_specs(hidden, activation, seed),
        conditions=preset.conditions,
        optimizer=Adam(lr=lr),
        loss=LossSpec(LOSS_FLAGS[args.loss]),
        epochs=epochs,
        batches_per_epoch=preset.batches_per_epoch,
        seed=seed,
    )
    cbs = [Callback(AfterEpoch(e), SetLearningRate(lr * f))
           for e, f in preset.lr_schedule]
    if args.switch_loss:
        cbs.append(Callback(
            ValidationConverged(args.switch_delta, args.switch_window),
            SetLoss(LossSpec(LOSS_FLAGS[args.switch_loss]))))
    state = fit(problem, cfg, cbs, layout=preset.layout)
    _write_metrics(os.path.join(outdir, "metrics.csv"), state.metrics)
    for i, net in enumerate(state.networks):
        net.save(os.path.join(outdir, f"net{i}.ckpt"))
    return state, seed, epochs, hidden


def _manifest_flags(args, seed, epochs, hidden):
    return {
        "epochs": epochs, "batch_size": args.batch_size, "seed": seed,
        "lr": args.lr, "hidden": ",".join(str(h) for h in hidden),
        "activation": args.activation, "loss": args.loss,
        "precision": args.precision, "switch_loss": args.switch_loss,
        "switch_delta": args.switch_delta, "switch_window": args.switch_window,
        "manifest": None, "out": args.out,
    }


def cmd_solve(args):
    args = _apply_manifest(args)
    if args.preset == "heat" and args.dim > 3 and not args.allow_large:
        print("heat: --dim above 3 requires --allow-large", file=sys.stderr)
        return 2
    preset = presets.get(args.preset, dim=getattr(args, "dim", 3))
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    state, seed, epochs, hidden = _train_common(args, preset, outdir)
    solution = get_solution(state, "best")
    grid = preset.grid
    pred = solution(*grid)
    true = preset.analytic(*grid) if preset.analytic else None
    if true is not None:
        true = np.broadcast_to(np.asarray(true, dtype=float), pred.shape)
    _write_solution(os.path.join(outdir, "solution.csv"),
                    preset.coord_names, grid, pred, true)
    flags = _manifest_flags(args, seed, epochs, hidden)
    flags["dim"] = getattr(args, "dim", 3)
    flags["allow_large"] = getattr(args, "allow_large", False)
    _write_manifest(outdir, {"command": "solve", "preset": args.preset,
                             "flags": flags})
    return 0


def cmd_bundle(args):
    args = _apply_manifest(args)
    preset = presets.get(args.preset)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    state, seed, epochs, hidden = _train_common(args, preset, outdir)
    _write_manifest(outdir, {
        "command": "bundle", "preset": args.preset,
        "flags": _manifest_flags(args, seed, epochs, hidden),
        "layout": {"theta_ic": preset.layout.theta_ic,
                   "theta_eq": preset.layout.theta_eq},
    })
    return 0


def _load_bundle_solution(preset, bundle_dir):
    nets = []
    i = 0
    while os.path.exists(os.path.join(bundle_dir, f"net{i}.ckpt")):
        nets.append(MLP.load(os.path.join(bundle_dir, f"net{i}.ckpt")))
        i += 1
    if not nets:
        raise FileNotFoundError(f"no net*.ckpt checkpoints in {bundle_dir}")
    return Solution(nets, preset.conditions, preset.coord_names, preset.layout)


def cmd_invert(args):
    preset = presets.get(args.preset)
    solution = _load_bundle_solution(preset, args.bundle_dir)
    names = preset.layout.names()
    ranges = preset.layout.ranges()
    with open(args.data, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if len(header) != len(preset.coord_names) + 1:
            print(f"invert: data file must have columns "
                  f"{list(preset.coord_names) + ['u']}, got {header}",
                  file=sys.stderr)
            return 2
        data = []
        for row in reader:
            coords = tuple(float(v) for v in row[:-1])
            data.append((coords if len(coords) > 1 else coords[0],
                         float(row[-1])))
    init = {k: (lo + hi) / 2 for k, (lo, hi) in ranges.items()}
    if args.init_theta:
        for part in args.init_theta.split(","):
            k, v = part.split("=")
            if k.strip() not in ranges:
                print(f"invert: unknown parameter {k.strip()!r}",
                      file=sys.stderr)
                return 2
            init[k.strip()] = float(v)
    theta = fit_inverse(solution, data, init, steps=args.steps, lr=args.lr)
    # final mean squared data mismatch at the recovered parameters
    coords = np.array([[d[0]] if np.isscalar(d[0]) else list(d[0])
                       for d in data], dtype=float)
    values = np.array([d[1] for d in data])
    pred = solution(*[coords[:, j] for j in range(coords.shape[1])],
                    **{k: np.full(len(values), theta[k]) for k in names})
    mismatch = float(np.mean((pred - values) ** 2))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "theta.json"), "w") as f:
        json.dump({"theta": theta, "mismatch": mismatch,
                   "steps": args.steps}, f, indent=2, sort_keys=True)
    print(json.dumps({"theta": theta, "mismatch": mismatch}))
    return 0


def cmd_bench(args):
    seed = args.seed if args.seed is not None else _default_seed()
    rows = operators.bench_operators(sizes=args.sizes, repeats=args.repeats,
                                     seed=seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out)
    w.writerow(["system", "operator", "naive_ms_mean", "naive_ms_std",
                "fused_ms_mean", "fused_ms_std", "speedup", "equal"])
    for r in rows:
        w.writerow([r["system"], r["operator"],
                    f"{r['naive_ms_mean']:.4f}", f"{r['naive_ms_std']:.4f}",
                    f"{r['fused_ms_mean']:.4f}", f"{r['fused_ms_std']:.4f}",
                    f"{r['speedup']:.3f}", r["equal"]])
    if args.out:
        out.close()
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "bundle":
            return cmd_bundle(args)
        if args.command == "invert":
            return cmd_invert(args)
        return cmd_bench(args)
    except TrainingDiverged as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
