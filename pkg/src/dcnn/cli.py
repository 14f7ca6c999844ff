"""Command-line interface.

Exit codes: 0 success, 1 invalid input, 2 a numerical criterion was not met.
The default seed can be overridden with the ``DCNN_SEED`` environment variable.
"""

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import io
from .bench import DEFAULT_SIZES, run_bench
from .bounds import dc_compression_bound, network_svd_bound
from .decomposition import FactorSequence, full_decompose, huhtanen_decompose, linearizing_biases
from .initialization import InitConfig, covariance_probe, init_dcnn
from .layers import (
    Activation,
    ActivationPattern,
    DCLayer,
    DCNetwork,
    DenseReluNetwork,
    build_dcnn,
    complex_relu,
    dcnn_forward,
)
from .linalg import CirculantMatrix, DiagonalMatrix, NumericalError
from .training import (
    TrainConfig,
    TrainingDiverged,
    PiecewiseConstant,
    grad_check,
    relu_frequency_experiment,
    scaled_schedule,
    synth_regression,
    train,
    two_class,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2
SEED_ENV = "DCNN_SEED"

REGRESSION_PRESET = {"depth": 4, "width": 32, "relu_every": 0, "epochs": 40, "batch_size": 500,
                     "lr": 3e-3, "sigma_prime": 1e-2}
TWO_CLASS_PRESET = {"depth": 20, "width": 8, "relu_every": 3, "slope": 0.5, "epochs": 20,
                    "batch_size": 100, "lr": 1e-3, "sigma_prime": 1e-2}


class CliError(Exception):
    """Invalid command-line input."""


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _emit(report: dict, out: Optional[str]) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# -- commands ---------------------------------------------------------------

def cmd_decompose(args) -> int:
    A = io.load_array(args.matrix, 2)
    try:
        if args.mode == "huhtanen":
            seq = huhtanen_decompose(A, args.eps)
        else:
            seq = full_decompose(A, args.rank, args.eps)
    except NumericalError as exc:
        _emit({"status": "failed", "error": str(exc), "best_error": exc.best_error}, None)
        return EXIT_NUMERICAL
    prov = {"mode": args.mode, "rank": args.rank, "eps": args.eps, "source": os.path.basename(args.matrix)}
    io.save_model(args.out, seq, prov)
    err = seq.reconstruction_error
    ok = bool(np.isfinite(err) and err <= args.eps)
    _emit({"status": "ok" if ok else "failed", "factors": len(seq), "kinds": seq.kinds(),
           "reconstruction_error": err, "eps": args.eps}, None)
    return EXIT_OK if ok else EXIT_NUMERICAL


def _train_settings(args) -> dict:
    s = dict(REGRESSION_PRESET if args.preset == "regression" else
             TWO_CLASS_PRESET if args.preset == "two_class" else {})
    for key in ("depth", "width", "relu_every", "slope", "epochs", "batch_size", "lr", "sigma_prime"):
        value = getattr(args, key)
        if value is not None:
            s[key] = value
    s.setdefault("depth", 4)
    s.setdefault("relu_every", 3)
    s.setdefault("slope", 0.5)
    s.setdefault("epochs", 20)
    s.setdefault("batch_size", 50)
    s.setdefault("lr", 1e-3)
    s.setdefault("sigma_prime", 1e-2)
    return s


def cmd_train(args) -> int:
    data = io.load_dataset(args.dataset)
    eval_data = io.load_dataset(args.test_dataset) if args.test_dataset else None
    s = _train_settings(args)
    seed = default_seed() if args.seed is None else args.seed
    width = s.get("width") or max(data.d_in, data.d_out)
    steps = s["epochs"] * -(-len(data) // s["batch_size"])
    if args.schedule:
        schedule = PiecewiseConstant.parse(args.schedule)
        lr_schedule = list(zip(schedule.steps, schedule.rates))
    else:
        lr_schedule = scaled_schedule(s["lr"], max(steps, 1))
    loss = "mse" if data.task == "regression" else "xent"
    cfg = TrainConfig(epochs=s["epochs"], batch_size=s["batch_size"], lr_schedule=lr_schedule,
                      grad_clip_norm=args.grad_clip, seed=seed, loss=loss)
    if s["relu_every"] == 0:
        shape = DCNetwork([DCLayer.identity(width) for _ in range(s["depth"])])
    else:
        shape = build_dcnn(width, s["depth"], ActivationPattern(s["relu_every"], s["slope"]))
    net = init_dcnn(shape, InitConfig(seed=seed, sigma_prime=s["sigma_prime"]))
    config = {"settings": s, "seed": seed, "schedule": lr_schedule, "loss": loss,
              "grad_clip": args.grad_clip}
    status = EXIT_OK
    try:
        trained, log = train(net, data, cfg, eval_data)
    except TrainingDiverged as exc:
        trained, log = exc.checkpoint, exc.log
        sys.stderr.write(f"training diverged: {exc}\n")
        status = EXIT_NUMERICAL
    io.save_model(args.out, trained, {"seed": seed, "config_hash": io.config_hash(config),
                                      "config": config})
    if args.metrics:
        io.save_metrics(args.metrics, log)
    final = log.records[-1]
    summary = {"final": final, "epochs": s["epochs"], "steps": final["step"]}
    if args.preset == "regression" and status == EXIT_OK:
        floor = float(data.metadata.get("noise_var", 0.01)) * data.d_out
        summary["noise_floor"] = floor
        summary["criterion_met"] = final["loss"] <= 2 * floor
        if not summary["criterion_met"]:
            status = EXIT_NUMERICAL
    _emit(summary, None)
    return status


def cmd_init_probe(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    if args.input:
        x = io.load_array(args.input, 1).real
        if x.shape[0] != args.width:
            raise CliError("input length does not match --width")
    else:
        x = np.random.default_rng(seed).normal(size=args.width)
    rep = covariance_probe(x, args.depth, args.samples, InitConfig(seed=seed))
    d = rep.to_dict()
    d["offdiag_within_4se"] = rep.max_offdiag_abs <= 4 * rep.offdiag_standard_error
    d["diag_within_5pct"] = rep.max_diag_rel_error <= 0.05
    _emit(d, args.out)
    return EXIT_OK if d["offdiag_within_4se"] and d["diag_within_5pct"] else EXIT_NUMERICAL


def cmd_bound(args) -> int:
    model, _ = io.load_model(args.model)
    if not isinstance(model, DenseReluNetwork):
        raise CliError("bound needs a dense model file")
    X = io.load_array(args.inputs, 2)
    if args.dc:
        rep = dc_compression_bound(model, args.rank, X, args.eps)
    else:
        rep = network_svd_bound(model, args.rank, X)
    _emit(rep.to_dict(), args.out)
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


def cmd_linearize(args) -> int:
    model, _ = io.load_model(args.model)
    if not isinstance(model, FactorSequence):
        raise CliError("linearize needs a factor_sequence model file")
    X = io.load_array(args.samples, 2)
    n = model.width
    if X.shape[1] != n:
        raise CliError(f"samples have dimension {X.shape[1]}, model width is {n}")
    b = io.load_array(args.bias, 1) if args.bias else np.zeros(n, dtype=complex)
    chain = list(reversed(model.factors))
    betas = linearizing_biases(chain, b, X)
    layers = []
    for f, beta in zip(chain, betas):
        if isinstance(f, CirculantMatrix):
            layers.append(DCLayer(DiagonalMatrix.identity(n), f, beta, Activation.relu()))
        else:
            layers.append(DCLayer(f, CirculantMatrix.identity(n), beta, Activation.relu()))
    net = DCNetwork(layers)
    target = complex_relu(model.matvec(X) + b)
    deviation = float(np.abs(dcnn_forward(net, X) - target).max())
    io.save_model(args.out, net, {"source": os.path.basename(args.model)})
    ok = deviation <= args.tol
    _emit({"status": "ok" if ok else "failed", "max_abs_deviation": deviation, "tol": args.tol,
           "depth": net.depth, "biases": [io.encode_complex(beta) for beta in betas]}, args.report)
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_bench(args) -> int:
    rep = run_bench(args.sizes, args.reps)
    _emit(rep.to_dict(), args.out)
    if not rep.slopes_ok:
        sys.stderr.write(f"warning: complexity fit outside the expected range "
                         f"(dense {rep.dense_slope:.2f}, circulant {rep.circulant_slope:.2f})\n")
    return EXIT_OK if rep.params_ok else EXIT_NUMERICAL


def cmd_gen_data(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    if args.kind == "regression":
        data = synth_regression(args.num_samples, args.d_in, args.d_out, seed, args.noise_var)
    else:
        data = two_class(args.num_samples, args.d_in, seed, args.flip)
    io.save_dataset(args.out, data)
    summary = {"kind": args.kind, "num_samples": len(data), "d_in": data.d_in, "seed": seed}
    if args.kind == "two_class":
        summary["positive_fraction"] = float(np.mean(data.targets))
    _emit(summary, None)
    return EXIT_OK


def cmd_grad_check(args) -> int:
    model, _ = io.load_model(args.model)
    if not isinstance(model, DCNetwork):
        raise CliError("grad-check needs a dcnn model file")
    seed = default_seed() if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    x = rng.normal(size=model.width) + 1j * rng.normal(size=model.width)
    err = grad_check(model, x, args.h, seed=seed, corrupt=args.corrupt)
    ok = err <= args.tol
    _emit({"status": "ok" if ok else "failed", "max_rel_error": err, "tol": args.tol}, None)
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_experiment(args) -> int:
    seed = default_seed() if args.seed is None else args.seed
    p = TWO_CLASS_PRESET
    data = two_class(args.train + args.test, args.d_in, seed)
    train_data, test_data = data.split(args.train)
    steps = args.epochs * -(-args.train // p["batch_size"])
    cfg = TrainConfig(epochs=args.epochs, batch_size=p["batch_size"],
                      lr_schedule=scaled_schedule(args.lr, steps), seed=seed, loss="xent")
    rows = relu_frequency_experiment(args.depths, args.patterns, args.slopes, train_data, test_data,
                                     cfg, width=args.d_in, sigma_prime=p["sigma_prime"])
    lines = ["depth\trelu_every\tslope\ttest_accuracy\ttrain_loss\tdiverged"]
    lines += ["\t".join(str(r[k]) for k in ("depth", "relu_every", "slope", "test_accuracy",
                                            "train_loss", "diverged")) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="factor a matrix into diagonal and circulant factors")
    p.add_argument("matrix")
    p.add_argument("--rank", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--mode", choices=["rank_based", "huhtanen"], default="rank_based")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train a DC network on a CSV dataset")
    p.add_argument("dataset")
    p.add_argument("--test-dataset")
    p.add_argument("--preset", choices=["regression", "two_class"])
    p.add_argument("--depth", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--relu-every", type=int, help="0 for a linear network")
    p.add_argument("--slope", type=float, help="0 for plain ReLU")
    p.add_argument("--sigma-prime", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="base rate of the default four-stage schedule")
    p.add_argument("--schedule", help="explicit schedule, e.g. 0:1e-3,400:5e-4")
    p.add_argument("--grad-clip", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics", help="JSON-lines metrics output")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("init-probe", help="Monte-Carlo output covariance at initialization")
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--input", help="fixed input vector file (default: random from the seed)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_init_probe)

    p = sub.add_parser("bound", help="rank-k truncation error bound for a dense model")
    p.add_argument("model")
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--dc", action="store_true", help="also build and measure the DC compression")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("linearize", help="ReLU biases that make a factor chain act linearly on samples")
    p.add_argument("model")
    p.add_argument("samples")
    p.add_argument("--bias", help="final bias vector file (default zero)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("bench", help="dense vs circulant matvec timings and parameter counts")
    p.add_argument("--sizes", type=_int_list, default=list(DEFAULT_SIZES))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-data", help="generate a synthetic CSV dataset")
    p.add_argument("--kind", choices=["regression", "two_class"], required=True)
    p.add_argument("--num-samples", type=int, default=2000)
    p.add_argument("--d-in", type=int, default=8)
    p.add_argument("--d-out", type=int, default=4)
    p.add_argument("--noise-var", type=float, default=0.01)
    p.add_argument("--flip", type=float, default=0.1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("grad-check", help="compare backprop with finite differences")
    p.add_argument("model")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--corrupt", action="store_true", help="inject a gradient fault (negative test)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("experiment", help="test accuracy over depths and activation placements")
    p.add_argument("--depths", type=_int_list, default=[1, 5, 10, 20])
    p.add_argument("--patterns", type=_int_list, default=[1, 3])
    p.add_argument("--slopes", type=_float_list, default=[0.0, 0.5])
    p.add_argument("--d-in", type=int, default=8)
    p.add_argument("--train", type=int, default=4000)
    p.add_argument("--test", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (CliError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
