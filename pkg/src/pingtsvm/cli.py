"""
Command-line front end.

    pingtsvm [--seed N] [--format table|csv|jsonl] [--quiet] COMMAND ...

Commands: synth, train, predict, evaluate, gridsearch, bench. Exit status is
0 on success, 1 on a data or runtime failure and 2 on a usage error. In csv
and jsonl mode stdout carries only machine-readable records; messages go to
stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .bench import SCENARIOS, BenchError, BenchSpec, run as run_bench
from .dataset import (DEFAULT_LABEL_MAP, GENERATORS, LABEL_FLIP, DatasetError, NoiseSpec,
                      apply_standardizer, fit_standardizer, inject_label_noise, load_csv,
                      load_features, save_csv, scan_label_tokens)
from .kernel import GAUSSIAN, KINDS, LINEAR, WIDTH_CONVENTIONS, KernelSpec
from .metrics import NA, confusion, report
from .model import (ModelFormatError, PinGtsvmParams, TrainingError, load_model, save_model,
                    train)
from .modelselect import (DEFAULT_C_VALUES, DEFAULT_SIGMA_VALUES, DEFAULT_TAU_VALUES, GridSpec,
                          grid_search)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

FORMATS = ("table", "csv", "jsonl")


class CliError(Exception):
    """A runtime failure reported with exit status 1."""


# -- argument types ------------------------------------------------------------

def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"must be a finite number > 0, got {text}")
    return v


def _unit_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {text}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _count(minimum):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if v < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {v}")
        return v
    return parse


def _value_list(item_type):
    def parse(text):
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return tuple(item_type(t.strip()) for t in items)
    return parse


def _seed_list(text):
    """Comma list of seeds; ``a-b`` ranges are inclusive."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, dash, hi = part.partition("-")
        try:
            if dash:
                a, b = int(lo), int(hi)
                if a > b:
                    raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed {part!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("no seeds given")
    if min(seeds) < 0:
        raise argparse.ArgumentTypeError("seeds must be non-negative")
    return tuple(seeds)


# -- output ----------------------------------------------------------------------

def _cell_text(value, fmt):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return NA
    if isinstance(value, float):
        return f"{value:.4f}" if fmt == "table" else repr(value)
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def format_rows(columns, rows, fmt: str) -> list[str]:
    """Render dict rows as text lines in one of the output formats."""
    if fmt == "jsonl":
        return [json.dumps({c: _json_value(r.get(c)) for c in columns}) for r in rows]
    cells = [[_cell_text(r.get(c), fmt) for c in columns] for r in rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(cells)
        return buf.getvalue().splitlines()
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells]
    return lines


class _Output:
    def __init__(self, args):
        self.fmt = args.format
        self.quiet = args.quiet

    def info(self, message):
        if not self.quiet:
            print(message, file=sys.stderr)

    def emit(self, lines, path=None):
        text = "\n".join(lines) + "\n" if lines else ""
        if path is None or path == "-":
            sys.stdout.write(text)
        else:
            try:
                Path(path).write_text(text, encoding="utf-8")
            except OSError as exc:
                raise CliError(f"{path}: cannot write: {exc.strerror}") from exc


# -- label handling ------------------------------------------------------------

def _label_map_for(path, positive: str | None):
    """
    Token -> +/-1 map for a training file.

    Without ``positive`` the default vocabulary applies. With it, the file
    must hold at most two distinct tokens and ``positive`` becomes +1.
    """
    tokens = scan_label_tokens(path)
    if positive is None:
        unknown = [t for t in tokens if t not in DEFAULT_LABEL_MAP]
        if unknown:
            raise CliError(f"{path}: label token {unknown[0]!r} is not in the default vocabulary; "
                           "pass --positive-label")
        return dict(DEFAULT_LABEL_MAP), tokens
    others = [t for t in tokens if t != positive]
    if len(set(others)) > 1:
        raise CliError(f"{path}: more than two label tokens: {', '.join(tokens)}")
    mapping = {positive: 1}
    mapping.update({t: -1 for t in others})
    return mapping, tokens


def _output_tokens(label_map, tokens):
    """The token written for each class: the first one seen in the file, else the default."""
    out = {1: "busy", -1: "free"}
    for sign in (-1, 1):
        for t in tokens:
            if label_map.get(t) == sign:
                out[sign] = t
                break
    return out


# -- commands ----------------------------------------------------------------------

def cmd_synth(args, out: _Output) -> int:
    gen = args.generator
    if gen == "blobs":
        ds = GENERATORS[gen](args.n, args.d, args.separation, args.sigma, args.seed)
    else:
        ds = GENERATORS[gen](args.n, args.noise, args.seed)
    if args.label_noise > 0:
        ds = inject_label_noise(ds, NoiseSpec(LABEL_FLIP, rate=args.label_noise, seed=args.seed))
    save_csv(ds, args.out)
    row = {"generator": gen, "rows": ds.n, "d": ds.d, "path": str(args.out)}
    if out.fmt == "table":
        out.info(f"wrote {ds.n} rows ({ds.d} features) to {args.out}")
    else:
        out.emit(format_rows(tuple(row), [row], out.fmt))
    return EXIT_OK


def _params_from(args) -> PinGtsvmParams:
    kernel = KernelSpec(args.kernel, args.sigma) if args.kernel == GAUSSIAN else KernelSpec(LINEAR)
    tau1 = args.tau if args.tau1 is None else args.tau1
    tau2 = args.tau if args.tau2 is None else args.tau2
    return PinGtsvmParams(args.c1, args.c2, tau1, tau2, kernel, args.ridge)


def cmd_train(args, out: _Output) -> int:
    params = _params_from(args)
    label_map, tokens = _label_map_for(args.train, args.positive_label)
    ds = load_csv(args.train, label_map)
    std = None
    if args.standardize:
        std = fit_standardizer(ds)
        ds = apply_standardizer(std, ds)
    start = time.perf_counter()
    try:
        model = train(ds, params, label_map=_output_tokens(label_map, tokens), standardizer=std)
    except TrainingError as exc:
        raise CliError(f"training failed: {exc}") from exc
    wall = time.perf_counter() - start
    save_model(model, args.model_out)
    row = {"model": str(args.model_out), "rows": ds.n, "d": ds.d, "train_time_s": wall,
           "objective1": model.objective1, "objective2": model.objective2}
    if out.fmt == "table":
        if not out.quiet:
            print(f"trained on {ds.n} rows in {wall:.3f} s; model written to {args.model_out}")
    else:
        out.emit(format_rows(tuple(row), [row], out.fmt))
    return EXIT_OK


def _load_model(path):
    try:
        return load_model(path)
    except ModelFormatError as exc:
        raise CliError(str(exc)) from exc


def _label_lookup(model):
    """Token -> +/-1 for the model's own tokens plus the default vocabulary."""
    lookup = {tok: sign for sign, tok in model.label_map.items()}
    for tok, sign in DEFAULT_LABEL_MAP.items():
        lookup.setdefault(tok, sign)
    return lookup


def _read_rows(model, path):
    X, tokens = load_features(path, model.d)
    lookup = _label_lookup(model)
    for i, tok in enumerate(tokens):
        # a trailing field that is no label token means the row has the wrong width
        if tok is not None and tok not in lookup:
            raise CliError(f"{path}: data row {i + 1}: expected {model.d} features "
                           f"optionally followed by a label, got unknown token {tok!r}")
    return X, tokens, lookup


def cmd_predict(args, out: _Output) -> int:
    model = _load_model(args.model)
    X, _, _ = _read_rows(model, args.data)
    pred = model.predict(X)
    out.emit([model.label_map[int(p)] for p in pred], args.out)
    return EXIT_OK


def cmd_evaluate(args, out: _Output) -> int:
    model = _load_model(args.model)
    X, tokens, lookup = _read_rows(model, args.data)
    if any(t is None for t in tokens):
        raise CliError(f"{args.data}: evaluation needs a label token on every row")
    y = [lookup[t] for t in tokens]
    positive = 1
    if args.positive_label is not None:
        if args.positive_label not in lookup:
            raise CliError(f"positive label {args.positive_label!r} matches neither class")
        positive = lookup[args.positive_label]
    cm = confusion(y, model.predict(X), positive=positive)
    rep = report(cm)
    counts = [("tp", cm.tp), ("fp", cm.fp), ("tn", cm.tn), ("fn", cm.fn)]
    if out.fmt == "table":
        lines = [f"positive class: {model.label_map[positive]}",
                 "",
                 "                predicted +  predicted -",
                 f"actual +        {cm.tp:<11d}  {cm.fn:<11d}",
                 f"actual -        {cm.fp:<11d}  {cm.tn:<11d}",
                 ""]
        rows = [{"metric": name, "value": None if v is None else float(v),
                 "exact": NA if v is None else str(v)} for name, v in rep.items()]
        out.emit(lines + format_rows(("metric", "value", "exact"), rows, "table"))
        return EXIT_OK
    rows = [{"metric": name, "value": n, "exact": str(n)} for name, n in counts]
    rows += [{"metric": name, "value": None if v is None else float(v),
              "exact": NA if v is None else str(v)} for name, v in rep.items()]
    out.emit(format_rows(("metric", "value", "exact"), rows, out.fmt))
    return EXIT_OK


def _grid_from(args) -> GridSpec:
    return GridSpec(kernel_kind=args.kernel, c_values=args.c_values, sigma_values=args.sigma_values,
                    tau_values=args.tau_values, tie_c=not args.untie_c, tie_tau=not args.untie_tau,
                    width_convention=args.width_convention, ridge=args.ridge)


def _best_flags(params: PinGtsvmParams) -> str:
    flags = [f"--kernel {params.kernel.kind}"]
    if params.kernel.kind == GAUSSIAN:
        flags.append(f"--sigma {params.kernel.sigma!r}")
    flags += [f"--c1 {params.c1!r}", f"--c2 {params.c2!r}",
              f"--tau1 {params.tau1!r}", f"--tau2 {params.tau2!r}"]
    return " ".join(flags)


def cmd_gridsearch(args, out: _Output) -> int:
    grid = _grid_from(args)
    label_map, _ = _label_map_for(args.train, args.positive_label)
    ds = load_csv(args.train, label_map)
    if args.standardize:
        ds = apply_standardizer(fit_standardizer(ds), ds)
    try:
        results = grid_search(ds, grid, k=args.folds, seed=args.seed, n_jobs=args.jobs)
    except DatasetError as exc:
        raise CliError(str(exc)) from exc
    columns = ("rank", "grid_index", "kernel", "sigma", "c1", "c2", "tau1", "tau2",
               "mean_accuracy", "std_accuracy", "status", "fold_accuracies")
    rows = []
    for rank, r in enumerate(results, start=1):
        p = r.params
        rows.append({"rank": rank, "grid_index": r.grid_index, "kernel": p.kernel.kind,
                     "sigma": p.kernel.sigma if p.kernel.kind == GAUSSIAN else None,
                     "c1": p.c1, "c2": p.c2, "tau1": p.tau1, "tau2": p.tau2,
                     "mean_accuracy": r.mean_accuracy, "std_accuracy": r.std_accuracy,
                     "status": r.status,
                     "fold_accuracies": ";".join(_cell_text(a, "csv") for a in r.fold_accuracies)})
    best = results[0].params
    best_row = {"kernel": best.kernel.kind,
                "sigma": best.kernel.sigma if best.kernel.kind == GAUSSIAN else None,
                "c1": best.c1, "c2": best.c2, "tau1": best.tau1, "tau2": best.tau2}
    if out.fmt == "csv":
        # the trailer is an ordinary record so csv readers need no special casing
        trailer = {c: "" for c in columns}
        trailer.update(best_row, rank="best")
        lines = format_rows(columns, rows + [trailer], out.fmt)
    elif out.fmt == "jsonl":
        lines = format_rows(columns, rows, out.fmt) + [json.dumps({"best": best_row})]
    else:
        lines = format_rows(columns, rows, out.fmt) + [f"# best: {_best_flags(best)}"]
    out.emit(lines)
    return EXIT_OK


def cmd_bench(args, out: _Output) -> int:
    seeds = args.seeds if args.seeds is not None else tuple(args.seed + i for i in range(20))
    overrides = {"seeds": seeds, "selection_seed": args.seed, "n_jobs": args.jobs}
    if args.train is not None:
        overrides["train_csv"] = args.train
    try:
        spec = BenchSpec.default(args.scenario, **overrides)
    except BenchError as exc:
        raise CliError(str(exc)) from exc
    table = run_bench(spec)
    if out.fmt == "table":
        lines = format_rows(table.columns, table.rows, out.fmt)
        if table.summary:
            lines += [""] + format_rows(table.summary_columns, table.summary, out.fmt)
    else:
        # one record stream; the record column tells cell rows from paired-summary rows
        extra = tuple(c for c in table.summary_columns if c not in table.columns)
        columns = ("record",) + table.columns + extra
        rows = [dict(r, record="cell") for r in table.rows]
        rows += [dict(r, record="paired") for r in table.summary]
        if out.fmt == "jsonl":
            lines = [json.dumps({"record": r["record"],
                                 **{k: _json_value(v) for k, v in r.items() if k != "record"}})
                     for r in rows]
        else:
            lines = format_rows(columns, [{c: r.get(c, "") for c in columns} for r in rows], out.fmt)
    out.emit(lines, args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _common_parser(defaults: bool) -> argparse.ArgumentParser:
    # the global flags are accepted before or after the command name
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=_count(0), default=d(42), help="random seed (default 42)")
    p.add_argument("--format", choices=FORMATS, default=d("table"), help="output format")
    p.add_argument("--quiet", action="store_true", default=d(False), help="suppress messages")
    return p


def _add_model_flags(p):
    p.add_argument("--kernel", choices=KINDS, default=LINEAR)
    p.add_argument("--sigma", type=_positive_float, default=1.0, help="Gaussian width")
    p.add_argument("--c1", type=_positive_float, default=1.0)
    p.add_argument("--c2", type=_positive_float, default=1.0)
    p.add_argument("--tau", type=_unit_float, default=0.5, help="tau for both surfaces")
    p.add_argument("--tau1", type=_unit_float, default=None)
    p.add_argument("--tau2", type=_unit_float, default=None)
    p.add_argument("--ridge", type=_nonneg_float, default=1e-8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pingtsvm", parents=[_common_parser(True)],
        description="Twin-surface kernel classifier with pinball-loss slacks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    common = [_common_parser(False)]

    p = sub.add_parser("synth", parents=common, help="write a synthetic dataset CSV")
    p.add_argument("generator", choices=sorted(GENERATORS))
    p.add_argument("--n", type=_count(1), default=50, help="points per class")
    p.add_argument("--d", type=_count(1), default=2, help="dimension (blobs)")
    p.add_argument("--separation", type=_nonneg_float, default=6.0, help="center distance (blobs)")
    p.add_argument("--sigma", type=_nonneg_float, default=1.0, help="cluster spread (blobs)")
    p.add_argument("--noise", type=_nonneg_float, default=0.1,
                   help="coordinate noise (crossplanes, moons)")
    p.add_argument("--label-noise", type=_unit_float, default=0.0, help="fraction of labels flipped")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=common, help="train and save a model")
    p.add_argument("--train", required=True)
    _add_model_flags(p)
    p.add_argument("--model-out", required=True)
    p.add_argument("--positive-label", default=None, help="token of the +1 class")
    p.add_argument("--standardize", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=common, help="write one label token per input row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-", help="output path (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=common, help="confusion matrix and metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--positive-label", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", parents=common, help="k-fold CV over a parameter grid")
    p.add_argument("--train", required=True)
    p.add_argument("--kernel", choices=KINDS, default=LINEAR)
    p.add_argument("--folds", type=_count(2), default=5)
    p.add_argument("--untie-c", action="store_true", help="search c1 and c2 independently")
    p.add_argument("--untie-tau", action="store_true", help="search tau1 and tau2 independently")
    p.add_argument("--c-values", type=_value_list(_positive_float), default=DEFAULT_C_VALUES)
    p.add_argument("--sigma-values", type=_value_list(_positive_float),
                   default=DEFAULT_SIGMA_VALUES)
    p.add_argument("--tau-values", type=_value_list(_unit_float), default=DEFAULT_TAU_VALUES)
    p.add_argument("--width-convention", choices=WIDTH_CONVENTIONS, default="sigma")
    p.add_argument("--ridge", type=_nonneg_float, default=1e-8)
    p.add_argument("--positive-label", default=None)
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--jobs", type=_count(0), default=1, help="worker processes (0: all cores)")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("bench", parents=common, help="run a bench scenario")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--seeds", type=_seed_list, default=None,
                   help="seed list such as 0-19 or 1,5,9 (default: 20 seeds from --seed)")
    p.add_argument("--train", default=None, help="use a CSV instead of the scenario generator")
    p.add_argument("--jobs", type=_count(0), default=1)
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    out = _Output(args)
    try:
        return args.func(args, out)
    except (CliError, DatasetError, ModelFormatError, BenchError) as exc:
        print(f"pingtsvm: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, OSError) as exc:
        print(f"pingtsvm: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
