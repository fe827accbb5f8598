"""Command-line interface.

Exit codes: 0 success, 2 I/O failure, 3 schema/flag/validation failure,
4 model-file version mismatch or corruption.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from typing import Optional

import numpy as np

from .errors import PersistenceError, ValidationError
from .forest import ImputeConfig, TrainConfig, generate, impute, train
from .gbt import GBTConfig
from .metrics import (
    GowerSpace,
    MetricReport,
    coverage,
    efficiency,
    inference_stats,
    mad_diversity,
    mae_min_avg,
    wasserstein,
)
from .persist import load_model, save_model
from .process import ProcessKind
from .repro import DEFAULT_SEEDS, format_study, run_iris_study
from .schema import (
    dataset_from_text,
    infer_schema,
    is_na_token,
    load_dataset,
    parse_schema_file,
    read_csv,
    write_csv,
)

EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_PERSISTENCE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="treegen",
                description="Tabular data generation and imputation with "
                            "gradient-boosted tree diffusion / flow matching")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: available parallelism)")
        sp.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="fit a model on a CSV table")
    add_common(tr)
    tr.add_argument("--input", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--schema", default=None, help="JSON schema sidecar")
    tr.add_argument("--outcome", default=None,
                    help="outcome column (default: sidecar, else last column)")
    tr.add_argument("--process", choices=["vp", "flow"], default="flow")
    tr.add_argument("--n-t", type=int, default=50)
    tr.add_argument("--n-noise", type=int, default=100)
    tr.add_argument("--label-conditioning", choices=["auto", "on", "off"], default="auto")
    tr.add_argument("--trees", type=int, default=100)
    tr.add_argument("--max-depth", type=int, default=6)
    tr.add_argument("--cell-budget", type=int, default=200_000_000)

    ge = sub.add_parser("generate", help="sample rows from a fitted model")
    add_common(ge)
    ge.add_argument("--model", required=True)
    ge.add_argument("--out", required=True)
    ge.add_argument("--n-obs", type=int, required=True)
    ge.add_argument("--verbatim-noise", action="store_true",
                    help="alternative stochastic-step noise scaling (see README)")

    im = sub.add_parser("impute", help="fill missing cells with k completions")
    add_common(im)
    im.add_argument("--model", required=True)
    im.add_argument("--input", required=True)
    im.add_argument("--out-prefix", required=True)
    im.add_argument("--k", type=int, default=10, help="number of imputations")
    im.add_argument("--repaints", type=int, default=10)
    im.add_argument("--jump", type=int, default=5)
    im.add_argument("--verbatim-noise", action="store_true")

    ev = sub.add_parser("evaluate", help="score fake or imputed CSVs against real data")
    add_common(ev)
    ev.add_argument("--task", choices=["generation", "imputation"], required=True)
    ev.add_argument("--train", required=True, help="real training CSV")
    ev.add_argument("--test", required=True, help="real test CSV")
    ev.add_argument("--fake", action="append", default=[], help="generated CSV (repeatable)")
    ev.add_argument("--imputed", action="append", default=[], help="imputed CSV (repeatable)")
    ev.add_argument("--masked", default=None, help="incomplete CSV that was imputed")
    ev.add_argument("--schema", default=None)
    ev.add_argument("--outcome", default=None)
    ev.add_argument("--out", required=True, help="metric report CSV")

    rp = sub.add_parser("repro-iris", help="run the bundled-iris reproduction study")
    add_common(rp)
    rp.add_argument("--seeds", default=",".join(str(s) for s in DEFAULT_SEEDS),
                    help="comma-separated seeds")
    rp.add_argument("--mcar", type=float, default=0.2,
                    help="missing fraction for the incomplete-data variant")
    rp.add_argument("--skip-mcar", action="store_true",
                    help="skip the incomplete-data variant")
    rp.add_argument("--out", default=None, help="also write the report to a file")
    return p


def _load_schema_and_data(path, schema_path, outcome):
    header, cells = read_csv(path)
    if schema_path is not None:
        schema, sidecar_outcome = parse_schema_file(schema_path)
        if schema.names != list(header):
            raise ValidationError(f"{path}: header does not match schema sidecar")
        if outcome is not None:
            schema = schema.with_outcome(outcome)
        elif sidecar_outcome is None:
            schema = schema.with_outcome(header[-1])
    else:
        schema = infer_schema(header, cells, outcome=outcome or header[-1])
    return schema, dataset_from_text(schema, cells), cells


def cmd_train(args) -> int:
    t0 = time.time()
    _, data, _ = _load_schema_and_data(args.input, args.schema, args.outcome)
    conditioning = {"auto": None, "on": True, "off": False}[args.label_conditioning]
    cfg = TrainConfig(
        process=ProcessKind.VP_DIFFUSION if args.process == "vp" else ProcessKind.FLOW_MATCHING,
        n_t=args.n_t,
        n_noise=args.n_noise,
        label_conditioning=conditioning,
        gbt=GBTConfig(n_trees=args.trees, max_depth=args.max_depth),
        seed=args.seed,
        cell_budget=args.cell_budget,
    )
    model = train(data, cfg, threads=args.threads)
    save_model(args.out, model)
    n_labels = len(model.labels)
    print(f"model grid: {model.grid.n_t} levels x {model.p_enc} columns x "
          f"{n_labels} labels = {len(model.models)} forests")
    print(f"effective n_noise: {model.n_noise_effective}")
    print(f"wall time: {time.time() - t0:.1f}s")
    print(f"wrote {args.out}")
    return 0


def cmd_generate(args) -> int:
    model = load_model(args.model)
    data = generate(model, args.n_obs, seed=args.seed, threads=args.threads,
                    verbatim_noise=args.verbatim_noise)
    write_csv(args.out, data)
    print(f"seed: {args.seed}")
    print(f"wrote {args.out} ({data.n_rows} rows)")
    return 0


def cmd_impute(args) -> int:
    model = load_model(args.model)
    header, cells = read_csv(args.input)
    if model.schema.names != list(header):
        raise ValidationError(f"{args.input}: header does not match the model schema")
    data = dataset_from_text(model.schema, cells)
    cfg = ImputeConfig(k_imputations=args.k, repaint_r=args.repaints,
                       jump_j=args.jump, seed=args.seed)
    outs = impute(model, data, cfg, threads=args.threads,
                  verbatim_noise=args.verbatim_noise)
    # observed cells are re-rendered byte-identically to the input text
    override = {}
    for i, row in enumerate(cells):
        for j, text in enumerate(row):
            if not is_na_token(text):
                override[(i, j)] = text
    for idx, out in enumerate(outs, start=1):
        path = f"{args.out_prefix}_{idx}.csv"
        write_csv(path, out, text_override=override)
        print(f"wrote {path}")
    if len(outs) < args.k:
        print("note: input had no missing cells; wrote a single copy")
    return 0


def _aggregate(values):
    vals = [v for v in values if v is not None and not np.isnan(v)]
    return float(np.mean(vals)) if vals else None


def _write_report(path, task, reports: list[tuple[str, MetricReport]],
                  aggregate: MetricReport, notes: list[str]):
    cols = {
        "generation": ["w_train", "w_test", "cov_train", "cov_test",
                       "efficiency", "p_bias", "cov_rate"],
        "imputation": ["min_mae", "avg_mae", "w_train", "w_test", "mad",
                       "efficiency", "p_bias", "cov_rate"],
    }[task]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["set"] + cols)
        for name, rep in reports:
            w.writerow([name] + ["" if getattr(rep, c) is None else repr(float(getattr(rep, c)))
                                 for c in cols])
        w.writerow(["aggregate"] + ["" if getattr(aggregate, c) is None
                                    else repr(float(getattr(aggregate, c)))
                                    for c in cols])
    for note in notes:
        print(f"note: {note}")
    print(f"wrote {path}")


def cmd_evaluate(args) -> int:
    schema, train_ds, _ = _load_schema_and_data(args.train, args.schema, args.outcome)
    test_ds = load_dataset(args.test, schema=schema)
    notes = []
    outcome_numeric = schema.outcome is not None and schema.outcome.kind.is_numeric

    def stats_or_none(sets):
        if not outcome_numeric:
            notes.append("p_bias/cov_rate skipped: outcome is categorical "
                         "(linear-regression inference needs a numeric outcome)")
            return None, None
        return inference_stats(train_ds, sets)

    if args.task == "generation":
        if not args.fake:
            raise ValidationError("generation evaluation needs at least one --fake file")
        fakes = [load_dataset(p, schema=schema) for p in args.fake]
        space_train = GowerSpace.fit(train_ds)
        space_test = GowerSpace.fit(test_ds)
        reports = []
        for path, fake in zip(args.fake, fakes):
            p_bias, cov_rate = stats_or_none([fake]) if outcome_numeric else (None, None)
            reports.append((path, MetricReport(
                w_train=wasserstein(train_ds, fake, space_train),
                w_test=wasserstein(test_ds, fake, space_test),
                cov_train=coverage(train_ds, fake, space_train),
                cov_test=coverage(test_ds, fake, space_test),
                efficiency=efficiency(fake, test_ds),
                p_bias=p_bias, cov_rate=cov_rate,
            )))
        p_bias, cov_rate = stats_or_none(fakes)
        agg = MetricReport(
            w_train=_aggregate([r.w_train for _, r in reports]),
            w_test=_aggregate([r.w_test for _, r in reports]),
            cov_train=_aggregate([r.cov_train for _, r in reports]),
            cov_test=_aggregate([r.cov_test for _, r in reports]),
            efficiency=_aggregate([r.efficiency for _, r in reports]),
            p_bias=p_bias, cov_rate=cov_rate,
        )
        _write_report(args.out, args.task, reports, agg, notes)
        return 0

    if not args.imputed:
        raise ValidationError("imputation evaluation needs at least one --imputed file")
    if args.masked is None:
        raise ValidationError("imputation evaluation needs --masked (the incomplete CSV)")
    masked = load_dataset(args.masked, schema=schema)
    if masked.n_rows != train_ds.n_rows:
        raise ValidationError("--masked must have the same rows as --train")
    mask = masked.missing_mask()
    imputed = [load_dataset(p, schema=schema) for p in args.imputed]
    space_train = GowerSpace.fit(train_ds)
    space_test = GowerSpace.fit(test_ds)
    reports = []
    for path, imp in zip(args.imputed, imputed):
        mn, av = mae_min_avg([imp], train_ds, mask, space_train)
        p_bias, cov_rate = stats_or_none([imp]) if outcome_numeric else (None, None)
        reports.append((path, MetricReport(
            min_mae=mn, avg_mae=av,
            w_train=wasserstein(train_ds, imp, space_train),
            w_test=wasserstein(test_ds, imp, space_test),
            efficiency=efficiency(imp, test_ds),
            p_bias=p_bias, cov_rate=cov_rate,
        )))
    mn, av = mae_min_avg(imputed, train_ds, mask, space_train)
    mad = None
    if len(imputed) >= 2:
        mad = mad_diversity(imputed, mask, space_train)
    else:
        notes.append("MAD omitted: requires at least 2 imputations")
    p_bias, cov_rate = stats_or_none(imputed)
    agg = MetricReport(
        min_mae=mn, avg_mae=av,
        w_train=_aggregate([r.w_train for _, r in reports]),
        w_test=_aggregate([r.w_test for _, r in reports]),
        mad=mad,
        efficiency=_aggregate([r.efficiency for _, r in reports]),
        p_bias=p_bias, cov_rate=cov_rate,
    )
    _write_report(args.out, args.task, reports, agg, notes)
    return 0


def cmd_repro_iris(args) -> int:
    try:
        seeds = tuple(int(s) for s in args.seeds.split(",") if s != "")
    except ValueError:
        raise ValidationError(f"--seeds must be comma-separated integers, got {args.seeds!r}") from None
    if not seeds:
        raise ValidationError("--seeds must name at least one seed")
    if not 0.0 < args.mcar < 1.0:
        raise ValidationError("--mcar must be in (0, 1)")
    rows = run_iris_study(seeds=seeds, threads=args.threads,
                          include_mcar=not args.skip_mcar,
                          mcar_fraction=args.mcar, progress=print)
    report = format_study(rows)
    print(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report + "\n")
        print(f"wrote {args.out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "generate": cmd_generate,
    "impute": cmd_impute,
    "evaluate": cmd_evaluate,
    "repro-iris": cmd_repro_iris,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PersistenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PERSISTENCE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
