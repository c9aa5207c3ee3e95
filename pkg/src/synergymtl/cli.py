"""Command-line pipeline: synth -> ingest -> features -> train / stability / evaluate.

Every command writes its reports (JSON + CSV) and a ``manifest.json`` into
``--out``. Exit codes: 0 success, 2 usage or configuration error, 3 data
error, 4 numerical failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .dataio import (
    ColumnSchema,
    PairedDataset,
    VisitPair,
    assemble_longitudinal,
    clean_cohort,
    default_targets,
    parse_cohort,
    parse_target,
    write_cohort_csv,
)
from .errors import ConfigError, SynergyError
from .evaluation import (
    ExperimentConfig,
    compare_measures,
    write_long_csv,
    write_tables_csv,
)
from .features import (
    MEASURES,
    DesignMatrix,
    build_pair_features,
    original_features,
    read_design_csv,
    standardize,
    trend_array,
    write_design_csv,
)
from .solvers import SOLVERS, SolverConfig, fit
from .stability import (
    StabilityConfig,
    default_grid,
    rank_features,
    run_stability,
    write_stable_csv,
)
from .synth import SynthConfig, cohort_targets, generate_cohort

log = logging.getLogger("synergymtl")


def dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Collects inputs and artifacts of one command for its manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.inputs = {}
        self.artifacts = []
        self.config = {}
        self.start = time.perf_counter()

    def input(self, path):
        if path:
            self.inputs[os.path.basename(path)] = sha256_file(path)

    def path(self, name):
        p = os.path.join(self.out, name)
        self.artifacts.append(name)
        return p

    def finish(self):
        manifest = {
            "tool": "synergymtl",
            "version": __version__,
            "command": self.command,
            "argv": self.args.argv,
            "seed": self.args.seed,
            "config": self.config,
            "inputs": self.inputs,
            "artifacts": {a: sha256_file(os.path.join(self.out, a))
                          for a in sorted(set(self.artifacts))},
            "timings": {"wall_seconds": round(time.perf_counter() - self.start, 6)},
        }
        dump_json(os.path.join(self.out, "manifest.json"), manifest)
        for a in sorted(set(self.artifacts)):
            print(os.path.join(self.out, a))


def _load_dataset(path):
    return PairedDataset.from_dict(load_json(path))


def _design_for(dataset, measure):
    if measure == "original":
        return original_features(dataset.baseline, dataset.roi_names)
    trends = trend_array(dataset.baseline, dataset.follow, dataset.dt_days)
    return build_pair_features(trends, measure, dataset.roi_names)


def _read_targets(path):
    design, ids = read_design_csv(path)
    return design.values, design.column_names, ids


def _penalty_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--penalty expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        out[name.strip()] = float(value)
    return out


def cmd_synth(args):
    run = Run(args, "synth")
    data = load_json(args.config) if args.config else {}
    run.input(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = SynthConfig.from_dict(data)
    run.config = cfg.to_dict()
    cohort, truth = generate_cohort(cfg)
    schema = ColumnSchema(scores=list(cohort.score_names), rois=list(cohort.roi_names),
                          targets=[f"{s}@{v}" for s, v in cohort_targets(cfg)])
    write_cohort_csv(run.path("cohort.csv"), cohort, schema)
    dump_json(run.path("schema.json"), schema.to_dict())
    dump_json(run.path("ground_truth.json"), truth.to_dict())
    run.finish()


def cmd_ingest(args):
    run = Run(args, "ingest")
    run.input(args.input)
    run.input(args.schema)
    schema = ColumnSchema.load(args.schema)
    span = VisitPair.parse(args.span)
    cohort = parse_cohort(args.input, schema)
    if args.targets:
        targets = [parse_target(t) for t in args.targets.split(",")]
    elif schema.targets:
        targets = [parse_target(t) for t in schema.targets]
    else:
        targets = default_targets(cohort, span)
    run.config = {"span": str(span), "targets": [f"{s}@{v}" for s, v in targets],
                  "schema": schema.to_dict()}
    cleaned, report = clean_cohort(cohort, span, targets)
    dump_json(run.path("cleaning_report.json"), report.to_dict())
    dataset = assemble_longitudinal(cleaned, span, targets)
    write_cohort_csv(run.path("cleaned_cohort.csv"), cleaned,
                     ColumnSchema(scores=schema.scores, rois=cleaned.roi_names))
    dump_json(run.path("dataset.json"), dataset.to_dict())
    log.info("ingest: %d -> %d subjects, %d ROI features, %d imputed cells",
             report.n_subjects_in, report.n_subjects_out, len(cleaned.roi_names),
             report.imputed_cells)
    run.finish()


def cmd_features(args):
    run = Run(args, "features")
    run.input(args.dataset)
    dataset = _load_dataset(args.dataset)
    run.config = {"measure": args.measure}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        design = _design_for(dataset, args.measure)
    for w in caught:
        log.warning("%s", w.message)
    write_design_csv(run.path("design.csv"), design, dataset.subject_ids)
    targets = DesignMatrix(dataset.Y, list(dataset.target_labels))
    write_design_csv(run.path("targets.csv"), targets, dataset.subject_ids)
    dump_json(run.path("features.json"), {
        "measure": design.measure, "n": design.shape[0], "d": design.shape[1],
        "span": str(dataset.span), "info": design.info,
    })
    log.info("features: %s, %d x %d", args.measure, *design.shape)
    run.finish()


def _xy(args, run):
    run.input(args.features)
    run.input(args.targets)
    X, ids = read_design_csv(args.features)
    Y, labels, ids_y = _read_targets(args.targets)
    if ids is not None and ids_y is not None and ids != ids_y:
        raise ConfigError("feature and target files list different subjects")
    return X, Y, labels


def cmd_train(args):
    run = Run(args, "train")
    X, Y, labels = _xy(args, run)
    data = load_json(args.config) if args.config else {}
    run.input(args.config)
    cfg = SolverConfig.from_dict(data)
    penalties = dict(cfg.penalties)
    penalties.update(_penalty_overrides(args.penalty))
    cfg = SolverConfig(penalties=penalties, max_iter=cfg.max_iter, tol=cfg.tol,
                       step0=cfg.step0, shrink=cfg.shrink)
    run.config = {"solver": args.solver, **cfg.to_dict(), "standardize": not args.raw}
    if args.raw:
        Xs, Ys = X.values, Y
        scaling = None
    else:
        Xs, Ys, stats = standardize(X, Y)
        scaling = {"x_mean": stats.x_mean.tolist(), "x_std": stats.x_std.tolist(),
                   "y_mean": stats.y_mean.tolist(), "constant": stats.constant.tolist()}
        Xs = Xs.values
    result = fit(args.solver, Xs, Ys, penalties, cfg)
    out = result.to_dict()
    out["task_labels"] = labels
    out["feature_names"] = list(X.column_names)
    out["scaling"] = scaling
    dump_json(run.path("fit_result.json"), out)
    write_design_csv(run.path("weights.csv"),
                     DesignMatrix(result.W.T, list(X.column_names)), labels)
    log.info("train: %s, %d iterations, converged=%s, objective=%.6g", args.solver,
             result.iterations, result.converged, result.objective)
    run.finish()


def cmd_stability(args):
    run = Run(args, "stability")
    X, Y, labels = _xy(args, run)
    data = load_json(args.config) if args.config else {}
    run.input(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    Xs, Ys, _ = standardize(X, Y)
    Xs = Xs.values
    if "grid" not in data:
        data["grid"] = default_grid(Xs, Ys, data.get("solver", "cfsgl"))
    cfg = StabilityConfig.from_dict(data)
    run.config = cfg.to_dict()
    ckpt = args.checkpoint or os.path.join(args.out, "checkpoints")
    log.info("stability: %d grid points x %d subsamples = %d fits", len(cfg.grid),
             cfg.n_subsamples, len(cfg.grid) * cfg.n_subsamples)
    report = run_stability(Xs, Ys, cfg, feature_names=X.column_names, task_labels=labels,
                           jobs=args.jobs, checkpoint_dir=ckpt)
    d, k, G = report.counts.shape
    dump_json(run.path("stability_report.json"),
              report.to_dict(include_frequencies=d * k * G <= 2_000_000))
    if d * k * G > 2_000_000:
        np.save(run.path("counts.npy"), report.counts)
    definitions = load_json(args.definitions) if args.definitions else None
    write_stable_csv(run.path("stable_pairs.csv"), report, definitions)
    if args.target_count:
        order = rank_features(report)[:args.target_count]
        with open(run.path("screened_features.csv"), "w", encoding="utf-8") as fh:
            fh.write("rank,feature,name\n")
            for rank, f in enumerate(order):
                fh.write(f"{rank},{f},{X.column_names[f]}\n")
    log.info("stability: %d fits, %d failures, %d stable features", len(cfg.grid) *
             cfg.n_subsamples, len(report.failures), len(report.stable_union()))
    run.finish()


def cmd_evaluate(args):
    run = Run(args, "evaluate")
    run.input(args.dataset)
    dataset = _load_dataset(args.dataset)
    data = load_json(args.experiment_config) if args.experiment_config else {}
    run.input(args.experiment_config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(data)
    designs = {}
    if args.features:
        for path in args.features:
            run.input(path)
            X, ids = read_design_csv(path)
            if ids is not None and ids != dataset.subject_ids:
                raise ConfigError(f"{path} lists different subjects than the dataset")
            meta = os.path.join(os.path.dirname(path), "features.json")
            label = load_json(meta)["measure"] if os.path.exists(meta) else \
                os.path.splitext(os.path.basename(path))[0]
            designs[label] = X
    else:
        for m in args.measures.split(","):
            m = m.strip()
            if m not in MEASURES:
                raise ConfigError(f"unknown measure {m!r}")
            designs[m] = _design_for(dataset, m)
    run.config = {"experiment": cfg.to_dict(), "feature_modes": list(designs)}
    tables = compare_measures(designs, dataset.Y, cfg, dataset.target_labels, args.jobs)
    for label, table in tables.items():
        dump_json(run.path(f"metrics_{label}.json"), table.to_dict())
        write_tables_csv(run.path(f"metrics_{label}.csv"), {label: table})
    write_tables_csv(run.path("metrics_table.csv"), tables)
    dump_json(run.path("metrics_table.json"), {k: t.to_dict() for k, t in tables.items()})
    write_long_csv(run.path("metrics_long.csv"), tables)
    for label, table in tables.items():
        log.info("evaluate: %-12s nMSE %.3f±%.3f  wR %.3f±%.3f", label,
                 *table.rows["nMSE"], *table.rows["wR"])
    run.finish()


def cmd_replay(args):
    manifest = load_json(args.manifest)
    return main(manifest["argv"])


def build_parser():
    p = argparse.ArgumentParser(prog="synergymtl", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=None, help="override every seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic cohort")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="parse, clean and pair a cohort CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--span", default="BL:M06")
    s.add_argument("--targets", help="comma list like mmse@BL,mmse@M06")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("features", help="build a design matrix")
    s.add_argument("--dataset", required=True)
    s.add_argument("--measure", choices=MEASURES, default="cosine")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    s = sub.add_parser("train", help="fit one solver")
    s.add_argument("--features", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--solver", choices=sorted(SOLVERS), default="tgl")
    s.add_argument("--config")
    s.add_argument("--penalty", action="append", help="name=value, repeatable")
    s.add_argument("--raw", action="store_true", help="skip standardization")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("stability", help="stability selection sweep")
    s.add_argument("--features", required=True)
    s.add_argument("--targets", required=True)
    s.add_argument("--config")
    s.add_argument("--checkpoint", help="cell checkpoint dir (default OUT/checkpoints)")
    s.add_argument("--target-count", type=int, help="also write the top-N screened features")
    s.add_argument("--definitions", help="JSON map ROI id -> readable name")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("evaluate", help="repeated cross-validated comparison")
    s.add_argument("--dataset", required=True)
    s.add_argument("--experiment-config")
    s.add_argument("--features", action="append",
                   help="design.csv from the features command, repeatable")
    s.add_argument("--measures", default=",".join(MEASURES))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    s.add_argument("manifest")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = args.func(args)
    except SynergyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
