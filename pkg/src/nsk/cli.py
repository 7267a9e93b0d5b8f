"""Command-line entry point: one subcommand per pipeline stage plus ``run``.

Exit status 0 on success, 2 on configuration or usage errors, 3 on data
errors. Every failure prints a single ``E_<CODE>: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    FeatureMatrix,
    FmriSeries,
    PipelineConfig,
    list_recordings,
    load_config,
    read_feature_matrix,
    read_recording,
    read_volume_series,
    save_config,
    write_feature_matrix,
    write_recording,
    write_volume_series,
)
from .errors import ConfigError, DataError, DegenerateVariance, NskError
from .eval import (
    cross_validate,
    delong_test,
    effect_table,
    make_subject_folds,
    report_from_dict,
    subject_scores,
    write_effect_table,
)
from .fmriprep import group_slice_table, max_diff_map, preprocess_series, write_slice_table
from .learn import Dataset, save_model, train
from .microstate import gfp_values
from .pipeline import build_feature_matrix, clean_epochs, subject_means
from .render import report_render
from .synth import SynthSpec, occurrence_effect, spec_from_dict, write_synth
from .timefreq import gfp_to_image, save_image

EFFECTS_IN_REPORT = 20


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dataset(matrix: FeatureMatrix) -> Dataset:
    if matrix.values.shape[0] == 0:
        raise DataError("feature matrix has no rows")
    return Dataset(matrix.values, matrix.y, np.array(matrix.subject_ids))


def _roster(matrix: FeatureMatrix) -> list[tuple[str, int]]:
    ids, labels, _ = subject_means(matrix)
    return list(zip(ids, labels.tolist()))


def _read_all(in_dir) -> list:
    recs = [read_recording(p) for p in list_recordings(in_dir)]
    if not recs:
        raise DataError(f"no recordings found in {in_dir}")
    ids = [r.subject_id for r in recs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate subject ids among recordings")
    return recs


def evaluate_learners(matrix: FeatureMatrix, cfg: PipelineConfig, jobs: int = 1) -> dict:
    """Cross-validate every configured learner on shared subject folds and
    attach pairwise DeLong tests and the effect-size table."""
    ds = _dataset(matrix)
    plan = make_subject_folds(_roster(matrix), cfg.cv_folds, cfg.seed)
    reports = {}
    for name in cfg.learners:
        reports[name] = cross_validate(ds, plan, name, cfg.classifier_params.get(name, {}), jobs)
    comparisons = []
    for a, b in itertools.combinations(cfg.learners, 2):
        ids_a, sa, ya = subject_scores(reports[a])
        _, sb, _ = subject_scores(reports[b])
        entry = {"a": a, "b": b, "unit": "subject"}
        try:
            entry.update(delong_test(sa, sb, ya).as_dict())
        except DegenerateVariance as exc:
            entry.update({"error": exc.code, "message": str(exc)})
        comparisons.append(entry)
    ids, y, means = subject_means(matrix)
    effects = effect_table(matrix.columns, means, y)
    for name, rep in reports.items():
        rep.delong = [c for c in comparisons if name in (c["a"], c["b"])]
        rep.effects = effects[:EFFECTS_IN_REPORT]
        rep.meta = {"n_rows": int(ds.n), "n_subjects": len(ids), "n_features": len(matrix.columns),
                    "folds": [list(f) for f in plan.folds],
                    "params": cfg.classifier_params.get(name, {})}
    return {"plan": plan, "reports": reports, "delong": comparisons, "effects": effects}


def _run_pipeline(cfg: PipelineConfig, in_dir, out_dir, jobs: int = 1) -> dict:
    cfg.validate()
    recs = _read_all(in_dir)
    for rec in recs:
        cfg.validate(rec.fs_hz)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.json")
    _write_json(out / "ingest.json", [
        {"subject_id": r.subject_id, "label": r.label, "fs_hz": r.fs_hz,
         "n_samples": r.n_samples, "n_channels": r.n_channels} for r in recs])

    matrix, logs = build_feature_matrix(recs, cfg, jobs)
    _write_json(out / "preprocess.json", logs)
    write_feature_matrix(matrix, out / "features.csv")
    if cfg.cwt_images:
        _write_images(recs, cfg, out / "images")

    result = evaluate_learners(matrix, cfg, jobs)
    plan = result["plan"]
    _write_json(out / "folds.json", {"seed": plan.seed, "folds": [list(f) for f in plan.folds],
                                     "class_counts": plan.class_counts()})
    _write_json(out / "delong.json", result["delong"])
    write_effect_table(result["effects"], out / "effects.csv")
    for name, rep in result["reports"].items():
        rep.write(out)
        report_render(rep, out / "figures")
    return result


def run_pipeline(config: PipelineConfig | str | Path | None, in_dir, out_dir,
                 jobs: int | None = None) -> int:
    """End-to-end run; returns the process exit status."""
    try:
        cfg = config if isinstance(config, PipelineConfig) else (
            load_config(config) if config is not None else PipelineConfig())
        _run_pipeline(cfg, in_dir, out_dir, jobs or cfg.jobs)
    except NskError as exc:
        _fail(exc)
        return exc.exit_status
    return 0


def _write_images(recs, cfg: PipelineConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    n = 0
    for rec in recs:
        epochs, _ = clean_epochs(rec, cfg)
        for e in epochs:
            img, parts = gfp_to_image(gfp_values(e.samples), e.fs_hz)
            save_image(img, out / f"{rec.subject_id}_w{e.window_index:03d}",
                       {"subject_id": rec.subject_id, "label": rec.label,
                        "window_index": e.window_index, "flat": bool(parts["flat"])})
            n += 1
    return n


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _fail(exc: NskError) -> None:
    msg = " ".join(str(exc).split())
    print(f"{exc.code}: {msg}", file=sys.stderr)


def _seed(args, cfg: PipelineConfig) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NSK_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"NSK_SEED must be an integer, got {env!r}") from None
    return cfg.seed


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    cfg = dataclasses.replace(cfg, seed=_seed(args, cfg))
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    return cfg.validate()


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_ingest(args, cfg):
    out = _out(args)
    rows = []
    for rec in _read_all(args.input):
        cfg.validate(rec.fs_hz)
        write_recording(rec, out / f"{rec.subject_id}.eegr")
        rows.append({"subject_id": rec.subject_id, "label": rec.label, "fs_hz": rec.fs_hz,
                     "n_samples": rec.n_samples, "n_channels": rec.n_channels})
    _write_json(out / "ingest.json", rows)


def cmd_preprocess(args, cfg):
    out = _out(args)
    logs = []
    for rec in _read_all(args.input):
        epochs, dropped = clean_epochs(rec, cfg)
        for e in epochs:
            write_recording(dataclasses.replace(rec, samples=e.samples),
                            out / f"{rec.subject_id}_w{e.window_index:03d}.eegr")
        logs.append({"subject_id": rec.subject_id, "kept": len(epochs), "dropped": dropped})
    _write_json(out / "preprocess.json", logs)


def cmd_features(args, cfg):
    out = _out(args)
    matrix, logs = build_feature_matrix(_read_all(args.input), cfg, cfg.jobs)
    write_feature_matrix(matrix, out / "features.csv")
    _write_json(out / "preprocess.json", logs)


def cmd_cwt(args, cfg):
    n = _write_images(_read_all(args.input), cfg, _out(args))
    print(f"wrote {n} images")


def cmd_train(args, cfg):
    matrix = read_feature_matrix(args.features)
    params = cfg.classifier_params.get(args.learner, {})
    model = train(args.learner, _dataset(matrix), seed=cfg.seed, **params)
    save_model(model, _out(args) / f"model_{args.learner}.nskm")


def cmd_evaluate(args, cfg):
    matrix = read_feature_matrix(args.features)
    if args.learner:
        cfg = dataclasses.replace(cfg, learners=list(args.learner)).validate()
    out = _out(args)
    result = evaluate_learners(matrix, cfg, cfg.jobs)
    _write_json(out / "delong.json", result["delong"])
    for rep in result["reports"].values():
        rep.write(out)


def cmd_delong(args, cfg):
    reports = [report_from_dict(json.loads(Path(p).read_text())) for p in (args.report_a, args.report_b)]
    ids_a, sa, ya = subject_scores(reports[0])
    ids_b, sb, _ = subject_scores(reports[1])
    if ids_a != ids_b:
        raise DataError("the two reports scored different subjects")
    res = delong_test(sa, sb, ya).as_dict()
    res.update({"a": reports[0].learner, "b": reports[1].learner, "unit": "subject"})
    _write_json(_out(args) / "delong.json", res)
    print(json.dumps(res, sort_keys=True))


def cmd_effects(args, cfg):
    matrix = read_feature_matrix(args.features)
    _, y, means = subject_means(matrix)
    write_effect_table(effect_table(matrix.columns, means, y, top=args.top), _out(args) / "effects.csv")


def cmd_fmri_prep(args, cfg):
    out = _out(args)
    for path in args.volumes:
        series = preprocess_series(read_volume_series(path), clahe=not args.no_clahe, clip=args.clip)
        write_volume_series(series, out / f"{series.subject_id}.vol")


def cmd_fmri_diff(args, cfg):
    out = _out(args)
    by_group: dict = {}
    for path in args.volumes:
        series = read_volume_series(path)
        if not series.normalized:
            series = preprocess_series(series, clahe=False)
        dm = max_diff_map(series)
        write_volume_series(FmriSeries(series.subject_id, series.label, dm.maps[None], True),
                            out / f"{series.subject_id}_diff.vol")
        by_group.setdefault(series.label, []).append(dm)
    write_slice_table(group_slice_table(by_group), out / "slice_table.csv")


def cmd_synth(args, cfg):
    if args.spec:
        try:
            raw = json.loads(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synth spec: {exc}") from None
        spec = spec_from_dict(raw)
        if args.seed is not None or os.environ.get("NSK_SEED") is not None:
            spec = dataclasses.replace(spec, seed=cfg.seed)
    else:
        effects = () if args.no_effect else occurrence_effect(args.multiplier)
        spec = SynthSpec(n_per_group=args.n_per_group, duration_s=args.duration,
                         seed=cfg.seed, effects=effects)
    write_synth(spec.validate(), _out(args))


def cmd_report(args, cfg):
    rep = report_from_dict(json.loads(Path(args.report).read_text()))
    for path in report_render(rep, _out(args)):
        print(path)


def cmd_run(args, cfg):
    _run_pipeline(cfg, args.input, _out(args), cfg.jobs)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="RNG seed (falls back to NSK_SEED, then the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, help="maximum worker processes")

    p = _Parser(prog="nsk", description="EEG microstate and fMRI difference-map pipeline")
    p.add_argument("--version", action="version", version=f"nsk {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(func=func)
        return sp

    add("ingest", cmd_ingest, "validate recordings and rewrite them as EEGR").add_argument("input")
    add("preprocess", cmd_preprocess, "segment, reject, filter and normalize").add_argument("input")
    add("features", cmd_features, "microstate feature matrix").add_argument("input")
    add("cwt", cmd_cwt, "GFP scalogram images per window").add_argument("input")
    sp = add("train", cmd_train, "fit one learner on every row")
    sp.add_argument("features")
    sp.add_argument("--learner", default="rf", choices=["dt", "rf", "svm", "mlp"])
    sp = add("evaluate", cmd_evaluate, "subject-level cross-validation")
    sp.add_argument("features")
    sp.add_argument("--learner", action="append", choices=["dt", "rf", "svm", "mlp"])
    sp = add("delong", cmd_delong, "paired AUC test between two reports")
    sp.add_argument("report_a")
    sp.add_argument("report_b")
    sp = add("effects", cmd_effects, "per-feature group statistics")
    sp.add_argument("features")
    sp.add_argument("--top", type=int)
    sp = add("fmri-prep", cmd_fmri_prep, "normalize, median-filter and CLAHE volume series")
    sp.add_argument("volumes", nargs="+")
    sp.add_argument("--clip", type=float, default=2.0)
    sp.add_argument("--no-clahe", action="store_true")
    sp = add("fmri-diff", cmd_fmri_diff, "max-difference maps and the per-slice group table")
    sp.add_argument("volumes", nargs="+")
    sp = add("synth", cmd_synth, "synthetic two-group EEG recordings")
    sp.add_argument("--spec", help="SynthSpec JSON")
    sp.add_argument("--n-per-group", type=int, default=40)
    sp.add_argument("--duration", type=float, default=30.0)
    sp.add_argument("--multiplier", type=float, default=occurrence_effect()[0].multiplier)
    sp.add_argument("--no-effect", action="store_true")
    add("report", cmd_report, "render tables and SVG plots from a report").add_argument("report")
    add("run", cmd_run, "the whole EEG pipeline").add_argument("input")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        args.func(args, cfg)
    except NskError as exc:
        _fail(exc)
        return exc.exit_status
    except OSError as exc:
        print(f"E_IO: {' '.join(str(exc).split())}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
