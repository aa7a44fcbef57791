"""Command-line front end: ``avhighlight <command> [options]``.

Exit codes: 0 success, 1 runtime error (one JSON line on stderr), 2 usage error.
Config files are JSON objects or ``key=value`` lines; nested keys use dots
(``adam.learning_rate=1e-4``). Any config key can be overridden on the command
line as ``--key value``; precedence is flag > config file > default.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .autodiff import load_checkpoint
from .autodiff.params import HLPS_VERSION
from .data.bundle import HLFB_VERSION, read_bundle, write_bundle
from .errors import ContractError, NumericalError, ParseError
from .model import ModelSpec

VERSION = f"avhighlight {__version__} (HLFB v{HLFB_VERSION}, HLPS v{HLPS_VERSION})"
COMMANDS = ("synth", "mfcc", "resample", "train", "evaluate", "study-single", "study-ablation", "finetune",
            "agreement", "chance", "report")


class UsageError(Exception):
    pass


# -- config handling -------------------------------------------------------------

def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if "," in text:
            return [_parse_value(p) for p in text.split(",")]
        return text


def _set_dotted(d: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise UsageError(f"config key {key!r} conflicts with a scalar")
    d[parts[-1]] = value


def read_config(path) -> dict:
    """JSON object or key=value lines (``#`` comments allowed)."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    text = p.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise UsageError(f"{path}: config must be a JSON object")
        return data
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        _set_dotted(out, key, _parse_value(value))
    return out


def parse_overrides(extra: Sequence[str]) -> dict:
    """``--key value`` pairs left over after argparse."""
    out: dict = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise UsageError(f"unexpected argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for {tok}")
            key, value = tok[2:], extra[i + 1]
            i += 2
        _set_dotted(out, key.replace("-", "_"), _parse_value(value))
    return out


def _merge(base: dict, over: Mapping) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = _merge(dict(out[k]), v)
        else:
            out[k] = v
    return out


def _build(cls, values: Mapping, what: str):
    unknown = set(values) - set(cls.__dataclass_fields__)
    if unknown:
        raise UsageError(f"unknown {what} keys: {', '.join(sorted(unknown))}")
    return cls.from_dict(values)


# dotted spellings of loss settings
CONFIG_ALIASES = {
    "ccc.variant": "ccc_variant",
    "ranking.pair_policy": "pair_policy",
    "ranking.max_pairs": "max_pairs",
    "ranking.seed": "pair_seed",
    "ranking.margin": "margin",
}


def _resolve_aliases(values: dict) -> dict:
    out = {}
    for key, value in values.items():
        if key in ("ccc", "ranking") and isinstance(value, Mapping):
            for sub, v in value.items():
                name = CONFIG_ALIASES.get(f"{key}.{sub}")
                if name is None:
                    raise UsageError(f"unknown config key {key}.{sub}")
                out[name] = v
        else:
            out[key] = value
    return out


def experiment_config(args, extra):
    from .harness import ExperimentConfig

    values = _resolve_aliases(_merge(_resolve_aliases(read_config(args.config)), _resolve_aliases(extra)))
    if args.seed is not None:
        values["seed"] = args.seed
    if getattr(args, "k", None):
        values["ks"] = args.k
    return _build(ExperimentConfig, values, "experiment config")


def _ks(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be positive")
    return ks


# -- outputs ---------------------------------------------------------------------

def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_manifest(out: Path, command: str, config=None, **extra) -> None:
    from .harness import run_manifest, write_manifest

    write_manifest(out, run_manifest(config, command=command, **extra))


def _spec_path(checkpoint: Path) -> Path:
    return checkpoint.with_name("model.json")


def _load_model(checkpoint, model_path=None):
    checkpoint = Path(checkpoint)
    spec_file = Path(model_path) if model_path else _spec_path(checkpoint)
    if not spec_file.is_file():
        raise UsageError(f"model spec not found: {spec_file} (pass --model)")
    return ModelSpec.from_json(spec_file.read_text()), load_checkpoint(checkpoint)


# -- commands --------------------------------------------------------------------

def cmd_synth(args, extra) -> None:
    from .data.dataset import read_manifest, write_synthetic
    from .data.dataset import write_manifest as write_dataset_manifest
    from .data.synth import SynthConfig
    from .harness import run_manifest

    values = _merge(read_config(args.config), extra)
    if args.seed is not None:
        values["seed"] = args.seed
    config = _build(SynthConfig, values, "synth config")
    out = _out_dir(args.out)
    write_synthetic(out, config)
    manifest = read_manifest(out)
    provenance = run_manifest(None, command="synth", seed=config.seed)
    write_dataset_manifest(out, [v["video_id"] for v in manifest["videos"]], bool(manifest["annotations"]),
                           {"synth_config": manifest["synth_config"], "provenance": provenance})


def cmd_mfcc(args, extra) -> None:
    from .data.mfcc import extract_mfcc, fit_to_frames, read_wav

    if extra:
        raise UsageError(f"unexpected arguments {' '.join(extra)}")
    rate, samples = read_wav(args.wav)
    m = extract_mfcc(samples, rate)
    if args.frames is not None:
        m = fit_to_frames(m, args.frames)
    out = _out_dir(args.out)
    np.save(out / "mfcc.npy", m)
    _write_manifest(out, "mfcc", input=str(args.wav), frames=int(m.shape[0]))


def cmd_resample(args, extra) -> None:
    from .data.resample import resample_to_30fps

    if extra:
        raise UsageError(f"unexpected arguments {' '.join(extra)}")
    bundle = read_bundle(args.bundle)
    out = _out_dir(args.out)
    write_bundle(out / f"{bundle.video_id}.hlfb", resample_to_30fps(bundle, args.mode))
    _write_manifest(out, "resample", input=str(args.bundle), mode=args.mode)


def _dataset(path, label_source="labels"):
    from .data.dataset import load_dataset

    return load_dataset(path, label_source=label_source)


def cmd_train(args, extra) -> None:
    from .harness import _template, derive_seed, kfold_split, train

    config = experiment_config(args, extra)
    ds = _dataset(args.data)
    spec = _template(ds, None)
    folds = kfold_split(ds.videos(), config.folds, derive_seed(config.seed, "folds"))
    if not 0 <= args.fold < len(folds):
        raise UsageError(f"--fold must be in [0, {len(folds) - 1}]")
    tr, va = folds[args.fold]
    out = _out_dir(args.out)
    result = train(spec, ds.subset(tr), config, validation=ds.subset(va),
                   seed=derive_seed(config.seed, "train", args.fold), checkpoint=out / "best.hlps")
    (out / "history.csv").write_text(result.history.to_csv())
    (out / "model.json").write_text(spec.to_json() + "\n")
    _write_manifest(out, "train", config, fold=args.fold, splits=folds.to_dict(),
                    best_epoch=result.history.best_epoch)


def cmd_evaluate(args, extra) -> None:
    from .harness import evaluate

    if extra:
        raise UsageError(f"unexpected arguments {' '.join(extra)}")
    spec, params = _load_model(args.checkpoint, args.model)
    ds = _dataset(args.data, args.labels)
    rep = evaluate(params, spec, ds, args.k, args.variant)
    if args.out is None:
        sys.stdout.write(rep.to_csv())
        return
    out = _out_dir(args.out)
    (out / "evaluation.csv").write_text(rep.to_csv())
    (out / "evaluation.json").write_text(rep.to_json())
    _write_manifest(out, "evaluate", checkpoint=str(args.checkpoint), ks=list(args.k), variant=args.variant)


def _study_outputs(out: Path, table, name: str) -> None:
    from .harness import CVResult, boxplot_summary

    (out / name).write_text(table.to_csv())
    (out / "fig2_boxplots.json").write_text(json.dumps(boxplot_summary([table]), indent=2, sort_keys=True) + "\n")
    for col, res in table.results.items():
        if isinstance(res, CVResult):
            for f in res.folds:
                (out / f"history_{col}_fold{f.fold}.csv").write_text(f.history.to_csv())


def cmd_study_single(args, extra) -> None:
    from .harness import run_single_feature_study

    config = experiment_config(args, extra)
    table = run_single_feature_study(_dataset(args.data), config, jobs=args.jobs)
    out = _out_dir(args.out)
    _study_outputs(out, table, "table1.csv")
    _write_manifest(out, "study-single", config, notes=table.notes)


def cmd_study_ablation(args, extra) -> None:
    from .harness import run_ablation_study

    config = experiment_config(args, extra)
    ranking = [r for r in (args.ranking or "").split(",") if r]
    exclusions = [e for e in args.exclude.split(",") if e] if args.exclude else None
    table = run_ablation_study(_dataset(args.data), config, exclusions=exclusions, ranking=ranking, jobs=args.jobs)
    out = _out_dir(args.out)
    _study_outputs(out, table, "table2.csv")
    _write_manifest(out, "study-ablation", config, notes=table.notes, ranking=ranking)


def cmd_finetune(args, extra) -> None:
    from .harness import finetune

    config = experiment_config(args, extra)
    spec, params = _load_model(args.checkpoint, args.model)
    ds = _dataset(args.data, args.labels)
    result = finetune(params, ds, config, spec, jobs=args.jobs)
    out = _out_dir(args.out)
    table = result.table()
    table.results = {"baseline": result.baseline, "fine_tuning": result.finetuned}
    _study_outputs(out, table, "table3.csv")
    _write_manifest(out, "finetune", config, checkpoint=str(args.checkpoint), splits=result.folds.to_dict())


def cmd_agreement(args, extra) -> None:
    from .agreement import read_annotations_csv
    from .data.dataset import read_manifest
    from .data.segments import read_labels_csv
    from .harness import agreement_study

    if extra:
        raise UsageError(f"unexpected arguments {' '.join(extra)}")
    root = Path(args.data)
    manifest = read_manifest(root)
    if not manifest.get("annotations"):
        raise ContractError(f"{root}: dataset has no annotations")
    ann = read_annotations_csv(root / manifest["annotations"])
    labels = read_labels_csv(root / manifest["labels"])
    ref = {vid: [r.label for r in recs] for vid, recs in labels.items()}
    result = agreement_study(ann, ref)
    out = _out_dir(args.out)
    (out / "fig3_histograms.csv").write_text(result.histograms_csv(args.bins))
    (out / "agreement.csv").write_text(result.per_video_csv())
    _write_manifest(out, "agreement", data=str(root), bins=args.bins)


def cmd_chance(args, extra) -> None:
    from .harness import chance_column

    config = experiment_config(args, extra)
    if args.trials is not None:
        config = config.replace(chance_trials=args.trials)
    ds = _dataset(args.data, args.labels)
    col = chance_column(ds, config)
    lines = ["metric,k,chance"] + [f"{m},{k},{v!r}" for (m, k), v in col.items()]
    text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return
    out = _out_dir(args.out)
    (out / "chance.csv").write_text(text)
    _write_manifest(out, "chance", config)


REPORT_FILES = ("table1.csv", "table2.csv", "table3.csv", "fig3_histograms.csv", "agreement.csv")


def cmd_report(args, extra) -> None:
    if extra:
        raise UsageError(f"unexpected arguments {' '.join(extra)}")
    out = _out_dir(args.out)
    boxplots, sources = {}, []
    for run in args.runs:
        run = Path(run)
        if not run.is_dir():
            raise UsageError(f"run directory not found: {run}")
        for name in REPORT_FILES:
            if (run / name).is_file():
                shutil.copyfile(run / name, out / name)
        fig2 = run / "fig2_boxplots.json"
        if fig2.is_file():
            boxplots.update(json.loads(fig2.read_text()))
        sources.append(str(run))
    (out / "fig2_boxplots.json").write_text(json.dumps(boxplots, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "report", runs=sources)


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avhighlight", description=__doc__.splitlines()[0],
                                epilog="Exit codes: 0 success, 1 runtime error, 2 usage error.")
    p.add_argument("--version", action="version", version=VERSION)
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def command(name, help, config=True, out_required=True):
        sp = sub.add_parser(name, help=help, description=help)
        if config:
            sp.add_argument("--config", help="JSON or key=value config file")
            sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", required=out_required, help="output (run) directory")
        return sp

    sp = command("synth", "generate a synthetic dataset directory")
    sp.set_defaults(func=cmd_synth)

    sp = command("mfcc", "extract MFCCs from a 16 kHz mono WAV", config=False)
    sp.add_argument("--wav", required=True)
    sp.add_argument("--frames", type=int, help="trim or pad to 4 x FRAMES rows")
    sp.set_defaults(func=cmd_mfcc)

    sp = command("resample", "align a 29.97 fps bundle to 30 fps", config=False)
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--mode", choices=("nearest", "linear"), default="nearest")
    sp.set_defaults(func=cmd_resample)

    sp = command("train", "train the full model on one fold with best-epoch selection")
    sp.add_argument("--data", required=True)
    sp.add_argument("--fold", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = command("evaluate", "score a dataset with a checkpoint", config=False, out_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--model", help="model.json (default: next to the checkpoint)")
    sp.add_argument("--data", required=True)
    sp.add_argument("--k", type=_ks, default=[5, 10])
    sp.add_argument("--variant", choices=("paper_literal", "standard"), default="paper_literal")
    sp.add_argument("--labels", choices=("labels", "annotations"), default="labels")
    sp.set_defaults(func=cmd_evaluate)

    for name, func, help in (("study-single", cmd_study_single, "cross-validated single-feature study"),
                             ("study-ablation", cmd_study_ablation, "cross-validated leave-one-out study")):
        sp = command(name, help)
        sp.add_argument("--data", required=True)
        sp.add_argument("--k", type=_ks)
        sp.add_argument("--jobs", type=int, default=1)
        if name == "study-ablation":
            sp.add_argument("--exclude", help="comma-separated modalities to leave out (default: all)")
            sp.add_argument("--ranking", help="comma-separated ranking-loss columns: 'all' or modalities")
        sp.set_defaults(func=func)

    sp = command("finetune", "fine-tune a checkpoint on a highlight dataset, with a scratch baseline")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--model")
    sp.add_argument("--data", required=True)
    sp.add_argument("--labels", choices=("labels", "annotations"), default="annotations")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_finetune)

    sp = command("agreement", "rater agreement and correlation with reference labels", config=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--bins", type=int, default=10)
    sp.set_defaults(func=cmd_agreement)

    sp = command("chance", "Monte Carlo chance level of NDCG@k and P@k", out_required=False)
    sp.add_argument("--data", required=True)
    sp.add_argument("--k", type=_ks)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--labels", choices=("labels", "annotations"), default="labels")
    sp.set_defaults(func=cmd_chance)

    sp = command("report", "collect study outputs into one directory", config=False)
    sp.add_argument("runs", nargs="+", help="run directories to collect")
    sp.set_defaults(func=cmd_report)
    return p


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        overrides = parse_overrides(extra) if args.func not in (cmd_mfcc, cmd_resample, cmd_evaluate,
                                                                cmd_agreement, cmd_report) else list(extra)
        args.func(args, overrides)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"avhighlight {args.command}: error: {exc}\n")
        return 2
    except (ContractError, ParseError, NumericalError, OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
