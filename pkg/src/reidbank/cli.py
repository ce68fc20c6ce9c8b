"""Command-line entry point.

Commands: gen, train-switch, learn-metrics, split, eval, pipeline,
diffusion-demo.  Every command accepts --seed, --config <path>, and
--out <path>; values resolve as defaults < config file < flags, and the
resolved configuration is written back as ``manifest.txt`` so any run can
be reproduced byte-for-byte from its manifest.

Exit status: 0 on success, 1 on validation errors, 2 on computation
errors.  Reports are written as JSON plus delimited CSV, with matplotlib
figures rendered alongside; a human-readable table goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import read_feature_file, write_distance_matrix, write_feature_file
from .encoders import read_encoder, train_condition_encoder, write_encoder, encode_set
from .evalproto import (
    EXCLUDE_NONE,
    EXCLUSIONS,
    PROTOCOLS,
    cmc,
    filter_valid_queries,
    make_split,
    meta_from_samples,
    read_split,
    write_split,
)
from .experiments import (
    ComputationError,
    DiffusionDemoConfig,
    PipelineConfig,
    run_diffusion_demo,
    run_pipeline,
)
from .illum import read_classifier, train_switch, write_classifier
from .metric import PairingPolicy, build_metric_bank, MetricBank, read_matrix, write_matrix
from .seeding import stage_seed
from .smb import assemble, distance_matrix
from .ulisynth import (
    GeneratorConfig,
    generate_source_domain,
    select_subset_by_illumination,
    simulate_target_domain,
)

_INT_LIST = "int_list"
_FLOAT_LIST = "float_list"
_OPT_FLOAT = "optional_float"

# key -> (type, default, help) per command
_SCHEMAS: dict[str, dict[str, tuple]] = {
    "gen": {
        "seed": (int, 0, "run seed"),
        "dim": (int, 1024, "feature dimension"),
        "identities": (int, 115, "number of identities"),
        "backgrounds": (int, 8, "number of backgrounds (cameras)"),
        "zrot": (int, 8, "number of z-rotation steps"),
        "illuminations": (_INT_LIST, (0, 1, 2, 3, 4, 5, 6, 7), "illumination labels"),
        "gain_dims": (int, 256, "leading dimensions scaled by illumination"),
        "baseline": (float, 5.0, "brightness baseline inside the gain dims"),
        "identity_leak": (float, 0.4, "identity-signal share kept inside the gain dims"),
        "jitter": (float, 0.5, "per-sample exposure jitter inside the gain dims"),
        "noise_scale": (float, 0.5, "isotropic noise scale"),
        "kind": (str, "source", "source (full grid) or target (weighted draw)"),
        "weights": (_FLOAT_LIST, (), "condition weights for kind=target, aligned with illuminations"),
    },
    "train-switch": {
        "seed": (int, 0, "run seed (recorded; training is deterministic)"),
        "features": (str, "", "source feature file"),
        "labels": (_INT_LIST, (), "condition illumination labels, most common first"),
    },
    "learn-metrics": {
        "seed": (int, 0, "run seed for pair sampling"),
        "features": (str, "", "source feature file"),
        "labels": (_INT_LIST, (), "condition illumination labels, most common first"),
        "encoder_kind": (str, "whitening", "identity or whitening"),
        "reg": (_OPT_FLOAT, None, "KISSME ridge; blank selects the trace-scaled default"),
        "pair_cap": (int, 50_000, "maximum pairs per matrix"),
    },
    "split": {
        "seed": (int, 0, "split seed"),
        "features": (str, "", "target feature file"),
        "protocol": (str, "generic", f"one of {', '.join(PROTOCOLS)}"),
        "query_fraction": (float, 1.0, "identity fraction used as queries (generic protocol)"),
    },
    "eval": {
        "seed": (int, 0, "run seed (recorded)"),
        "features": (str, "", "target feature file"),
        "split": (str, "", "split JSON produced by the split command"),
        "switch": (str, "", "switch classifier file"),
        "encoders": (str, "", "comma-separated encoder files, condition order"),
        "matrices": (str, "", "comma-separated matrix files covering every condition pair"),
        "ks": (_INT_LIST, (1, 5, 10), "CMC ranks"),
        "exclusion": (str, EXCLUDE_NONE, f"gallery exclusion policy: {', '.join(EXCLUSIONS)}"),
        "save_distances": (int, 0, "1 writes distances.csv"),
    },
    "pipeline": {
        "seed": (int, 7, "run seed"),
        "dim": (int, 32, "feature dimension"),
        "n_conditions": (int, 2, "number of deployment conditions N"),
        "source_identities": (int, 60, "source identities"),
        "source_backgrounds": (int, 4, "source backgrounds"),
        "source_zrot": (int, 4, "source z-rotation steps"),
        "source_illuminations": (_INT_LIST, (0, 1, 2, 3, 4, 5, 6, 7), "source illumination labels"),
        "target_identities": (int, 100, "target identities"),
        "target_backgrounds": (int, 2, "target backgrounds"),
        "target_zrot": (int, 4, "target z-rotation steps"),
        "target_labels": (_INT_LIST, (2, 5), "true target illumination labels"),
        "target_weights": (_FLOAT_LIST, (0.6, 0.4), "target condition weights"),
        "gain_dims": (int, 8, "leading dimensions scaled by illumination"),
        "baseline": (float, 5.0, "brightness baseline inside the gain dims"),
        "identity_leak": (float, 0.4, "identity-signal share kept inside the gain dims"),
        "jitter": (float, 0.5, "per-sample exposure jitter inside the gain dims"),
        "noise_scale": (float, 0.5, "isotropic noise scale"),
        "encoder_kind": (str, "whitening", "identity or whitening"),
        "reg": (_OPT_FLOAT, None, "KISSME ridge; blank selects the trace-scaled default"),
        "pair_cap": (int, 50_000, "maximum pairs per matrix"),
        "protocol": (str, "generic", "split protocol"),
        "query_fraction": (float, 1.0, "identity fraction used as queries (generic protocol)"),
        "ks": (_INT_LIST, (1, 5, 10), "CMC ranks"),
        "exclusion": (str, EXCLUDE_NONE, "gallery exclusion policy"),
    },
    "diffusion-demo": {
        "seed": (int, 7, "run seed"),
        "dim": (int, 16, "vector dimension"),
        "samples": (int, 200, "translated sample count"),
        "steps": (int, 100, "total diffusion steps T"),
        "beta_start": (float, 5e-4, "first beta of the linear schedule"),
        "beta_end": (float, 0.1, "last beta of the linear schedule"),
        "source_mean": (float, 0.0, "source Gaussian mean"),
        "source_scale": (float, 1.0, "source Gaussian scale"),
        "target_mean": (float, 5.0, "target Gaussian mean"),
        "target_scale": (float, 1.0, "target Gaussian scale"),
        "tes_fractions": (_FLOAT_LIST, (0.4, 0.6, 0.8, 1.0), "encoding depths as fractions of T"),
    },
}


def _parse_value(kind, raw: str):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    if kind == _INT_LIST:
        return tuple(int(v) for v in raw.split(",") if v != "")
    if kind == _FLOAT_LIST:
        return tuple(float(v) for v in raw.split(",") if v != "")
    if kind == _OPT_FLOAT:
        if raw in ("", "auto", "none"):
            return None
        return float(raw)
    raise ValueError(f"unhandled config type {kind!r}")


def _format_value(kind, value) -> str:
    if value is None:
        return ""
    if kind in (_INT_LIST, _FLOAT_LIST):
        return ",".join(repr(v) if kind == _FLOAT_LIST else str(v) for v in value)
    if kind is float or kind == _OPT_FLOAT:
        return repr(float(value))
    return str(value)


def _read_config_file(path: Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _resolve_config(command: str, args: argparse.Namespace) -> dict:
    schema = _SCHEMAS[command]
    resolved = {key: default for key, (_, default, _) in schema.items()}
    if args.config:
        file_values = _read_config_file(Path(args.config))
        file_values.pop("command", None)
        for key, raw in file_values.items():
            if key not in schema:
                raise ValueError(f"unknown config key {key!r} for command {command}")
            resolved[key] = _parse_value(schema[key][0], raw)
    for key in schema:
        flag_value = getattr(args, key.replace("-", "_"), None)
        if flag_value is not None:
            resolved[key] = _parse_value(schema[key][0], flag_value)
    return resolved


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    schema = _SCHEMAS[command]
    lines = [f"command={command}"]
    for key in schema:
        lines.append(f"{key}={_format_value(schema[key][0], config[key])}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands


def _cmd_gen(args) -> int:
    cfg = _resolve_config("gen", args)
    out = _out_dir(args)
    gen_cfg = GeneratorConfig(
        identities=cfg["identities"],
        backgrounds=cfg["backgrounds"],
        zrotations=cfg["zrot"],
        illuminations=cfg["illuminations"],
        dimension=cfg["dim"],
        illum_gain_dims=min(cfg["gain_dims"], cfg["dim"]),
        illum_baseline=cfg["baseline"],
        illum_identity_leak=cfg["identity_leak"],
        illum_jitter=cfg["jitter"],
        noise_scale=cfg["noise_scale"],
        seed=cfg["seed"],
    )
    if cfg["kind"] == "source":
        sset = generate_source_domain(gen_cfg)
    elif cfg["kind"] == "target":
        if not cfg["weights"]:
            raise ValueError("kind=target requires --weights aligned with --illuminations")
        sset = simulate_target_domain(gen_cfg, cfg["weights"], cfg["seed"])
    else:
        raise ValueError(f"unknown kind {cfg['kind']!r}; expected source or target")
    write_feature_file(out / "features.csv", sset)
    _write_manifest(out, "gen", cfg)
    print(f"wrote {len(sset)} records ({sset.dimension}-d) to {out / 'features.csv'}")
    return 0


def _load_condition_subsets(features_path: str, labels) -> list:
    if not features_path:
        raise ValueError("--features is required")
    if not labels:
        raise ValueError("--labels is required")
    source = read_feature_file(features_path)
    subsets = []
    for lab in labels:
        sub = select_subset_by_illumination(source, lab)
        if len(sub) == 0:
            raise ValueError(f"no samples with illumination label {lab} in {features_path}")
        subsets.append(sub)
    return subsets


def _cmd_train_switch(args) -> int:
    cfg = _resolve_config("train-switch", args)
    out = _out_dir(args)
    subsets = _load_condition_subsets(cfg["features"], cfg["labels"])
    switch = train_switch(subsets)
    write_classifier(out / "switch.csv", switch)
    _write_manifest(out, "train-switch", cfg)
    print(f"trained switch over {len(subsets)} conditions, wrote {out / 'switch.csv'}")
    return 0


def _cmd_learn_metrics(args) -> int:
    cfg = _resolve_config("learn-metrics", args)
    out = _out_dir(args)
    subsets = _load_condition_subsets(cfg["features"], cfg["labels"])
    encoders = [
        train_condition_encoder(sub, cfg["encoder_kind"], condition=i)
        for i, sub in enumerate(subsets, start=1)
    ]
    encoded = [encode_set(enc, sub) for enc, sub in zip(encoders, subsets)]
    policy = PairingPolicy(max_pairs=cfg["pair_cap"], seed=stage_seed(cfg["seed"], "pairs"))
    bank = build_metric_bank(encoded, policy, cfg["reg"])
    for enc in encoders:
        write_encoder(out / f"encoder_{enc.condition}.csv", enc)
    for (a, b), matrix in bank.items():
        write_matrix(out / f"matrix_{a}_{b}.csv", matrix)
    _write_manifest(out, "learn-metrics", cfg)
    print(f"wrote {len(encoders)} encoders and {len(bank)} matrices to {out}")
    return 0


def _cmd_split(args) -> int:
    cfg = _resolve_config("split", args)
    out = _out_dir(args)
    if not cfg["features"]:
        raise ValueError("--features is required")
    target = read_feature_file(cfg["features"])
    meta = meta_from_samples(target)
    split = make_split(meta, cfg["protocol"], cfg["seed"], cfg["query_fraction"])
    write_split(out / "split.json", split)
    _write_manifest(out, "split", cfg)
    print(
        f"protocol {split.protocol}: {len(split.query_indices)} query / "
        f"{len(split.gallery_indices)} gallery, wrote {out / 'split.json'}"
    )
    return 0


def _print_cmc_table(curves: dict[str, dict[int, float]]) -> None:
    ks = sorted(next(iter(curves.values())))
    header = "model".ljust(10) + "".join(f"CMC-{k}".rjust(10) for k in ks)
    print(header)
    for name, acc in curves.items():
        print(name.ljust(10) + "".join(f"{100 * acc[k]:9.1f}%" for k in ks))


def _cmd_eval(args) -> int:
    cfg = _resolve_config("eval", args)
    out = _out_dir(args)
    for key in ("features", "split", "switch", "encoders", "matrices"):
        if not cfg[key]:
            raise ValueError(f"--{key} is required")
    target = read_feature_file(cfg["features"])
    split = read_split(cfg["split"])
    split = filter_valid_queries(split, meta_from_samples(target))
    switch = read_classifier(cfg["switch"])
    encoders = tuple(read_encoder(p) for p in cfg["encoders"].split(","))
    matrices = {}
    for p in cfg["matrices"].split(","):
        matrix = read_matrix(p)
        if matrix.condition_pair is None:
            raise ValueError(f"{p}: matrix carries no condition pair")
        matrices[matrix.condition_pair] = matrix
    bank = MetricBank(matrices, conditions=len(encoders))
    model = assemble(switch, encoders, bank)
    queries = target.take(split.query_indices)
    gallery = target.take(split.gallery_indices)
    dm = distance_matrix(model, queries, gallery)
    result = cmc(dm, queries.samples, gallery.samples, cfg["ks"], cfg["exclusion"])

    curves = {"SMB": result.as_dict()}
    with open(out / "cmc.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("k,accuracy\n")
        for k in result.ks:
            fh.write(f"{k},{result.accuracy(k)!r}\n")
    if cfg["save_distances"]:
        write_distance_matrix(out / "distances.csv", dm)
    from .plots import save_cmc_curves

    save_cmc_curves(curves, out / "cmc_curves.png")
    _write_json(
        out / "report.json",
        {
            "command": "eval",
            "config": {k: list(v) if isinstance(v, tuple) else v for k, v in cfg.items()},
            "queries": len(queries),
            "gallery": len(gallery),
            "cmc": {str(k): result.accuracy(k) for k in result.ks},
        },
    )
    _write_manifest(out, "eval", cfg)
    _print_cmc_table(curves)
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _resolve_config("pipeline", args)
    out = _out_dir(args)
    pipeline_cfg = PipelineConfig(
        seed=cfg["seed"],
        dim=cfg["dim"],
        n_conditions=cfg["n_conditions"],
        source_identities=cfg["source_identities"],
        source_backgrounds=cfg["source_backgrounds"],
        source_zrotations=cfg["source_zrot"],
        source_illuminations=cfg["source_illuminations"],
        target_identities=cfg["target_identities"],
        target_backgrounds=cfg["target_backgrounds"],
        target_zrotations=cfg["target_zrot"],
        target_labels=cfg["target_labels"],
        target_weights=cfg["target_weights"],
        illum_gain_dims=cfg["gain_dims"],
        illum_baseline=cfg["baseline"],
        illum_identity_leak=cfg["identity_leak"],
        illum_jitter=cfg["jitter"],
        noise_scale=cfg["noise_scale"],
        encoder_kind=cfg["encoder_kind"],
        reg=cfg["reg"],
        pair_cap=cfg["pair_cap"],
        protocol=cfg["protocol"],
        query_fraction=cfg["query_fraction"],
        ks=cfg["ks"],
        exclusion=cfg["exclusion"],
    )
    report = run_pipeline(pipeline_cfg)

    curves = {
        f"S{i}": r.as_dict() for i, r in enumerate(report.single_results, start=1)
    }
    curves["SMB"] = report.smb_result.as_dict()
    with open(out / "cmc.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("model,k,accuracy\n")
        for name, acc in curves.items():
            for k in sorted(acc):
                fh.write(f"{name},{k},{acc[k]!r}\n")
    from .plots import save_cmc_curves, save_label_histogram

    save_cmc_curves(curves, out / "cmc_curves.png")
    save_label_histogram(report.predicted_counts, report.condition_labels, out / "label_histogram.png")
    _write_json(out / "report.json", report.to_json_dict())
    _write_manifest(out, "pipeline", cfg)

    print(f"conditions {list(report.condition_labels)}, coverage {report.coverage:.3f}, bank size {report.bank_size}")
    print(f"split: {report.valid_queries} valid queries / {report.split_gallery} gallery")
    _print_cmc_table(curves)
    print("condition-pure subsets (valid-query filtered):")
    for ev in report.subset_evals:
        acc = "n/a" if ev.result is None else f"{100 * ev.result.accuracy(1):.1f}%"
        print(
            f"  condition {ev.condition}: {ev.queries} query / {ev.gallery} gallery / "
            f"{ev.valid_queries} valid, CMC-1 {acc}"
        )
    return 0


def _cmd_diffusion_demo(args) -> int:
    cfg = _resolve_config("diffusion-demo", args)
    out = _out_dir(args)
    demo_cfg = DiffusionDemoConfig(
        seed=cfg["seed"],
        dim=cfg["dim"],
        samples=cfg["samples"],
        T=cfg["steps"],
        beta_start=cfg["beta_start"],
        beta_end=cfg["beta_end"],
        source_mean=cfg["source_mean"],
        source_scale=cfg["source_scale"],
        target_mean=cfg["target_mean"],
        target_scale=cfg["target_scale"],
        tes_fractions=cfg["tes_fractions"],
    )
    report = run_diffusion_demo(demo_cfg)
    with open(out / "psnr_trend.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("encoding_steps,mean_psnr,mean_abs_change,target_mean_error,target_scale_error\n")
        for row in report.rows:
            fh.write(
                f"{row.encoding_steps},{row.mean_psnr!r},{row.mean_abs_change!r},"
                f"{row.target_mean_error!r},{row.target_scale_error!r}\n"
            )
    from .plots import save_psnr_trend

    save_psnr_trend(
        [r.encoding_steps for r in report.rows],
        [r.mean_psnr for r in report.rows],
        out / "psnr_trend.png",
    )
    _write_json(out / "report.json", report.to_json_dict())
    _write_manifest(out, "diffusion-demo", cfg)

    print("T_es".rjust(6) + "mean PSNR".rjust(12) + "|out-in|".rjust(12) + "tgt mean err".rjust(14))
    for row in report.rows:
        print(
            f"{row.encoding_steps:6d}{row.mean_psnr:12.2f}{row.mean_abs_change:12.4f}"
            f"{row.target_mean_error:14.4f}"
        )
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train-switch": _cmd_train_switch,
    "learn-metrics": _cmd_learn_metrics,
    "split": _cmd_split,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
    "diffusion-demo": _cmd_diffusion_demo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reidbank",
        description="Illumination-routed model bank for feature-level re-identification.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, schema in _SCHEMAS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="flat key=value config file; flags win")
        p.add_argument("--out", required=True, help="output directory")
        for key, (_, default, help_text) in schema.items():
            p.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                default=None,
                help=f"{help_text} (default: {_format_value(schema[key][0], default) or 'none'})",
            )
        p.set_defaults(func=_COMMANDS[command], command=command)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except np.linalg.LinAlgError as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 2
    except (ComputationError, ArithmeticError, RuntimeError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error ({args.command}): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
