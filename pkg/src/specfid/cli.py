"""
Command line front end.

Every subcommand is a thin wrapper over one library operation. Options are
long-form only and resolve as: explicit flag, then the ``--config`` JSON file,
then the built-in default. Commands that write a file also write the resolved
options next to it as ``<output>.config.json`` (``config.json`` inside run
directories). Results are printed to stdout; diagnostics go to the log.

.. moduleauthor:: Team Indigo

Functions
---------
build_parser
    The argparse parser with one subparser per command.
run
    Resolve options for the chosen command and execute it.
"""

import argparse
import csv
import glob
import json
import logging
import os
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np

from specfid import fidelity, ganlab, linmodels, resample, spectrum
from specfid.config import (
    CS_EPOCHS,
    CS_LR,
    DETECT_SPLIT,
    GAN_BATCH,
    GAN_LR,
    GP_LAMBDA,
    HIDDEN_DIM,
    LATENT_DIM,
    MANIFEST_NAME,
    PROFILE_CACHE_DB,
    RUNS_DIR,
    SAMPLE_COUNT,
    SYNTH_KINDS,
    WGAN_CLIP,
)
from specfid.errors import DataError, ImageError, UsageError
from specfid.imagecore import load_corpus, load_image, load_manifest, synth_corpus
from specfid.utils import caching
from specfid.utils.plotting import PlotSpec, profile_series, render_svg

logger = logging.getLogger(__name__)

Options = argparse.Namespace


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so ``main`` owns exit codes."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _float_list(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


# Built-in defaults per command; None marks an option that must be given.
_TRAIN_DEFAULTS: Dict[str, Any] = {
    "manifest": None,
    "seed": None,
    "loss": "dcgan",
    "epochs": 200,
    "batch": GAN_BATCH,
    "lr": GAN_LR,
    "gp_lambda": GP_LAMBDA,
    "clip": WGAN_CLIP,
    "latent_dim": LATENT_DIM,
    "hidden_dim": HIDDEN_DIM,
    "n_critic": 0,
    "df_scale": "log1p",
    "sample_count": SAMPLE_COUNT,
}

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "synth": {
        "kind": None, "count": None, "size": None, "seed": None, "out": None,
        "label": "real", "workers": 1,
    },
    "profile": {"mode": "binned", "out": None, "label": "real", "workers": 1, "cache": None},
    "stats": {"out": None, "plot": None},
    "sd": {"sd_scale": "log1p"},
    "cs": {"epochs": [CS_EPOCHS], "lr": CS_LR, "seed": None},
    "detect": {
        "split": DETECT_SPLIT, "model": "lr", "seed": None, "out_model": None,
        "transfer_real": None, "transfer_gen": None,
    },
    "cluster": {"k": 2, "seed": None, "out": None, "plot": None},
    "upsample-demo": {"signal": None, "length": 8, "seed": None, "out": None},
    "train": {**_TRAIN_DEFAULTS, "spectral": False, "run_dir": None},
    "report": {
        "seed": None, "split": DETECT_SPLIT, "sd_scale": "log1p", "out": None, "plot": None,
    },
    "compare": {**_TRAIN_DEFAULTS, "seeds": None, "run_root": None, "workers": 1, "out": None},
}

_REQUIRED: Dict[str, Tuple[str, ...]] = {
    "synth": ("kind", "count", "size", "seed", "out"),
    "profile": ("out",),
    "cs": ("seed",),
    "detect": ("seed",),
    "cluster": ("seed",),
    "upsample-demo": ("out",),
    "train": ("manifest", "seed"),
    "report": ("seed", "out"),
    "compare": ("manifest", "seeds"),
}


def _add_train_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--manifest", help="corpus manifest of real images")
    sub.add_argument("--loss", choices=["dcgan", "lsgan", "wgan", "wgan-gp"])
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--batch", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--gp-lambda", type=float)
    sub.add_argument("--clip", type=float, help="weight clip for wgan")
    sub.add_argument("--latent-dim", type=int)
    sub.add_argument("--hidden-dim", type=int)
    sub.add_argument(
        "--n-critic", type=int, help="discriminator steps per generator step, 0 for the loss default"
    )
    sub.add_argument("--df-scale", choices=["log1p", "raw"])
    sub.add_argument("--sample-count", type=int)


def build_parser() -> argparse.ArgumentParser:
    """Parser for all subcommands.

    Option defaults are suppressed so that only flags given on the command line
    appear in the namespace; :func:`run` fills in the rest.
    """
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with option values")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="log debug messages")
    verbosity.add_argument("--quiet", action="store_true", help="log warnings and errors only")

    parser = _Parser(prog="specfid", description="Spectral fidelity toolkit")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        return commands.add_parser(
            name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS
        )

    sub = command("synth", "generate a synthetic corpus")
    sub.add_argument("--kind", choices=SYNTH_KINDS)
    sub.add_argument("--count", type=int)
    sub.add_argument("--size", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--label", choices=["real", "generated"])
    sub.add_argument("--workers", type=int)

    sub = command("profile", "compute azimuthal-integral profiles of a corpus")
    sub.add_argument("source", help="manifest file, or directory of PNG/PGM images")
    sub.add_argument("--mode", choices=["binned", "interpolated"])
    sub.add_argument("--out", help="profile CSV")
    sub.add_argument("--label", choices=["real", "generated"], help="label for bare directories")
    sub.add_argument("--workers", type=int)
    sub.add_argument(
        "--cache", nargs="?", const=PROFILE_CACHE_DB, help="SQLite profile cache"
    )

    sub = command("stats", "mean and standard deviation of a profile CSV")
    sub.add_argument("profiles")
    sub.add_argument("--out", help="stats CSV: stat,r0,... header with mean and std rows")
    sub.add_argument("--plot", help="SVG of the mean profile with a std band")

    sub = command("sd", "spectral difference of two profile CSVs")
    sub.add_argument("real")
    sub.add_argument("generated")
    sub.add_argument("--sd-scale", choices=["log1p", "raw"])

    sub = command("cs", "cloaking score of two profile CSVs")
    sub.add_argument("real")
    sub.add_argument("generated")
    sub.add_argument("--epochs", type=_int_list, help="comma separated epoch budgets")
    sub.add_argument("--lr", type=float)
    sub.add_argument("--seed", type=int)

    sub = command("detect", "train and test an LR or SVM detector")
    sub.add_argument("real")
    sub.add_argument("generated")
    sub.add_argument("--split", type=float)
    sub.add_argument("--model", choices=["lr", "svm"])
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out-model", help="model artifact JSON")
    sub.add_argument("--transfer-real", help="real profiles of a transfer pair")
    sub.add_argument("--transfer-gen", help="generated profiles of a transfer pair")

    sub = command("cluster", "k-means on the highest populated profile frequency")
    sub.add_argument("profiles")
    sub.add_argument("--k", type=int)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="CSV of cluster assignments")
    sub.add_argument("--plot", help="SVG of per-cluster mean profiles")

    sub = command("upsample-demo", "spectra of a signal and its up-sampled versions")
    sub.add_argument("--signal", type=_float_list, help="comma separated samples")
    sub.add_argument("--length", type=int, help="length of a random signal")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="CSV of spectrum magnitudes")

    sub = command("train", "train the toy GAN")
    _add_train_options(sub)
    sub.add_argument("--spectral", action=argparse.BooleanOptionalAction)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--run-dir")

    sub = command("report", "fidelity report and profile plot of two profile CSVs")
    sub.add_argument("real")
    sub.add_argument("generated")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--split", type=float)
    sub.add_argument("--sd-scale", choices=["log1p", "raw"])
    sub.add_argument("--out", help="report JSON")
    sub.add_argument("--plot", help="SVG, defaults to the report path with .svg")

    sub = command("compare", "train with the spectral discriminator on and off over seeds")
    _add_train_options(sub)
    sub.add_argument("--seeds", type=_int_list)
    sub.add_argument("--run-root")
    sub.add_argument("--workers", type=int)
    sub.add_argument("--out", help="comparison JSON")
    return parser


def _load_config_file(path: str, allowed: Sequence[str]) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"Cannot read config file {path}: {e}") from e
    if not isinstance(values, dict):
        raise DataError(f"Config file {path} must hold a JSON object")
    values = {key.replace("-", "_"): value for key, value in values.items()}
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise UsageError(f"Unknown options in {path}: {', '.join(unknown)}")
    return values


def resolve_options(args: argparse.Namespace) -> Options:
    """Merge defaults, the config file and explicit flags for ``args.command``.

    :raises UsageError: If a required option is still missing
    """
    given = vars(args).copy()
    command = given.pop("command")
    config_path = given.pop("config", None)
    given.pop("verbose", None)
    given.pop("quiet", None)
    defaults = DEFAULTS[command]
    merged = dict(defaults)
    if config_path is not None:
        merged.update(_load_config_file(config_path, list(defaults)))
    merged.update(given)
    missing = [name for name in _REQUIRED.get(command, ()) if merged.get(name) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"{command}: missing required option(s) {flags}")
    return argparse.Namespace(command=command, **merged)


def _echo_config(opts: Options, output: str, inside_dir: bool = False) -> None:
    if inside_dir:
        path = os.path.join(output, "config.json")
    else:
        path = os.path.splitext(output)[0] + ".config.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(vars(opts), f, indent=2, sort_keys=True)
        f.write("\n")


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as e:
        raise DataError(f"Cannot create directory {parent}: {e}") from e


def _read_profiles(path: str) -> np.ndarray:
    return spectrum.read_profile_csv(path)[1]


def _collect_sources(source: str, label: str) -> Tuple[List[str], List[str]]:
    """Image paths and labels of a manifest or a plain image directory."""
    if os.path.isdir(source) and not os.path.exists(os.path.join(source, MANIFEST_NAME)):
        paths = sorted(glob.glob(os.path.join(source, "*.png")) + glob.glob(os.path.join(source, "*.pgm")))
        if not paths:
            raise DataError(f"No PNG or PGM images in {source}")
        return paths, [label] * len(paths)
    manifest_path = os.path.join(source, MANIFEST_NAME) if os.path.isdir(source) else source
    manifest = load_manifest(manifest_path)
    base_dir = os.path.dirname(os.path.abspath(manifest_path))
    paths = [os.path.join(base_dir, entry.path) for entry in manifest.entries]
    return paths, [entry.label for entry in manifest.entries]


def cmd_synth(opts: Options) -> int:
    manifest = synth_corpus(
        opts.kind, opts.count, opts.size, opts.seed, opts.out, label=opts.label, workers=opts.workers
    )
    _echo_config(opts, opts.out, inside_dir=True)
    print(f"{len(manifest.entries)} images written to {opts.out}")
    return 0


def cmd_profile(opts: Options) -> int:
    paths, labels = _collect_sources(opts.source, opts.label)
    profiles: List[spectrum.SpectralProfile] = [None] * len(paths)  # type: ignore[list-item]
    conn = caching.get_cache_connection(opts.cache) if opts.cache else None
    hashes: List[str] = []
    try:
        if conn is not None:
            hashes = [caching.file_hash(path) for path in paths]
            for index, digest in enumerate(hashes):
                profiles[index] = caching.get_cached_profile(conn, digest, opts.mode)
        missing = [index for index, profile in enumerate(profiles) if profile is None]
        images = [load_image(paths[index]) for index in missing]
        computed = spectrum.batch_profiles(images, opts.mode, opts.workers)
        for index, profile in zip(missing, computed):
            profiles[index] = profile
            if conn is not None:
                caching.cache_profile(conn, hashes[index], opts.mode, profile)
    finally:
        if conn is not None:
            conn.close()
    sizes = {profile.n for profile in profiles}
    if len(sizes) > 1:
        raise ImageError(f"Images in {opts.source} have different sizes {sorted(sizes)}")
    _ensure_parent(opts.out)
    spectrum.write_profile_csv(opts.out, labels, spectrum.profile_matrix(profiles))
    _echo_config(opts, opts.out)
    print(f"{len(profiles)} profiles of length {len(profiles[0])} written to {opts.out}")
    return 0


def cmd_stats(opts: Options) -> int:
    matrix = _read_profiles(opts.profiles)
    mean, std = matrix.mean(axis=0), matrix.std(axis=0)
    if opts.out:
        _ensure_parent(opts.out)
        spectrum.write_stats_csv(opts.out, mean, std)
        _echo_config(opts, opts.out)
    else:
        for index, (m, s) in enumerate(zip(mean, std)):
            print(f"r{index}\t{m!r}\t{s!r}")
    if opts.plot:
        _ensure_parent(opts.plot)
        spec = PlotSpec(series=[profile_series(os.path.basename(opts.profiles), mean, std)])
        render_svg(spec, opts.plot)
    return 0


def cmd_sd(opts: Options) -> int:
    value = fidelity.spectral_difference(
        _read_profiles(opts.real), _read_profiles(opts.generated), scale=opts.sd_scale
    )
    print(repr(value))
    return 0


def cmd_cs(opts: Options) -> int:
    budgets = [opts.epochs] if isinstance(opts.epochs, int) else opts.epochs
    results = fidelity.evaluate_cs_budgets(
        _read_profiles(opts.real),
        _read_profiles(opts.generated),
        budgets,
        lr=opts.lr,
        seed=opts.seed,
    )
    for result in results:
        print(f"epochs={result.epochs}\taccuracy={result.train_accuracy:.6f}\tcs={result.cs:.6f}")
    return 0


def cmd_detect(opts: Options) -> int:
    if (opts.transfer_real is None) != (opts.transfer_gen is None):
        raise UsageError("detect: --transfer-real and --transfer-gen must be given together")
    real = _read_profiles(opts.real)
    generated = _read_profiles(opts.generated)
    result = fidelity.evaluate_detection(real, generated, opts.split, opts.model, opts.seed)
    print(f"train_acc\t{result.train_acc:.6f}")
    print(f"test_acc\t{result.test_acc:.6f}")
    if opts.transfer_real is not None:
        transfer = fidelity.evaluate_transfer(
            real,
            generated,
            _read_profiles(opts.transfer_real),
            _read_profiles(opts.transfer_gen),
            opts.model,
            opts.seed,
        )
        print(f"transfer_acc\t{transfer.transfer_acc:.6f}")
    if opts.out_model:
        _ensure_parent(opts.out_model)
        linmodels.save_model(opts.out_model, result.model, result.standardizer)
        _echo_config(opts, opts.out_model)
    return 0


def cmd_cluster(opts: Options) -> int:
    labels, matrix = spectrum.read_profile_csv(opts.profiles)
    result = linmodels.cluster_by_top_frequency(matrix, k=opts.k, seed=opts.seed)
    print(f"feature\tr{result.feature_index}")
    for cluster in range(opts.k):
        members = int(np.sum(result.assignments == cluster))
        top = result.profile_means[cluster, result.feature_index]
        print(f"cluster {cluster}\t{members}\t{top!r}")
    if opts.out:
        _ensure_parent(opts.out)
        with open(opts.out, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["index", "label", "cluster"])
            for index, (label, cluster) in enumerate(zip(labels, result.assignments)):
                writer.writerow([index, label, int(cluster)])
        _echo_config(opts, opts.out)
    if opts.plot:
        _ensure_parent(opts.plot)
        series = [
            profile_series(f"cluster {cluster}", result.profile_means[cluster])
            for cluster in range(opts.k)
        ]
        render_svg(PlotSpec(series=series, title="Mean profile per cluster"), opts.plot)
    return 0


def cmd_upsample_demo(opts: Options) -> int:
    if opts.signal is not None:
        values = np.asarray(opts.signal)
    else:
        if opts.seed is None:
            raise UsageError("upsample-demo: a random signal needs --seed (or pass --signal)")
        values = np.random.default_rng(opts.seed).standard_normal(opts.length)
    signal = resample.Signal1D(values)
    report = resample.verify_replica(signal)
    _ensure_parent(opts.out)
    with open(opts.out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["k", "base", "bed_of_nails", "nearest", "bilinear"])
        for row in resample.upsample_demo_rows(signal):
            writer.writerow([int(row[0])] + [repr(v) for v in row[1:]])
    _echo_config(opts, opts.out)
    print(f"max_abs_err\t{report.max_abs_err!r}")
    print(f"nearest_max_abs_err\t{report.nearest_max_abs_err!r}")
    return 0


def _train_config(opts: Options, **overrides) -> ganlab.TrainConfig:
    fields = {
        "loss": opts.loss,
        "epochs": opts.epochs,
        "batch": opts.batch,
        "lr": opts.lr,
        "gp_lambda": opts.gp_lambda,
        "clip": opts.clip,
        "latent_dim": opts.latent_dim,
        "hidden_dim": opts.hidden_dim,
        "n_critic": opts.n_critic or None,
        "df_scale": opts.df_scale,
        "sample_count": opts.sample_count,
    }
    fields.update(overrides)
    return ganlab.TrainConfig(**fields)


def cmd_train(opts: Options) -> int:
    manifest, images = load_corpus(opts.manifest)
    config = _train_config(
        opts, image_size=manifest.size, spectral=opts.spectral, seed=opts.seed
    )
    run_dir = opts.run_dir or os.path.join(
        RUNS_DIR, f"{config.loss}-{'spectral' if config.spectral else 'plain'}-seed{config.seed}"
    )
    log = ganlab.train(config, images, run_dir)
    if log.final_sd is not None:
        print(f"final_sd\t{log.final_sd:.6f}")
        print(f"final_cs\t{log.final_cs:.6f}")
    print(f"run_dir\t{run_dir}")
    return 0


def cmd_report(opts: Options) -> int:
    real = _read_profiles(opts.real)
    generated = _read_profiles(opts.generated)
    report = fidelity.build_report(
        real, generated, seed=opts.seed, split=opts.split, sd_scale=opts.sd_scale
    )
    _ensure_parent(opts.out)
    with open(opts.out, "w", encoding="utf-8") as f:
        f.write(report.model_dump_json(indent=2))
        f.write("\n")
    plot_path = opts.plot or os.path.splitext(opts.out)[0] + ".svg"
    _ensure_parent(plot_path)
    spec = PlotSpec(
        series=[
            profile_series("real", real.mean(axis=0), real.std(axis=0)),
            profile_series("generated", generated.mean(axis=0), generated.std(axis=0)),
        ],
        title="Average spectral profiles",
    )
    render_svg(spec, plot_path)
    _echo_config(opts, opts.out)
    print(fidelity.format_report_table(report))
    return 0


def cmd_compare(opts: Options) -> int:
    manifest, images = load_corpus(opts.manifest)
    config = _train_config(opts, image_size=manifest.size)
    comparisons = ganlab.compare_spectral(
        config, images, opts.seeds, run_root=opts.run_root, workers=opts.workers
    )
    print("seed\tsd_on\tsd_off\tcs_on\tcs_off")
    for row in comparisons:
        print(
            f"{row.seed}\t{row.spectral_on.sd:.6f}\t{row.spectral_off.sd:.6f}"
            f"\t{row.spectral_on.cs:.6f}\t{row.spectral_off.cs:.6f}"
        )
    if opts.out:
        _ensure_parent(opts.out)
        with open(opts.out, "w", encoding="utf-8") as f:
            json.dump([row.model_dump() for row in comparisons], f, indent=2)
            f.write("\n")
        _echo_config(opts, opts.out)
    return 0


COMMANDS: Dict[str, Callable[[Options], int]] = {
    "synth": cmd_synth,
    "profile": cmd_profile,
    "stats": cmd_stats,
    "sd": cmd_sd,
    "cs": cmd_cs,
    "detect": cmd_detect,
    "cluster": cmd_cluster,
    "upsample-demo": cmd_upsample_demo,
    "train": cmd_train,
    "report": cmd_report,
    "compare": cmd_compare,
}


def run(args: argparse.Namespace) -> int:
    """Execute the parsed command and return its exit code."""
    opts = resolve_options(args)
    logger.debug("Resolved options: %s", vars(opts))
    return COMMANDS[opts.command](opts)
