"""Command-line harness: dataset generation, training, prediction, evaluation.

Usage: ``fdtn <command> --config <path> [--set key=value]...``

Configuration is a flat key=value file (``#`` starts a comment); repeated
--set flags override file values. Every key lives in one registry that
drives both validation and the --help listing, so the two cannot drift.
"""

import argparse
import contextlib
import os
import shutil
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import data
from .gridfft import RealGrid
from .model import FdtnConfig, FdtnModel, evaluate, rollout, train_bptt
from .nn import load_params
from .rng import sub_seed

COMMANDS = ("gen", "train", "predict", "eval", "export")


class ConfigError(Exception):
    """Bad configuration input; always names the offending key or path."""


@dataclass(frozen=True)
class ConfigKey:
    name: str
    kind: str  # int | float | str | bool
    default: object
    help: str


# One registry for parsing, validation, and --help. Defaults that shadow
# FdtnConfig or generator defaults must match them (pinned by tests).
KEYS = (
    # dataset generation
    ConfigKey("dataset", "str", "bouncing_ball",
              "generator: bouncing_ball, moving_digit, or morse"),
    ConfigKey("count", "int", 2000, "sequences to generate"),
    ConfigKey("frames", "int", 10, "frames per generated sequence"),
    ConfigKey("width", "int", 40, "frame width in pixels (morse strip length)"),
    ConfigKey("height", "int", 40, "frame height in pixels (ignored by morse)"),
    ConfigKey("radius_lo", "float", 3.0, "smallest ball radius"),
    ConfigKey("radius_hi", "float", 5.0, "largest ball radius"),
    ConfigKey("speed_lo", "float", 0.5, "slowest object speed, pixels per frame"),
    ConfigKey("speed_hi", "float", 2.5, "fastest object speed, pixels per frame"),
    ConfigKey("velocity_lo", "int", -3, "lowest morse strip velocity (integer)"),
    ConfigKey("velocity_hi", "int", 3, "highest morse strip velocity (integer)"),
    ConfigKey("noise_sigma", "float", 0.1, "gaussian noise level on morse seed frames"),
    ConfigKey("glyphs", "str", "builtin",
              "digit glyph source: builtin or a path to an IDX image file"),
    ConfigKey("split", "str", "train", "split label recorded in the dataset"),
    # model
    ConfigKey("transform_variant", "str", "none",
              "phase-field correction network: none, fc, conv, or morse_denoise"),
    ConfigKey("refine_enabled", "bool", True, "apply the spatial gating network"),
    ConfigKey("seed_count", "int", 2, "observed frames the rollout starts from"),
    ConfigKey("horizon", "int", 8, "frames to predict per sequence"),
    ConfigKey("eps", "float", 1e-8, "magnitude floor in the phase-difference encoder"),
    ConfigKey("fc_hidden", "int", 19, "hidden width of the fc transform variant"),
    ConfigKey("conv_channels", "int", 4, "channels in the conv transform variant"),
    ConfigKey("conv_kernel", "int", 3, "kernel size of the conv transform variant"),
    ConfigKey("refine_channels", "int", 4, "channels in the refine network"),
    ConfigKey("refine_kernel", "int", 3, "kernel size of the refine network"),
    ConfigKey("morse_hidden", "int", 64, "hidden width of the morse_denoise variant"),
    # optimization
    ConfigKey("epochs", "int", 20, "training epochs"),
    ConfigKey("batch_size", "int", 32, "sequences per gradient step"),
    ConfigKey("lr", "float", 1e-3, "Adam learning rate"),
    ConfigKey("lr_final", "float", 0.0,
              "cosine-decay the learning rate to this value (0 = constant lr)"),
    ConfigKey("augment_mirror", "bool", False,
              "train on randomly mirrored sequences (bounce dynamics are "
              "mirror-symmetric)"),
    ConfigKey("beta1", "float", 0.9, "Adam first-moment decay"),
    ConfigKey("beta2", "float", 0.999, "Adam second-moment decay"),
    ConfigKey("adam_eps", "float", 1e-8, "Adam denominator floor"),
    ConfigKey("seed", "int", 0, "master seed for generation, init, and shuffling"),
    # paths
    ConfigKey("dataset_path", "str", "",
              "dataset file to write (gen) or read (other commands)"),
    ConfigKey("test_dataset_path", "str", "",
              "held-out dataset for the training log's test column"),
    ConfigKey("checkpoint_path", "str", "",
              "checkpoint to write (train) or read (predict/eval); "
              "empty means fresh untrained parameters"),
    ConfigKey("log_path", "str", "",
              "training log destination; empty means <checkpoint_path>.log"),
    ConfigKey("output_dir", "str", "out", "directory for exported frames"),
    ConfigKey("export_format", "str", "pgm", "frame file format: pgm or csv"),
    ConfigKey("sequence_index", "int", 0, "sequence to predict from or export"),
)

KEY_TABLE = {k.name: k for k in KEYS}

# inputs that must exist before any work starts, per command
_REQUIRED = {
    "gen": ("dataset_path",),
    "train": ("dataset_path", "checkpoint_path"),
    "predict": ("dataset_path",),
    "eval": ("dataset_path",),
    "export": ("dataset_path",),
}

_INPUT_PATH_KEYS = {
    "train": ("dataset_path", "test_dataset_path"),
    "predict": ("dataset_path", "checkpoint_path"),
    "eval": ("dataset_path", "checkpoint_path"),
    "export": ("dataset_path",),
    "gen": (),
}

# file outputs whose parent directory must exist up front, so a long run
# cannot fail at the final write
_OUTPUT_PATH_KEYS = {
    "gen": ("dataset_path",),
    "train": ("checkpoint_path", "log_path"),
    "predict": (),
    "eval": (),
    "export": (),
}


@dataclass
class RunConfig:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]


def _coerce(key: ConfigKey, raw: str):
    if key.kind == "str":
        return raw
    if key.kind == "int":
        try:
            return int(raw, 10)
        except ValueError:
            raise ConfigError(
                f"type mismatch for key {key.name!r}: expected int, got {raw!r}"
            ) from None
    if key.kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(
                f"type mismatch for key {key.name!r}: expected float, got {raw!r}"
            ) from None
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(
        f"type mismatch for key {key.name!r}: expected bool, got {raw!r}"
    )


def _apply_pair(values: dict, text: str, origin: str):
    if "=" not in text:
        raise ConfigError(f"bad {origin} entry {text!r}: expected key=value")
    name, _, raw = text.partition("=")
    name = name.strip()
    key = KEY_TABLE.get(name)
    if key is None:
        raise ConfigError(f"unknown configuration key {name!r}")
    values[name] = _coerce(key, raw.strip())


def parse_config(path, overrides, command) -> RunConfig:
    """Resolve defaults, then the config file, then --set overrides."""
    values = {k.name: k.default for k in KEYS}
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as f:
            for line in f:
                text = line.split("#", 1)[0].strip()
                if text:
                    _apply_pair(values, text, "config-file")
    for text in overrides or ():
        _apply_pair(values, text, "--set")
    for name in _REQUIRED[command]:
        if values[name] == "":
            raise ConfigError(f"missing required key {name!r} for command {command!r}")
    return RunConfig(command, values)


# -- artifact bookkeeping ----------------------------------------------------

# Single-file outputs are written to <path>.partial and renamed into place,
# so an interrupted run never leaves a truncated artifact and never costs a
# previous run's output. Directory outputs track the files they intend to
# write and remove them on failure.


class _Artifacts:
    def __init__(self):
        self.files = []
        self.dirs = []

    def temp_for(self, path: str) -> str:
        tmp = path + ".partial"
        self.files.append(tmp)
        return tmp

    def add_file(self, path: str):
        self.files.append(path)

    def add_dir_if_created(self, path: str):
        if not os.path.isdir(path):
            self.dirs.append(path)

    def discard(self):
        for path in self.files:
            with contextlib.suppress(FileNotFoundError):
                os.remove(path)
        for path in self.dirs:
            shutil.rmtree(path, ignore_errors=True)


def _commit(tmp: str, path: str):
    os.replace(tmp, path)


# -- command bodies ----------------------------------------------------------


def _build_dataset(config: RunConfig) -> data.SequenceDataset:
    name = config["dataset"]
    if name == "bouncing_ball":
        return data.gen_bouncing_ball(
            config["count"],
            frames=config["frames"],
            width=config["width"],
            height=config["height"],
            radius_range=(config["radius_lo"], config["radius_hi"]),
            speed_range=(config["speed_lo"], config["speed_hi"]),
            seed=config["seed"],
            split=config["split"],
        )
    if name == "moving_digit":
        glyphs = None
        if config["glyphs"] != "builtin":
            glyphs = data.load_idx(config["glyphs"])
        return data.gen_moving_digit(
            config["count"],
            frames=config["frames"],
            width=config["width"],
            height=config["height"],
            glyphs=glyphs,
            speed_range=(config["speed_lo"], config["speed_hi"]),
            seed=config["seed"],
            split=config["split"],
        )
    if name == "morse":
        return data.gen_morse(
            config["count"],
            length=config["width"],
            velocity_range=(config["velocity_lo"], config["velocity_hi"]),
            noise_sigma=config["noise_sigma"],
            seed=config["seed"],
            frames=config["frames"],
            seed_count=config["seed_count"],
            split=config["split"],
        )
    raise ConfigError(
        f"unknown value for key 'dataset': {name!r} "
        "(expected bouncing_ball, moving_digit, or morse)"
    )


def _model_config(config: RunConfig, width: int, height: int) -> FdtnConfig:
    return FdtnConfig(
        transform_variant=config["transform_variant"],
        refine_enabled=config["refine_enabled"],
        seed_count=config["seed_count"],
        horizon=config["horizon"],
        frame_width=width,
        frame_height=height,
        eps=config["eps"],
        fc_hidden=config["fc_hidden"],
        conv_channels=config["conv_channels"],
        conv_kernel=config["conv_kernel"],
        refine_channels=config["refine_channels"],
        refine_kernel=config["refine_kernel"],
        morse_hidden=config["morse_hidden"],
    )


def _load_model(config: RunConfig, model_cfg: FdtnConfig) -> FdtnModel:
    model = FdtnModel(model_cfg, init_seed=sub_seed(config["seed"], 0))
    if config["checkpoint_path"]:
        model.load_state(load_params(config["checkpoint_path"]))
    return model


def _dataset_dims(ds: data.SequenceDataset):
    return ds.sequences.shape[3], ds.sequences.shape[2]


def _pick_sequence(ds: data.SequenceDataset, index: int) -> np.ndarray:
    if not 0 <= index < ds.count:
        raise ValueError(
            f"sequence_index {index} out of range for a dataset of {ds.count}"
        )
    return ds.sequences[index].astype(np.float64)


_DISPLAY = {
    "fc": "FDTN(FC)",
    "conv": "FDTN(Conv)",
    "none": "FDTN(none)",
    "morse_denoise": "FDTN(Morse)",
}

# published comparison table: moving-digit MSE, bouncing-ball MSE, parameters
_REFERENCE_ROWS = (
    ("Conv-PGP", "0.06963", "0.00409", "32K"),
    ("FDTN(Conv)", "0.00316", "0.00092", "22K"),
    ("FDTN(FC)", "0.00285", "0.00086", "160K"),
    ("VLN-ResNet", "0.00544", "0.00107", "1.3M"),
)


def _cmd_gen(config: RunConfig, out: _Artifacts):
    ds = _build_dataset(config)
    path = config["dataset_path"]
    tmp = out.temp_for(path)
    data.save_dataset(ds, tmp)
    _commit(tmp, path)
    n, t, h, w = ds.sequences.shape
    print(f"wrote {n} sequences of {t} frames ({w}x{h}) to {path}")


def _cmd_train(config: RunConfig, out: _Artifacts):
    ds = data.load_dataset(config["dataset_path"])
    test_ds = None
    if config["test_dataset_path"]:
        test_ds = data.load_dataset(config["test_dataset_path"])
    width, height = _dataset_dims(ds)
    model_cfg = _model_config(config, width, height)
    ckpt_path = config["checkpoint_path"]
    log_path = config["log_path"] or ckpt_path + ".log"

    def report(epoch, train_mse, test_mse, secs):
        print(f"epoch {epoch}: train {train_mse:.6e} test {test_mse:.6e} ({secs:.1f}s)")
        sys.stdout.flush()

    tmp_log = out.temp_for(log_path)
    model, curve = train_bptt(
        ds,
        model_cfg,
        epochs=config["epochs"],
        batch_size=config["batch_size"],
        lr=config["lr"],
        lr_final=config["lr_final"] or None,
        augment_mirror=config["augment_mirror"],
        beta1=config["beta1"],
        beta2=config["beta2"],
        eps_adam=config["adam_eps"],
        seed=config["seed"],
        test_dataset=test_ds,
        log_path=tmp_log,
        progress=report,
    )
    _commit(tmp_log, log_path)
    tmp_ckpt = out.temp_for(ckpt_path)
    model.save(tmp_ckpt)
    _commit(tmp_ckpt, ckpt_path)
    print(f"parameters: {model.param_count()}")
    print(f"wrote {ckpt_path} and {log_path}")


def _predict_frames(config: RunConfig, ds: data.SequenceDataset):
    width, height = _dataset_dims(ds)
    model_cfg = _model_config(config, width, height)
    model = _load_model(config, model_cfg)
    seq = _pick_sequence(ds, config["sequence_index"])
    if len(seq) < model_cfg.seed_count:
        raise ValueError(
            f"sequence has {len(seq)} frames but seed_count is {model_cfg.seed_count}"
        )
    seeds = [RealGrid(width, height, frame) for frame in seq[: model_cfg.seed_count]]
    predicted = rollout(seeds, model_cfg, model)
    return seeds, predicted


def _export_with_manifest(out, directory, frames, roles, fmt):
    out.add_dir_if_created(directory)
    expected = [
        os.path.join(directory, f"frame_{t:04d}.{fmt}") for t in range(len(frames))
    ]
    manifest_path = os.path.join(directory, "manifest.txt")
    for path in expected:
        out.add_file(path)
    paths = data.export_frames(frames, directory, fmt=fmt)
    tmp = out.temp_for(manifest_path)
    with open(tmp, "w") as f:
        for path, role in zip(paths, roles):
            f.write(f"{os.path.basename(path)}\t{role}\n")
    _commit(tmp, manifest_path)
    return paths


def _cmd_predict(config: RunConfig, out: _Artifacts):
    ds = data.load_dataset(config["dataset_path"])
    seeds, predicted = _predict_frames(config, ds)
    roles = ["seed"] * len(seeds) + ["predicted"] * len(predicted)
    directory = config["output_dir"]
    _export_with_manifest(
        out, directory, seeds + predicted, roles, config["export_format"]
    )
    print(
        f"wrote {len(seeds)} seed + {len(predicted)} predicted frames to {directory}"
    )


def _cmd_eval(config: RunConfig, out: _Artifacts):
    ds = data.load_dataset(config["dataset_path"])
    width, height = _dataset_dims(ds)
    model_cfg = _model_config(config, width, height)
    model = _load_model(config, model_cfg)
    mean, per_step = evaluate(ds, model_cfg, model, horizon=config["horizon"])
    name = _DISPLAY[model_cfg.transform_variant]
    print("model  mse  params")
    print(f"{name}  {mean:.5f}  {model.param_count()}")
    print()
    print("reference (moving digit / bouncing ball / params):")
    for row in _REFERENCE_ROWS:
        print(f"{row[0]:<11} {row[1]}  {row[2]}  {row[3]}")
    print()
    print("per-step mse:")
    for t, value in enumerate(per_step, start=1):
        print(f"step {t:>3}  {value:.5f}")


def _cmd_export(config: RunConfig, out: _Artifacts):
    ds = data.load_dataset(config["dataset_path"])
    seq = _pick_sequence(ds, config["sequence_index"])
    roles = ["frame"] * len(seq)
    directory = config["output_dir"]
    _export_with_manifest(out, directory, seq, roles, config["export_format"])
    print(f"wrote {len(seq)} frames to {directory}")


_HANDLERS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
    "export": _cmd_export,
}


def _validate_paths(config: RunConfig):
    for name in _INPUT_PATH_KEYS[config.command]:
        path = config[name]
        if path and not os.path.isfile(path):
            raise ConfigError(f"path for key {name!r} does not exist: {path}")
    for name in _OUTPUT_PATH_KEYS[config.command]:
        path = config[name]
        parent = os.path.dirname(path)
        if path and parent and not os.path.isdir(parent):
            raise ConfigError(f"directory for key {name!r} does not exist: {parent}")


def run(config: RunConfig):
    """Execute one command; on any failure no partial artifact survives."""
    _validate_paths(config)
    out = _Artifacts()
    try:
        _HANDLERS[config.command](config, out)
    except BaseException:
        out.discard()
        raise


def _key_listing() -> str:
    lines = ["configuration keys (config file or --set, key=value):"]
    for key in KEYS:
        default = key.default if key.default != "" else "''"
        lines.append(f"  {key.name:<18} {key.kind:<6} default={default!s:<13} {key.help}")
    return "\n".join(lines)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdtn",
        description="Frequency-domain video prediction harness.",
        epilog=_key_listing(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="flat key=value configuration file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one configuration key (repeatable; wins over the file)",
    )
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = parse_config(args.config, args.overrides, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    started = time.perf_counter()
    try:
        run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if config.command == "train":
        print(f"total {time.perf_counter() - started:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
