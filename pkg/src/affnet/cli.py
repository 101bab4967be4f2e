"""Command line entry point: ``affnet {verify,train,eval,bench,inspect}``.

Exit codes: 0 success, 1 contract or property failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import AffError

CONFIG_NAME = "config.txt"


def _parse_data(text: str) -> tuple[str, str | None]:
    if text == "synth":
        return "synth", None
    if text.startswith("cifar10:") and len(text) > len("cifar10:"):
        return "cifar10", text[len("cifar10:"):]
    raise argparse.ArgumentTypeError("expected 'synth' or 'cifar10:DIR'")


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affnet", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1, deterministic)")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run invariant suites")
    v.add_argument("--suite", choices=["fft", "gradcheck", "equivalence", "properties", "all"], default="all")
    v.add_argument("--precision", choices=["f32", "f64"], default="f64")

    t = sub.add_parser("train", help="train a model and write metrics.csv and model.affw")
    t.add_argument("--config", type=Path, help="key=value config file")
    t.add_argument("--data", type=_parse_data, required=True, help="synth or cifar10:DIR")
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--train-size", type=int, help="training examples (synth 10000, cifar10 5000)")
    t.add_argument("--test-size", type=int, help="evaluation examples (synth 2000, cifar10 1000)")
    t.add_argument("--data-seed", type=int, default=1, help="seed of the synthetic task (default 1)")

    e = sub.add_parser("eval", help="print test accuracy of a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--config", type=Path, help=f"defaults to {CONFIG_NAME} next to the checkpoint")
    e.add_argument("--data", type=_parse_data, required=True)
    e.add_argument("--train-size", type=int, help="size of the training split the test split excludes")
    e.add_argument("--test-size", type=int)
    e.add_argument("--data-seed", type=int, default=1)

    b = sub.add_parser("bench", help="FFT filter vs direct convolution timing")
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--resolutions", type=_int_list, default=[8, 16, 32, 64, 128])
    b.add_argument("--channels", type=int, default=32)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--backends", type=Path, help="also write a compiled-vs-python kernel CSV here")

    i = sub.add_parser("inspect", help="dump per-channel effective kernels as PGM")
    i.add_argument("--checkpoint", type=Path, required=True)
    i.add_argument("--input", type=Path, required=True, help="P5/P6 image or .npy array [3, R, R]")
    i.add_argument("--out", type=Path, required=True)
    i.add_argument("--config", type=Path)
    i.add_argument("--block", help="block prefix such as s1.b0 (default: first block)")
    return p


# --- helpers -----------------------------------------------------------------------


def _load_data(kind, where, train_size, test_size, data_seed):
    from .data import load_cifar10, synth_splits

    if kind == "synth":
        return synth_splits(data_seed, train_size or 10_000, test_size or 2_000)
    return load_cifar10(where, train_size or 5000, test_size or 1000)


def _read_config(path) -> str:
    from .errors import FormatError

    if path is None:
        return ""
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"cannot read config: {exc}", path) from exc


def _config_text(model_cfg, train_cfg) -> str:
    import dataclasses

    lines = []
    for cfg in (model_cfg, train_cfg):
        for f in dataclasses.fields(cfg):
            v = getattr(cfg, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif hasattr(v, "value"):
                v = v.value
            lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def _model_config_for(path, checkpoint):
    from .train import apply_env_seed, parse_config_text

    model_cfg, train_cfg = parse_config_text(_read_config(path or checkpoint.parent / CONFIG_NAME))
    return model_cfg, apply_env_seed(train_cfg)


def _load_model(cfg_path, checkpoint):
    from .network import build_affnet, load_checkpoint

    model_cfg, train_cfg = _model_config_for(cfg_path, checkpoint)
    model = build_affnet(model_cfg, seed=train_cfg.seed, dtype=train_cfg.dtype)
    load_checkpoint(model.store, checkpoint)
    return model


def _read_input_image(path: Path, resolution: int) -> np.ndarray:
    from .data import standardize_cifar
    from .errors import FormatError
    from .pnm import read_pnm

    if path.suffix == ".npy":
        try:
            arr = np.load(path)
        except (OSError, ValueError) as exc:
            raise FormatError(f"cannot load array: {exc}", path) from exc
        if arr.shape != (3, resolution, resolution):
            raise FormatError(f"expected array of shape (3, {resolution}, {resolution}), got {arr.shape}", path)
        return arr.astype(np.float32)[None]
    img = read_pnm(path)
    if img.ndim == 2:
        img = np.repeat(img[None], 3, axis=0)
    if img.shape[1:] != (resolution, resolution):
        raise FormatError(f"image is {img.shape[2]}x{img.shape[1]}, model expects {resolution}x{resolution}", path)
    return standardize_cifar(img[None])


# --- commands ----------------------------------------------------------------------


def cmd_verify(args) -> int:
    from .verify import run_suites

    checks = run_suites(args.suite, args.precision)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed ({args.suite}, {args.precision})")
    return 1 if failed else 0


def cmd_train(args) -> int:
    from .network import build_affnet, micro_config
    from .train import apply_env_seed, parse_config_text, train_loop

    kind, where = args.data
    train, test = _load_data(kind, where, args.train_size, args.test_size, args.data_seed)
    text = _read_config(args.config)
    model_cfg, train_cfg = parse_config_text(text, micro_config(num_classes=train.num_classes))
    train_cfg = apply_env_seed(train_cfg)
    if model_cfg.num_classes != train.num_classes:
        from .errors import ConfigError
        raise ConfigError(f"num_classes={model_cfg.num_classes} but the data has {train.num_classes} classes")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / CONFIG_NAME).write_text(_config_text(model_cfg, train_cfg), encoding="utf-8")
    model = build_affnet(model_cfg, seed=train_cfg.seed, dtype=train_cfg.dtype)
    metrics = train_loop(model, train, test, train_cfg, args.out, log=print)
    final = metrics.final_eval_acc
    print(f"steps={len(metrics)} final_eval_acc={'n/a' if final is None else f'{final:.4f}'}")
    print(f"wrote {args.out / 'metrics.csv'} and {metrics.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .train import evaluate

    model = _load_model(args.config, args.checkpoint)
    kind, where = args.data
    _, test = _load_data(kind, where, args.train_size, args.test_size, args.data_seed)
    if model.config.num_classes != test.num_classes:
        from .errors import ConfigError
        raise ConfigError(f"model has {model.config.num_classes} classes, data has {test.num_classes}")
    print(f"accuracy={evaluate(model, test):.4f} n={len(test)}")
    return 0


def cmd_bench(args) -> int:
    from .bench import backend_csv, run_backend_bench, run_scaling_bench

    report = run_scaling_bench(args.resolutions, args.channels, args.reps)
    report.write_csv(args.out)
    for res in report.resolutions:
        print(f"R={res:4d} direct/fft = {report.ratio(res):8.2f}")
    if args.backends:
        args.backends.write_text(backend_csv(run_backend_bench(args.reps)))
        print(f"wrote {args.backends}")
    print(f"wrote {args.out}")
    return 0


def cmd_inspect(args) -> int:
    from .autodiff import Tape
    from .errors import ConfigError
    from .mixers import AffMixerParams, MixerKind, apply_mixer, effective_kernel
    from .pnm import write_pgm

    model = _load_model(args.config, args.checkpoint)
    if not model.config.mixer.uses_mask_network or model.config.mixer is MixerKind.AFF_NO_FFT:
        raise ConfigError(f"mixer {model.config.mixer.value} has no frequency-domain kernel to inspect")
    names = [b.prefix for b in model.blocks]
    target = args.block or names[0]
    if target not in names:
        raise ConfigError(f"unknown block {target!r}; choose from {', '.join(names)}")
    images = _read_input_image(args.input, model.config.input_resolution).astype(model.dtype)
    captured = {}
    calls = iter(names)

    def hook(kind, x, params):
        name = next(calls)
        if name == target:
            captured["x"] = x.value
        return apply_mixer(kind, x, params)

    model.forward(Tape(model.store, grad=False), images, mixer_override=hook)
    block = model.blocks[names.index(target)]
    p = AffMixerParams(**{k: v.astype(np.float64) for k, v in model.mixer_params(block).items()})
    k = effective_kernel(captured["x"].astype(np.float64), p, model.config.mixer).real[0]
    args.out.mkdir(parents=True, exist_ok=True)
    for c, plane in enumerate(k):
        write_pgm(args.out / f"{target}_c{c:03d}.pgm", plane)
    print(f"wrote {len(k)} kernels of {k.shape[1]}x{k.shape[2]} for block {target} to {args.out}")
    return 0


COMMANDS = {"verify": cmd_verify, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    from threadpoolctl import threadpool_limits

    try:
        with threadpool_limits(limits=args.threads):
            return COMMANDS[args.command](args)
    except AffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
