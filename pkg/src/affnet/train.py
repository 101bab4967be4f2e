"""Desk-scale training: AdamW, warmup + cosine schedule, metrics and checkpoints."""

from __future__ import annotations

import dataclasses
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tape
from .data import Dataset
from .errors import ConfigError, NonFiniteError, TrainingDiverged
from .network import AffNet, AffNetConfig, save_checkpoint

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8
CSV_HEADER = "step,epoch,lr,train_loss,train_acc,eval_acc,wall_ms"


@dataclass
class TrainConfig:
    optimizer: str = "adamw"
    base_lr: float = 2e-3
    min_lr: float = 2e-5
    weight_decay: float = 0.05
    warmup_steps: int = 50
    total_epochs: int = 5
    batch_size: int = 64
    schedule: str = "cosine"
    label_smoothing: float = 0.1
    seed: int = 0
    precision: str = "f32"
    # "auto" uses crop/flip where the dataset allows it
    augment: str = "auto"
    # wall-clock times are not reproducible, so they are only written on request
    record_wall_ms: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.optimizer != "adamw":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.schedule != "cosine":
            raise ConfigError(f"unsupported schedule {self.schedule!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}")
        if self.augment not in ("auto", "none", "flip", "crop_flip"):
            raise ConfigError(f"unknown augment mode {self.augment!r}")
        if not 0 <= self.min_lr <= self.base_lr:
            raise ConfigError("need 0 <= min_lr <= base_lr")
        if self.weight_decay < 0 or not 0 <= self.label_smoothing < 1:
            raise ConfigError("weight_decay must be >= 0 and label_smoothing in [0, 1)")
        if self.batch_size < 1 or self.total_epochs < 0 or self.warmup_steps < 0:
            raise ConfigError("batch_size >= 1, total_epochs >= 0, warmup_steps >= 0 required")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def total_steps(self, n_train: int) -> int:
        return self.total_epochs * math.ceil(n_train / self.batch_size)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


# --- schedule and optimizer ------------------------------------------------------


def lr_at(step: int, cfg: TrainConfig, total: int) -> float:
    """Linear warmup from 0 to base_lr, then cosine down to min_lr at ``total - 1``."""
    if not 0 <= step < total:
        raise ValueError(f"step {step} outside [0, {total})")
    w = cfg.warmup_steps
    if step < w:
        return cfg.base_lr * step / w
    span = total - 1 - w
    if span <= 0:
        return cfg.base_lr
    t = (step - w) / span
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * t))


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adamw_step(store: ParamStore, state: AdamWState, lr: float, weight_decay: float) -> None:
    """One in-place update of every parameter from the gradients held in ``store``."""
    for name, _ in store.items():
        if not np.all(np.isfinite(store.grad(name))):
            raise NonFiniteError(f"non-finite gradient in parameter {name!r}")
    state.t += 1
    bc1 = 1.0 - BETA1**state.t
    bc2 = 1.0 - BETA2**state.t
    for name, p in store.items():
        g = store.grad(name)
        if weight_decay:
            p -= lr * weight_decay * p
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= BETA1
        m += (1 - BETA1) * g
        v *= BETA2
        v += (1 - BETA2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


# --- metrics ---------------------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float | None = None
    wall_ms: float | None = None

    def csv_row(self) -> str:
        ev = "" if self.eval_acc is None else repr(float(self.eval_acc))
        wall = "" if self.wall_ms is None else f"{self.wall_ms:.3f}"
        return (f"{self.step},{self.epoch},{float(self.lr)!r},{float(self.train_loss)!r},"
                f"{float(self.train_acc)!r},{ev},{wall}")


@dataclass
class RunMetrics:
    records: list[StepRecord] = field(default_factory=list)
    checkpoint: Path | None = None

    def append(self, rec: StepRecord):
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("steps must be strictly increasing")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    @property
    def eval_accs(self) -> list[float]:
        return [r.eval_acc for r in self.records if r.eval_acc is not None]

    @property
    def final_eval_acc(self) -> float | None:
        accs = self.eval_accs
        return accs[-1] if accs else None

    def to_csv(self) -> str:
        return "\n".join([CSV_HEADER] + [r.csv_row() for r in self.records]) + "\n"

    def write_csv(self, path) -> None:
        _atomic_write(Path(path), self.to_csv().encode())


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# --- loop ------------------------------------------------------------------------


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Sample order for one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng([seed, epoch, 0]).permutation(n)


def augment_batch(images: np.ndarray, rng: np.random.Generator, crop: bool, flip: bool) -> np.ndarray:
    """Random pad-4 crop and horizontal flip, drawn per image."""
    out = images
    b, _, h, w = images.shape
    if crop:
        padded = np.pad(images, ((0, 0), (0, 0), (4, 4), (4, 4)))
        oy = rng.integers(0, 9, size=b)
        ox = rng.integers(0, 9, size=b)
        out = np.stack([padded[i, :, oy[i]:oy[i] + h, ox[i]:ox[i] + w] for i in range(b)])
    if flip:
        mask = rng.random(b) < 0.5
        if mask.any():
            out = out.copy() if out is images else out
            out[mask] = out[mask, :, :, ::-1]
    return out


def _augment_modes(cfg: TrainConfig, ds: Dataset) -> tuple[bool, bool]:
    if cfg.augment == "none":
        return False, False
    if cfg.augment == "flip":
        return False, True
    if cfg.augment == "crop_flip":
        return True, True
    return ds.crop_ok, ds.flip_ok


def evaluate(model: AffNet, ds: Dataset, batch_size: int = 256) -> float:
    if len(ds) == 0:
        return float("nan")
    logits = model.logits(ds.images.astype(model.dtype, copy=False), batch_size)
    return float(np.mean(np.argmax(logits, axis=1) == ds.labels))


def train_step(model: AffNet, images, labels, smoothing: float) -> tuple[float, float]:
    """Forward, backward and gradient accumulation; returns (loss, accuracy)."""
    model.store.zero_grad()
    tape = Tape(model.store)
    logits = model.forward(tape, images)
    loss = ad.softmax_cross_entropy(logits, labels, smoothing)
    loss_value = float(loss.value)
    if not math.isfinite(loss_value):
        return loss_value, float("nan")
    tape.backward(loss)
    acc = float(np.mean(np.argmax(logits.value, axis=1) == labels))
    return loss_value, acc


def train_loop(model: AffNet, train: Dataset, evalset: Dataset, cfg: TrainConfig,
               out_dir=None, log=None) -> RunMetrics:
    """Train ``model`` in place; writes ``metrics.csv`` and ``model.affw`` to ``out_dir``."""
    if np.dtype(model.dtype) != np.dtype(cfg.dtype):
        raise ConfigError(f"model precision {model.dtype} does not match cfg.precision={cfg.precision}")
    if model.config.num_classes != train.num_classes:
        raise ConfigError(f"model has {model.config.num_classes} classes, dataset has {train.num_classes}")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    n = len(train)
    total = cfg.total_steps(n)
    if total and cfg.warmup_steps >= total:
        raise ConfigError(f"warmup_steps={cfg.warmup_steps} must be below the {total} total steps")
    crop, flip = _augment_modes(cfg, train)
    state = AdamWState()
    metrics = RunMetrics()
    last_good = model.store.snapshot()
    images = train.images.astype(cfg.dtype, copy=False)
    step = 0
    for epoch in range(cfg.total_epochs):
        order = epoch_order(cfg.seed, epoch, n)
        aug_rng = np.random.default_rng([cfg.seed, epoch, 1])
        for start in range(0, n, cfg.batch_size):
            t0 = time.perf_counter()
            idx = order[start:start + cfg.batch_size]
            xb = augment_batch(images[idx], aug_rng, crop, flip)
            lr = lr_at(step, cfg, total)
            loss, acc = train_step(model, xb, train.labels[idx], cfg.label_smoothing)
            if not math.isfinite(loss):
                _dump_last_good(model, last_good, out_dir)
                raise TrainingDiverged(f"loss became {loss} at step {step} (epoch {epoch})")
            last_good = model.store.snapshot()
            adamw_step(model.store, state, lr, cfg.weight_decay)
            wall = (time.perf_counter() - t0) * 1e3 if cfg.record_wall_ms else None
            metrics.append(StepRecord(step, epoch, lr, loss, acc, None, wall))
            step += 1
        metrics.records[-1].eval_acc = evaluate(model, evalset)
        if log:
            r = metrics.records[-1]
            log(f"epoch {epoch}: train_loss={r.train_loss:.4f} eval_acc={r.eval_acc:.4f}")
    if out_dir is not None:
        metrics.write_csv(out_dir / "metrics.csv")
        metrics.checkpoint = out_dir / "model.affw"
        save_checkpoint(model.store, metrics.checkpoint)
    return metrics


def _dump_last_good(model: AffNet, snapshot: dict, out_dir):
    for name, value in snapshot.items():
        model.store.set(name, value)
    if out_dir is not None:
        save_checkpoint(model.store, Path(out_dir) / "last_good.affw")


# --- config files ----------------------------------------------------------------


def _parse_value(name: str, text: str, default):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            return [int(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    return text


def parse_config_text(text: str, model_cfg: AffNetConfig | None = None,
                      train_cfg: TrainConfig | None = None) -> tuple[AffNetConfig, TrainConfig]:
    """Apply ``key=value`` lines on top of the given (or default) configs.

    Blank lines and lines starting with ``#`` are skipped.  Every key must be a
    field name of either config; anything else is an error.
    """
    model_cfg = model_cfg or AffNetConfig()
    train_cfg = train_cfg or TrainConfig()
    m_fields = {f.name: getattr(model_cfg, f.name) for f in dataclasses.fields(model_cfg)}
    t_fields = {f.name: getattr(train_cfg, f.name) for f in dataclasses.fields(train_cfg)}
    m_changes, t_changes = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in t_fields:
            t_changes[key] = _parse_value(key, value, t_fields[key])
        elif key in m_fields:
            default = m_fields[key]
            m_changes[key] = value if key == "mixer" else _parse_value(key, value, default)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return model_cfg.replace(**m_changes), train_cfg.replace(**t_changes)


def load_config(path, model_cfg=None, train_cfg=None, environ=None) -> tuple[AffNetConfig, TrainConfig]:
    """Read a config file; ``AFF_SEED`` in the environment overrides ``seed``."""
    text = Path(path).read_text(encoding="utf-8") if path is not None else ""
    model_cfg, train_cfg = parse_config_text(text, model_cfg, train_cfg)
    return model_cfg, apply_env_seed(train_cfg, environ)


def apply_env_seed(train_cfg: TrainConfig, environ=None) -> TrainConfig:
    env = os.environ if environ is None else environ
    if env.get("AFF_SEED"):
        try:
            seed = int(env["AFF_SEED"])
        except ValueError as exc:
            raise ConfigError(f"AFF_SEED must be an integer, got {env['AFF_SEED']!r}") from exc
        train_cfg = train_cfg.replace(seed=seed)
    return train_cfg
