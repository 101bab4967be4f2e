"""AFF blocks and the staged AFFNet backbone.

Layout: 3x3 conv stem -> stem MBConvs -> three stages of
[stride-2 MBConv downsample, n AFF blocks] -> global average pool -> linear.

An AFF block mixes channels first, then tokens, each behind a pre-LayerNorm
and a residual add::

    y = MBConv(LN(x)) + x
    out = Mixer(LN(y)) + y
"""

from __future__ import annotations

import dataclasses
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import spectral
from .autodiff import ParamStore, Tape
from .errors import ConfigError, FormatError
from .mixers import MixerKind, apply_mixer, circular_dwconv_oracle, init_mixer


@dataclass
class AffNetConfig:
    stem_channels: list[int] = field(default_factory=lambda: [16, 16, 32])
    stem_strides: list[int] = field(default_factory=lambda: [2, 1, 1])
    stage_channels: list[int] = field(default_factory=lambda: [32, 64, 96])
    stage_blocks: list[int] = field(default_factory=lambda: [2, 4, 3])
    mixer: MixerKind = MixerKind.AFF_FFT
    groups: int = 8
    mbconv_expansion: int = 4
    num_classes: int = 10
    input_resolution: int = 32

    def __post_init__(self):
        self.mixer = MixerKind.parse(self.mixer)
        self.validate()

    def validate(self):
        if len(self.stem_channels) != len(self.stem_strides) or not self.stem_channels:
            raise ConfigError("stem_channels and stem_strides must be non-empty and equally long")
        if len(self.stage_channels) != 3 or len(self.stage_blocks) != 3:
            raise ConfigError("exactly three stages are expected")
        if any(s not in (1, 2) for s in self.stem_strides):
            raise ConfigError("stem strides must be 1 or 2")
        if min(self.stage_blocks) < 0 or min(self.stem_channels + self.stage_channels) < 1:
            raise ConfigError("channel and block counts must be positive")
        if self.mbconv_expansion < 1 or self.num_classes < 2:
            raise ConfigError("mbconv_expansion >= 1 and num_classes >= 2 required")
        for res in self.resolutions():
            if not spectral.is_pow2(res):
                raise ConfigError(f"resolution plan {self.resolutions()} contains a non power of two")
        if self.mixer.uses_mask_network:
            for c in self.stage_channels:
                if (2 * c) % self.groups:
                    raise ConfigError(f"2C={2 * c} not divisible by groups={self.groups}")

    def resolutions(self) -> list[int]:
        """Spatial size after the stem and after each stage."""
        r = self.input_resolution
        for s in self.stem_strides:
            if r % s:
                raise ConfigError(f"resolution {r} not divisible by stem stride {s}")
            r //= s
        out = [r]
        for _ in self.stage_channels:
            if r < 2:
                raise ConfigError(f"input_resolution {self.input_resolution} too small for three downsamples")
            r //= 2
            out.append(r)
        return out

    def replace(self, **changes) -> "AffNetConfig":
        return dataclasses.replace(self, **changes)


MICRO_EXPANSION = 2


def micro_config(**overrides) -> AffNetConfig:
    """Desk-scale preset at 32x32 input (287706 parameters with 10 classes).

    Uses the default channel plan with an MBConv expansion of 2.
    """
    overrides.setdefault("mbconv_expansion", MICRO_EXPANSION)
    return AffNetConfig(**overrides)


# Channel plans of the full-size models (input 256, constructible but not trained here).
FULL_PLANS = {
    "affnet-et": ([32, 32, 48, 48, 48], [64, 104, 144]),
    "affnet-t": ([32, 32, 48, 48, 48], [96, 160, 192]),
    "affnet": ([32, 32, 64, 64, 64], [128, 256, 320]),
}


def full_config(name: str, **overrides) -> AffNetConfig:
    stem, stages = FULL_PLANS[name]
    base = dict(stem_channels=stem, stem_strides=[2, 1, 2, 1, 1], stage_channels=stages,
                stage_blocks=[2, 4, 3], num_classes=1000, input_resolution=256)
    base.update(overrides)
    return AffNetConfig(**base)


# --- parameter construction ---------------------------------------------------


def _kaiming(rng, shape, fan_in, gain=2.0):
    return rng.standard_normal(shape) * math.sqrt(gain / fan_in)


def _add_mbconv(store, rng, prefix, cin, cout, expansion):
    hidden = cin * expansion
    store.add(f"{prefix}.expand.w", _kaiming(rng, (hidden, cin), cin))
    store.add(f"{prefix}.expand.b", np.zeros(hidden))
    store.add(f"{prefix}.dw.w", _kaiming(rng, (hidden, 3, 3), 9))
    store.add(f"{prefix}.dw.b", np.zeros(hidden))
    store.add(f"{prefix}.project.w", _kaiming(rng, (cout, hidden), hidden, gain=1.0))
    store.add(f"{prefix}.project.b", np.zeros(cout))


def _add_ln(store, prefix, c):
    store.add(f"{prefix}.g", np.ones(c))
    store.add(f"{prefix}.b", np.zeros(c))


@dataclass
class BlockSpec:
    prefix: str
    channels: int
    resolution: int


class AffNet:
    """Parameters live in ``store``; the structure is fully determined by ``config``."""

    def __init__(self, config: AffNetConfig, store: ParamStore):
        self.config = config
        self.store = store
        res = config.resolutions()
        self.blocks: list[BlockSpec] = []
        self._mixer_key_cache: dict[str, list[str]] = {}
        for si, (c, n) in enumerate(zip(config.stage_channels, config.stage_blocks)):
            for bi in range(n):
                self.blocks.append(BlockSpec(f"s{si + 1}.b{bi}", c, res[si + 1]))

    @property
    def dtype(self):
        return self.store.dtype

    def mixer_params(self, block: BlockSpec) -> dict[str, np.ndarray]:
        return {k: self.store[f"{block.prefix}.mixer.{k}"] for k in self._mixer_keys(block)}

    def _mixer_keys(self, block: BlockSpec) -> list[str]:
        keys = self._mixer_key_cache.get(block.prefix)
        if keys is None:
            pre = block.prefix + ".mixer."
            keys = [k[len(pre):] for k in self.store.names() if k.startswith(pre)]
            self._mixer_key_cache[block.prefix] = keys
        return keys

    def forward(self, tape: Tape, images, mixer_override=None) -> ad.Var:
        """Logits ``[B, num_classes]`` for ``images[B, 3, R, R]``.

        ``mixer_override(kind, x, params)`` replaces every token-mixer call.
        """
        cfg = self.config
        x = images if isinstance(images, ad.Var) else tape.constant(np.asarray(images, dtype=self.dtype))
        if x.shape[1:] != (3, cfg.input_resolution, cfg.input_resolution):
            raise ConfigError(f"expected images [B, 3, {cfg.input_resolution}, {cfg.input_resolution}], "
                              f"got {x.shape}")
        P = tape.param
        x = ad.relu6(ad.add_bias(ad.conv3x3(x, P("stem.conv.w"), cfg.stem_strides[0]), P("stem.conv.b")))
        cin = cfg.stem_channels[0]
        for i, (c, s) in enumerate(zip(cfg.stem_channels[1:], cfg.stem_strides[1:]), start=1):
            x = mbconv(tape, f"stem.mb{i}", x, s, residual=(s == 1 and c == cin))
            cin = c
        mix = mixer_override or apply_mixer
        blocks = iter(self.blocks)
        for si, (c, n) in enumerate(zip(cfg.stage_channels, cfg.stage_blocks), start=1):
            x = mbconv(tape, f"s{si}.down", x, 2, residual=False)
            for _ in range(n):
                blk = next(blocks)
                params = {k: P(f"{blk.prefix}.mixer.{k}") for k in self._mixer_keys(blk)}
                x = aff_block(tape, blk.prefix, x, cfg.mixer, params, mix)
        pooled = ad.global_avg_pool(x)
        return ad.linear(pooled, P("head.w"), P("head.b"))

    def logits(self, images, batch_size=256, mixer_override=None) -> np.ndarray:
        out = []
        for start in range(0, len(images), batch_size):
            tape = Tape(self.store, grad=False)
            out.append(self.forward(tape, images[start:start + batch_size], mixer_override).value)
        return np.concatenate(out) if out else np.zeros((0, self.config.num_classes), self.dtype)


def mbconv(tape: Tape, prefix: str, x: ad.Var, stride: int, residual: bool) -> ad.Var:
    """Inverted residual: 1x1 expand -> ReLU6 -> 3x3 depthwise -> ReLU6 -> 1x1 project."""
    P = tape.param
    h = ad.relu6(ad.pointwise_conv(x, P(f"{prefix}.expand.w"), P(f"{prefix}.expand.b")))
    h = ad.relu6(ad.add_bias(ad.depthwise_conv3x3(h, P(f"{prefix}.dw.w"), stride), P(f"{prefix}.dw.b")))
    h = ad.pointwise_conv(h, P(f"{prefix}.project.w"), P(f"{prefix}.project.b"))
    return ad.add(h, x) if residual else h


def aff_block(tape: Tape, prefix: str, x: ad.Var, kind: MixerKind, mixer_params: dict,
              mix=apply_mixer) -> ad.Var:
    P = tape.param
    y = ad.add(mbconv(tape, f"{prefix}.mb", ad.layer_norm(x, P(f"{prefix}.ln1.g"), P(f"{prefix}.ln1.b")),
                      1, residual=False), x)
    mixed = mix(kind, ad.layer_norm(y, P(f"{prefix}.ln2.g"), P(f"{prefix}.ln2.b")), mixer_params)
    return ad.add(mixed, y)


def add_block_params(store: ParamStore, rng, prefix, channels, expansion, kind, groups, resolution):
    _add_ln(store, f"{prefix}.ln1", channels)
    _add_mbconv(store, rng, f"{prefix}.mb", channels, channels, expansion)
    _add_ln(store, f"{prefix}.ln2", channels)
    for k, v in init_mixer(kind, channels, groups, rng, resolution).items():
        store.add(f"{prefix}.mixer.{k}", v)


def build_affnet(cfg: AffNetConfig, seed: int = 0, dtype=np.float32) -> AffNet:
    """Deterministically initialize a model from ``(cfg, seed)``."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore(dtype)
    c0 = cfg.stem_channels[0]
    store.add("stem.conv.w", _kaiming(rng, (c0, 3, 3, 3), 27))
    store.add("stem.conv.b", np.zeros(c0))
    cin = c0
    for i, c in enumerate(cfg.stem_channels[1:], start=1):
        _add_mbconv(store, rng, f"stem.mb{i}", cin, c, cfg.mbconv_expansion)
        cin = c
    res = cfg.resolutions()
    for si, (c, n) in enumerate(zip(cfg.stage_channels, cfg.stage_blocks), start=1):
        _add_mbconv(store, rng, f"s{si}.down", cin, c, cfg.mbconv_expansion)
        for bi in range(n):
            add_block_params(store, rng, f"s{si}.b{bi}", c, cfg.mbconv_expansion, cfg.mixer,
                             cfg.groups, res[si])
        cin = c
    bound = 1.0 / math.sqrt(cin)
    store.add("head.w", rng.uniform(-bound, bound, (cfg.num_classes, cin)))
    store.add("head.b", np.zeros(cfg.num_classes))
    return AffNet(cfg, store)


def model_forward(model: AffNet, images) -> np.ndarray:
    return model.forward(Tape(model.store, grad=False), images).value


def oracle_mixer(kind, x: ad.Var, params: dict) -> ad.Var:
    """Mixer replacement that evaluates the AFF filter as a direct circular
    convolution with its effective kernel.  Forward only."""
    from .mixers import AffMixerParams, effective_kernel

    kind = MixerKind(kind)
    if kind is not MixerKind.AFF_FFT:
        return apply_mixer(kind, x, params)
    p = AffMixerParams(**{k: v.value.astype(np.float64) for k, v in params.items()})
    xv = x.value.astype(np.float64)
    k = effective_kernel(xv, p).real
    return x.tape.constant(circular_dwconv_oracle(xv, k).astype(x.dtype))


# --- accounting ---------------------------------------------------------------


def count_params(model: AffNet) -> int:
    return model.store.num_scalars()


def fft_flops(h: int, w: int) -> int:
    """Real FLOPs of one complex 2D FFT plane: ``5 N log2 N``, ``N = H*W``."""
    n = h * w
    return int(5 * n * math.log2(n)) if n > 1 else 0


def mixer_flops(kind: MixerKind, channels: int, res: int, groups: int) -> int:
    kind = MixerKind(kind)
    n = res * res
    if kind is MixerKind.IDENTITY:
        return 0
    if kind is MixerKind.CONV3X3:
        return 2 * 9 * channels * n
    total = 0
    width = 2 * channels
    if kind.uses_mask_network:
        total += 2 * 2 * n * width * width // groups  # two grouped 1x1 layers, MAC x 2
    if kind is not MixerKind.AFF_NO_FFT:
        total += 2 * channels * fft_flops(res, res)  # forward + inverse
    total += 6 * channels * n  # complex product (or 2 for a sum; counted uniformly)
    return total


def count_flops(model: AffNet, resolution: int | None = None) -> int:
    """Multiply-accumulates x 2 of convs/linears plus FFT and mask products.

    Normalization, activations, bias adds and residual adds are not counted.
    """
    cfg = model.config
    if resolution is not None and resolution != cfg.input_resolution:
        cfg = cfg.replace(input_resolution=resolution)
    res = cfg.resolutions()
    e = cfg.mbconv_expansion
    r = cfg.input_resolution // cfg.stem_strides[0]
    flops = 2 * r * r * cfg.stem_channels[0] * 27

    def mb(cin, cout, r_in, stride):
        hid = cin * e
        r_out = r_in // stride
        return 2 * (r_in * r_in * cin * hid + r_out * r_out * hid * 9 + r_out * r_out * hid * cout)

    cin = cfg.stem_channels[0]
    for c, s in zip(cfg.stem_channels[1:], cfg.stem_strides[1:]):
        flops += mb(cin, c, r, s)
        r //= s
        cin = c
    for si, (c, n) in enumerate(zip(cfg.stage_channels, cfg.stage_blocks), start=1):
        flops += mb(cin, c, res[si - 1], 2)
        for _ in range(n):
            flops += mb(c, c, res[si], 1) + mixer_flops(cfg.mixer, c, res[si], cfg.groups)
        cin = c
    flops += 2 * cin * cfg.num_classes
    return flops


# --- checkpoints ----------------------------------------------------------------

MAGIC = b"AFFW"
VERSION = 1


def save_checkpoint(store: ParamStore, path) -> None:
    """Little-endian: magic, u16 version, u32 count, then per entry
    u16 name length, UTF-8 name, u8 rank, u32 dims, float32 data."""
    parts = [MAGIC, struct.pack("<HI", VERSION, len(store))]
    for name, value in store.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", value.ndim) + struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    tmp.replace(path)


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint: {exc}", path) from exc
    if data[:4] != MAGIC:
        raise FormatError("not an AFFW checkpoint (bad magic)", path)
    pos = 4
    try:
        version, count = struct.unpack_from("<HI", data, pos)
        pos += 6
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", path)
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) * 4
            if pos + size > len(data):
                raise FormatError(f"truncated data for {name!r}", path)
            out[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).reshape(dims).copy()
            pos += size
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint: {exc}", path) from exc
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes", path)
    return out


def load_checkpoint(store: ParamStore, path) -> None:
    """Load into an existing store; names and shapes must match exactly."""
    entries = read_checkpoint(path)
    if set(entries) != set(store.names()):
        missing = sorted(set(store.names()) - set(entries))
        extra = sorted(set(entries) - set(store.names()))
        raise FormatError(f"parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})", path)
    for name, value in entries.items():
        if value.shape != store[name].shape:
            raise FormatError(f"{name}: shape {value.shape} != model {store[name].shape}", path)
    for name, value in entries.items():
        store.set(name, value)
