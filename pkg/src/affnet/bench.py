"""Timing benchmarks.

:func:`run_scaling_bench` times the frequency-domain filter against direct
circular convolution with the same effective kernel, which exhibits the
``O(N log N)`` versus ``O(N^2)`` separation in the number of tokens ``N``.
:func:`run_backend_bench` compares the compiled kernels with their numpy
fallbacks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend
from .errors import AgreementError, ConfigError
from .mixers import AffMixerParams, MixerKind, aff_forward, circular_dwconv_oracle, effective_kernel
from .network import mixer_flops
from .spectral import get_plan, is_pow2

BENCH_HEADER = "resolution,channels,path,reps,median_ns,flops_est"
FFT_PATH = "fft_filter"
DIRECT_PATH = "direct_conv"
AGREEMENT_TOL = 1e-4


@dataclass(frozen=True)
class BenchRow:
    resolution: int
    channels: int
    path: str
    reps: int
    median_ns: int
    flops_est: int

    def csv_row(self) -> str:
        return f"{self.resolution},{self.channels},{self.path},{self.reps},{self.median_ns},{self.flops_est}"


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)

    def median(self, resolution: int, path: str) -> int:
        for r in self.rows:
            if r.resolution == resolution and r.path == path:
                return r.median_ns
        raise KeyError((resolution, path))

    def ratio(self, resolution: int) -> float:
        """time(direct) / time(fft) at one resolution."""
        return self.median(resolution, DIRECT_PATH) / self.median(resolution, FFT_PATH)

    @property
    def resolutions(self) -> list[int]:
        return sorted({r.resolution for r in self.rows})

    def to_csv(self) -> str:
        return "\n".join([BENCH_HEADER] + [r.csv_row() for r in self.rows]) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def direct_flops(channels: int, resolution: int) -> int:
    """MACs x 2 of a full circular convolution: every output sums over every tap."""
    n = resolution * resolution
    return 2 * channels * n * n


def fft_filter_flops(channels: int, resolution: int, groups: int) -> int:
    return mixer_flops(MixerKind.AFF_FFT, channels, resolution, groups)


def time_call(fn, reps: int, warmup: int = 1) -> int:
    """Median wall time in integer nanoseconds over ``reps`` runs after ``warmup``."""
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return int(np.median(samples))


def _rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.complex128 if np.iscomplexobj(a) else np.float64)
    scale = max(float(np.abs(b).max()), np.finfo(np.float32).tiny)
    return float(np.abs(a - b).max() / scale)


def run_scaling_bench(resolutions=(8, 16, 32, 64, 128), channels: int = 32, reps: int = 5,
                      groups: int = 8, seed: int = 0, batch: int = 1) -> BenchReport:
    """Time both token-mixing paths on identical seeded 32-bit inputs.

    The direct path consumes ``real(effective_kernel(x, p))`` so both paths
    compute the same function; agreement is checked before any timing.
    """
    if reps < 5:
        raise ConfigError("reps must be >= 5")
    report = BenchReport()
    for res in resolutions:
        if not is_pow2(res):
            raise ConfigError(f"resolution {res} is not a power of two")
        rng = np.random.default_rng([seed, res])
        x = rng.standard_normal((batch, channels, res, res)).astype(np.float32)
        p = AffMixerParams.init(channels, groups, rng, out_scale=1.0, dtype=np.float32)
        k = np.ascontiguousarray(effective_kernel(x, p).real.astype(np.float32))
        get_plan(res, res)  # build plans outside the timed region

        def fft_path():
            return aff_forward(x, p)

        def direct_path():
            return circular_dwconv_oracle(x, k, dtype=np.float32)

        err = _rel_err(fft_path(), direct_path())
        if not err <= AGREEMENT_TOL:
            raise AgreementError(f"paths disagree at {res}x{res}: rel err {err:.3e} > {AGREEMENT_TOL}")
        report.rows.append(BenchRow(res, channels, FFT_PATH, reps, time_call(fft_path, reps),
                                    fft_filter_flops(channels, res, groups)))
        report.rows.append(BenchRow(res, channels, DIRECT_PATH, reps, time_call(direct_path, reps),
                                    direct_flops(channels, res)))
    return report


# --- compiled vs fallback kernels ------------------------------------------------

BACKEND_HEADER = "kernel,shape,backend,reps,median_ns,speedup"


def _backend_cases(rng):
    x32 = rng.standard_normal((64, 64, 8, 8)).astype(np.float32)
    w32 = rng.standard_normal((64, 3, 3)).astype(np.float32)
    g32 = rng.standard_normal((64, 64, 8, 8)).astype(np.float32)
    planes = (rng.standard_normal((2048, 16, 16)) + 1j * rng.standard_normal((2048, 16, 16))).astype(np.complex64)
    plan = get_plan(16, 16, dtype=np.complex64)
    tables = (*plan.rows(16), *plan.rows(16))
    cx = rng.standard_normal((32, 16, 16))
    ck = rng.standard_normal((32, 16, 16))
    return [
        ("fft2_planes", "2048x16x16 c64", lambda k: k.fft2_planes(planes, *tables)),
        ("dwconv3x3", "64x64x8x8 f32", lambda k: k.dwconv3x3(x32, w32, 1)),
        ("dwconv3x3_backward", "64x64x8x8 f32", lambda k: k.dwconv3x3_backward(g32, x32, w32, 1)),
        ("circular_conv", "32x16x16 f64", lambda k: k.circular_conv(cx, ck)),
    ]


def _as_tuple(out):
    return out if isinstance(out, tuple) else (out,)


def run_backend_bench(reps: int = 5, seed: int = 0) -> list[dict]:
    """Median times of each hot kernel under every available backend.

    Outputs are compared across backends before timing.
    """
    backends = {name: _backend.get(name) for name in _backend.available()}
    rows = []
    for kernel, shape, call in _backend_cases(np.random.default_rng(seed)):
        outs = {name: _as_tuple(call(mod)) for name, mod in backends.items()}
        ref = outs.get("python")
        for name, out in outs.items():
            for a, b in zip(out, ref or out):
                err = _rel_err(a, b)
                if err > AGREEMENT_TOL:
                    raise AgreementError(f"{kernel}: backend {name} disagrees with python ({err:.2e})")
        times = {name: time_call(lambda m=mod: call(m), reps) for name, mod in backends.items()}
        base = times.get("python")
        for name, ns in times.items():
            rows.append({"kernel": kernel, "shape": shape, "backend": name, "reps": reps,
                         "median_ns": ns, "speedup": base / ns if base else 1.0})
    return rows


def backend_csv(rows: list[dict]) -> str:
    lines = [BACKEND_HEADER]
    for r in rows:
        lines.append(f"{r['kernel']},{r['shape']},{r['backend']},{r['reps']},{r['median_ns']},{r['speedup']:.2f}")
    return "\n".join(lines) + "\n"
