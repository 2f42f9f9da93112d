"""Kernel benchmark: numba-compiled loops versus the pure-numpy fallback.

Run as ``python -m chexchain.bench``.  Times each hot kernel on a
representative shape under both backends, verifies the outputs agree
bit-for-bit, and reports the speedup.  A full encoder forward pass is
included as an end-to-end composite.
"""

import time

import numpy as np

from . import backend
from .autodiff import const
from .encoder import EncoderConfig, build_encoder, encode
from .rng import substream

REPEATS = 5


def _timeit(fn, repeats: int = REPEATS) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _kernel_cases():
    rng = substream(0, "bench")
    n, c, h, w = 16, 8, 64, 64
    kh = kw = 3
    stride = 1
    oh, ow = (h - kh) // stride + 1, (w - kw) // stride + 1
    x = rng.standard_normal((n, c, h, w))
    cols = rng.standard_normal((n, c * kh * kw, oh * ow))
    window = 2
    ph, pw = h // window, w // window
    dy_pool = rng.standard_normal((n, c, ph, pw))

    def im2col():
        return backend.kernels.im2col(x, kh, kw, stride, oh, ow)

    def col2im():
        return backend.kernels.col2im(cols, c, h, w, kh, kw, stride, oh, ow)

    def maxpool_fwd():
        return backend.kernels.maxpool_fwd(x, window, window)

    def maxpool_bwd():
        _, idx = backend.kernels.maxpool_fwd(x, window, window)
        return backend.kernels.maxpool_bwd(dy_pool, idx, h, w)

    def avgpool_fwd():
        return backend.kernels.avgpool_fwd(x, window, window)

    def avgpool_bwd():
        return backend.kernels.avgpool_bwd(dy_pool, window, window, h, w)

    return [
        ("im2col 16x8x64x64 k3", im2col),
        ("col2im 16x8x64x64 k3", col2im),
        ("maxpool_fwd 2x2", maxpool_fwd),
        ("maxpool_bwd 2x2", maxpool_bwd),
        ("avgpool_fwd 2x2", avgpool_fwd),
        ("avgpool_bwd 2x2", avgpool_bwd),
    ]


def _encoder_case():
    config = EncoderConfig(
        input_resolution=64,
        growth_rate=8,
        num_dense_blocks=3,
        convblocks_per_dense_block=2,
        initial_channels=8,
    )
    params = build_encoder(config, seed=0)
    images = const(substream(1, "bench").random((8, 1, 64, 64)))

    def run():
        return encode(params, images, mode="eval").data

    return "encoder fwd 8x1x64x64", run


def _as_arrays(result):
    if isinstance(result, tuple):
        return [np.asarray(r) for r in result]
    return [np.asarray(result)]


def main() -> int:
    original = backend.active_backend()
    names = backend.available_backends()
    cases = _kernel_cases() + [_encoder_case()]
    rows = []
    outputs = {}
    try:
        for name in names:
            backend.set_backend(name)
            for label, fn in cases:
                fn()  # warm-up (numba compilation, caches)
            outputs[name] = {label: _as_arrays(fn()) for label, fn in cases}
            rows.append((name, [(label, _timeit(fn)) for label, fn in cases]))
    finally:
        backend.set_backend(original)

    if len(names) == 2:
        a, b = names
        for label, _ in cases:
            for x, y in zip(outputs[a][label], outputs[b][label]):
                if not np.array_equal(x, y):
                    print(f"MISMATCH: {label} differs between {a} and {b}")
                    return 1
        print(f"outputs bit-identical across backends: {', '.join(names)}\n")

    width = max(len(label) for label, _ in cases)
    header = f"{'kernel':<{width}}" + "".join(f"  {n:>12}" for n, _ in rows)
    by_name = {n: timings for n, timings in rows}
    both = "numba" in by_name and "numpy" in by_name
    if both:
        header += f"  {'numpy/numba':>11}"
    print(header)
    for i, (label, _) in enumerate(cases):
        line = f"{label:<{width}}"
        for _, timings in rows:
            line += f"  {timings[i][1] * 1e3:>10.2f}ms"
        if both and by_name["numba"][i][1] > 0:
            ratio = by_name["numpy"][i][1] / by_name["numba"][i][1]
            line += f"  {ratio:>10.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
