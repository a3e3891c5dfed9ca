#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy fallback.

Per-op microbenchmarks run both implementations in this process and report
timings plus the worst relative deviation between backends. The end-to-end
training benchmark re-launches this script with TABDRO_KERNELS set, so each
backend is measured exactly as a user would run it.

Usage: python benchmarks/bench_kernels.py [--train-only | --ops-only]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))


def _timeit(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _rel_dev(a, b):
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-300)
    return float(np.abs(a - b).max() / scale)


def bench_ops():
    from tabdro.kernels import pykern

    try:
        from tabdro.kernels import _ckern
    except ImportError:
        print("compiled backend not built; per-op comparison unavailable")
        return

    rng = np.random.default_rng(0)
    b, f, d, c = 1024, 12, 64, 16
    a2 = np.ascontiguousarray(rng.normal(size=(b, d)))
    w2 = np.ascontiguousarray(rng.normal(size=(d, d)))
    g2 = np.ascontiguousarray(rng.normal(size=(b, d)))
    logits = np.ascontiguousarray(rng.normal(size=(b, c)))
    targets = rng.integers(0, c, b).astype(np.int64)
    weights = np.ones(b)
    t3 = np.ascontiguousarray(rng.normal(size=(b, f, d)))
    s3 = np.ascontiguousarray(rng.normal(size=(b, f, f)))

    cases = [
        ("matmul (1024x64 @ 64x64)", lambda k: k.matmul(a2, w2)),
        ("matmul_at_b", lambda k: k.matmul_at_b(a2, g2)),
        ("matmul_a_bt", lambda k: k.matmul_a_bt(a2, w2)),
        ("bmm_nt (1024x12x64)", lambda k: k.bmm_nt(t3, t3)),
        ("softmax_xent (1024x16)", lambda k: k.softmax_xent(logits, targets, weights)),
        ("softmax_rows (1024x12x12)", lambda k: k.softmax_rows(s3)),
        ("gelu_fwd (1024x64)", lambda k: k.gelu_fwd(a2)),
    ]
    print(f"{'op':32} {'compiled':>10} {'numpy':>10} {'speedup':>8} {'max rel dev':>12}")
    for name, fn in cases:
        tc = _timeit(lambda: fn(_ckern))
        tp = _timeit(lambda: fn(pykern))
        rc, rp = fn(_ckern), fn(pykern)
        if isinstance(rc, tuple):
            dev = max(_rel_dev(x, y) for x, y in zip(rc, rp))
        else:
            dev = _rel_dev(rc, rp)
        print(f"{name:32} {tc * 1e3:9.3f}ms {tp * 1e3:9.3f}ms {tp / tc:7.2f}x {dev:12.2e}")


def bench_train_epoch():
    from tabdro import KERNEL_BACKEND
    from tabdro.dataset import synth_spurious
    from tabdro.model import LoopConfig, init_model, train_params

    ds = synth_spurious(n=4000, k=6, bias=0.9, minority_frac=0.1, seed=0)
    for variant in ("mlp", "attn-lite"):
        model = init_model(ds.schema, d=64, variant=variant, seed=0)
        cfg = LoopConfig(epochs=1, lr=0.01, batch_size=1024, mask_rate=0.15)
        start = time.perf_counter()
        train_params(model, ds, cfg, seed=0)
        elapsed = time.perf_counter() - start
        print(f"  {KERNEL_BACKEND:8} {variant:9} one epoch (n=4000, d=64, k=6): {elapsed:.3f}s")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--train-only", action="store_true")
    parser.add_argument("--ops-only", action="store_true")
    parser.add_argument("--epoch-child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.epoch_child:
        bench_train_epoch()
        return

    if not args.train_only:
        bench_ops()
    if not args.ops_only:
        print("\ntraining epoch (fresh process per backend):")
        for backend in ("compiled", "python"):
            env = dict(os.environ, TABDRO_KERNELS=backend)
            result = subprocess.run(
                [sys.executable, __file__, "--epoch-child"],
                env=env, capture_output=True, text=True,
            )
            if result.returncode != 0:
                print(f"  {backend:8} unavailable ({result.stderr.strip().splitlines()[-1]})")
            else:
                print(result.stdout, end="")


if __name__ == "__main__":
    main()
