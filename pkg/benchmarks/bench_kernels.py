"""Time the numba and numpy backends of the conv/pool kernels and one training step.

    python benchmarks/bench_kernels.py [--repeat 5]

Numba compile time is excluded by a warm-up call per shape.
"""

import argparse
import time

import numpy as np

from ctxemo import kernels
from ctxemo.config import ModelConfig
from ctxemo.data import LabelVocabulary, synthesize_dataset
from ctxemo.model import EmotionModel, prepare_inputs
from ctxemo.optim import Adam


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rng):
    x = rng.standard_normal((32, 16, 28, 28)).astype(np.float32)
    cols, _, _ = kernels.im2col(x, 3, 3, 1, 1)
    pooled, arg = kernels.maxpool2d_forward(x, 2, 2)
    g = rng.standard_normal(pooled.shape).astype(np.float32)
    return {
        "im2col 32x16x28x28 k3": lambda: kernels.im2col(x, 3, 3, 1, 1),
        "col2im 32x16x28x28 k3": lambda: kernels.col2im(cols, x.shape, 3, 3, 1, 1),
        "maxpool fwd 2x2": lambda: kernels.maxpool2d_forward(x, 2, 2),
        "maxpool bwd 2x2": lambda: kernels.maxpool2d_backward(g, arg, 28, 28),
    }


def train_step_case():
    ds = synthesize_dataset(0, 32, LabelVocabulary.generic(4))
    cfg = ModelConfig.desk(C=4)
    data = prepare_inputs(ds, cfg)
    model = EmotionModel(cfg)
    opt = Adam(model.parameters(), cfg.lr)

    def step():
        out = model.forward(data)
        loss = model.losses(out, data.labels)["l_total"]
        opt.zero_grad()
        loss.backward()
        opt.step()

    return {"train step (32 samples, desk)": step}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    rows = {}
    for name in backends:
        kernels.use_backend(name)
        cases = {**kernel_cases(np.random.default_rng(0)), **train_step_case()}
        for label, fn in cases.items():
            rows.setdefault(label, {})[name] = best_of(fn, args.repeat)
    print(f"{'case':34s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for label, t in rows.items():
        line = f"{label:34s}" + "".join(f"{t[b] * 1e3:10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{t['numpy'] / t['numba']:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
