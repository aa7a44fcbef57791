"""Compiled vs numpy LSTM recurrence, forward and backward.

    python benchmarks/bench_lstm.py [--batch 300] [--frames 150] [--units 20] [--repeat 5]

Also times one full-model training step under each backend (a subprocess
with ``AVHIGHLIGHT_PURE_PYTHON=1`` for the fallback) and checks that the two
kernels agree.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from avhighlight.autodiff import _lstm_py

try:
    from avhighlight.autodiff import _lstm_kernels
except ImportError:
    _lstm_kernels = None

STEP_SCRIPT = """
import json, sys, timeit
import numpy as np
from avhighlight.autodiff import BACKEND, backward
from avhighlight.model import ModelSpec, build_graph, init_params, with_loss

batch, repeat = int(sys.argv[1]), int(sys.argv[2])
spec = ModelSpec(modalities=("googlenet", "affect_arousal", "faces"), dims={"googlenet": 64, "affect_arousal": 16})
g = with_loss(build_graph(spec), "ccc")
p = init_params(spec, 0)
rng = np.random.default_rng(0)
feeds = {m: np.abs(rng.standard_normal((batch,) + spec.input_shape(m))) for m in spec.modalities}
feeds["labels"] = rng.uniform(0, 2, batch)
step = lambda: backward(g, p, feeds, "loss", training=True, rng_seed=1)
step()
print(json.dumps({"backend": BACKEND, "seconds": min(timeit.repeat(step, number=1, repeat=repeat))}))
"""


def kernel_inputs(batch, frames, units, seed=0):
    rng = np.random.default_rng(seed)
    xproj = rng.standard_normal((batch, frames, 4 * units))
    U = 0.3 * rng.standard_normal((units, 4 * units))
    hmask = (rng.random((batch, units)) > 0.5) * 2.0
    dh = rng.standard_normal((batch, frames, units))
    return xproj, U, hmask, dh


def time_kernel(mod, args, repeat):
    xproj, U, hmask, dh = args
    h, c, gates, _ = mod.lstm_forward(xproj, U, hmask, False)
    fwd = min(timeit.repeat(lambda: mod.lstm_forward(xproj, U, hmask, False), number=1, repeat=repeat))
    bwd = min(timeit.repeat(lambda: mod.lstm_backward(dh, gates, c, U, hmask, False), number=1, repeat=repeat))
    return fwd, bwd


def training_step(pure, batch, repeat):
    env = dict(os.environ)
    if pure:
        env["AVHIGHLIGHT_PURE_PYTHON"] = "1"
    else:
        env.pop("AVHIGHLIGHT_PURE_PYTHON", None)
    out = subprocess.run([sys.executable, "-c", STEP_SCRIPT, str(batch), str(repeat)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=300)
    ap.add_argument("--frames", type=int, default=150)
    ap.add_argument("--units", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    inputs = kernel_inputs(args.batch, args.frames, args.units)
    print(f"LSTM recurrence, batch {args.batch}, {args.frames} steps, {args.units} units (best of {args.repeat})")
    rows = [("python", _lstm_py)] + ([("compiled", _lstm_kernels)] if _lstm_kernels else [])
    base = None
    for name, mod in rows:
        fwd, bwd = time_kernel(mod, inputs, args.repeat)
        base = base or (fwd, bwd)
        print(f"  {name:9s} forward {fwd * 1e3:8.2f} ms ({base[0] / fwd:4.1f}x)   "
              f"backward {bwd * 1e3:8.2f} ms ({base[1] / bwd:4.1f}x)")
    if _lstm_kernels is None:
        print("  compiled kernel not built; only the fallback was timed")
        return 0

    xproj, U, hmask, dh = inputs
    a = _lstm_py.lstm_forward(xproj, U, hmask, True)
    b = _lstm_kernels.lstm_forward(xproj, U, hmask, True)
    fdiff = max(float(np.abs(x - y).max()) for x, y in zip(a, b))
    bdiff = float(np.abs(_lstm_py.lstm_backward(dh, a[2], a[1], U, hmask, True)
                         - _lstm_kernels.lstm_backward(dh, b[2], b[1], U, hmask, True)).max())
    print(f"  max |python - compiled|: forward {fdiff:.1e}, backward {bdiff:.1e}")

    print(f"Training step, 3-modality model, batch {args.batch}")
    for pure in (True, False):
        r = training_step(pure, args.batch, args.repeat)
        print(f"  {r['backend']:9s} {r['seconds'] * 1e3:8.1f} ms")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
