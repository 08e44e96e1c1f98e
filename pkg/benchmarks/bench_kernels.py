"""Compare the compiled and pure-Python event kernels.

    python3 benchmarks/bench_kernels.py [--triggers N] [--repeat R]

Both backends consume the same PCG64 stream and must agree bit for bit;
the script checks that before timing.
"""

import argparse
import statistics
import time

import numpy as np

from tripletsim import _kernels_py
from tripletsim.config import load_config
from tripletsim.detection import blocked_triggers, signal_fire_probability

try:
    from tripletsim import _kernels
except ImportError:
    _kernels = None


def kernel_args(boost: float):
    exp = load_config().experiment
    exp = exp.with_(p_spdc=min(1.0, exp.p_spdc * boost))
    p_s = signal_fire_probability(exp)
    p_fire = p_s + (1 - p_s) * exp.d2.dark_prob_per_gate
    return (p_fire, p_s / p_fire, exp.d2.delay_offset_ns * 1000, exp.d2.gate_width_ns * 1000,
            exp.d3.gate_width_ns * 1000, exp.delay_ns * 1000, exp.d1.jitter_sigma_ps,
            exp.d2.jitter_sigma_ps, exp.d3.jitter_sigma_ps, exp.d3.efficiency, exp.d3.dark_prob_per_gate,
            blocked_triggers(exp) > 0)


def bench(fn, n, args, repeat):
    times = []
    for r in range(repeat):
        t0 = time.perf_counter()
        out = fn(np.random.PCG64(r), n, *args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--triggers", type=int, default=2**24)
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    backends = [("python", _kernels_py.event_block)]
    if _kernels is not None:
        backends.insert(0, ("cython", _kernels.event_block))
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'case':<22}{'backend':<10}{'median s':>10}{'fires':>10}{'Mfires/s':>10}")
    for label, boost in (("reference rates", 1.0), ("signal x300", 300.0)):
        args = kernel_args(boost)
        results = {}
        for name, fn in backends:
            t, out = bench(fn, opts.triggers, args, opts.repeat)
            results[name] = (t, out)
            print(f"{label:<22}{name:<10}{t:>10.4f}{out[0]:>10}{out[0] / t / 1e6:>10.2f}")
        if len(results) == 2:
            a, b = results["cython"][1], results["python"][1]
            same = a[0] == b[0] and all(np.array_equal(x, y) for x, y in zip(a[1:], b[1:]))
            speedup = results["python"][0] / results["cython"][0]
            print(f"{'':<22}identical={same}  speedup={speedup:.1f}x")


if __name__ == "__main__":
    main()
