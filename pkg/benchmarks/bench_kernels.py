"""Time the compiled kernels against the pure-Python fallback.

Run from the repository root after installing::

    python3 benchmarks/bench_kernels.py [--repeat N]

Every kernel is called with identical inputs on each available backend;
results are checked for agreement before timings are reported.
"""
import argparse
import timeit

import numpy as np

from elephant_abm.agent import _Window
from elephant_abm.kernels import available_backends


def hmm_inputs(n, rng):
    log_delta = np.log(np.array([0.4, 0.6]))
    log_gamma = np.log(np.array([[0.8775, 0.1225], [0.0904, 0.9096]]))
    log_b = np.ascontiguousarray(rng.normal(0.0, 2.0, (n, 2)))
    starts = np.zeros(n, np.uint8)
    starts[::500] = 1
    return log_delta, log_gamma, log_b, starts


def cases(rng):
    ld, lg, lb, st = hmm_inputs(20_000, rng)
    mask = np.ascontiguousarray(rng.random((200, 200)) < 0.01, dtype=np.uint8)
    excess = np.ascontiguousarray(np.where(rng.random((120, 120)) < 0.1, 40.0, 0.0))
    dr, dc, sec = _Window(25.0).offsets()
    return {
        "forward_log (T=20000)": (lambda m: m.forward_log(ld, lg, lb, st), lambda r: r[1]),
        "backward_log (T=20000)": (lambda m: m.backward_log(lg, lb, st), lambda r: r),
        "viterbi (T=20000)": (lambda m: m.viterbi(ld, lg, lb, st), lambda r: r),
        "edt_squared (200x200)": (lambda m: m.edt_squared(mask), lambda r: r),
        "sector_costs (120x120, r=25)": (lambda m: m.sector_costs(excess, dr, dc, sec, 8), lambda r: r),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(sorted(backends))}")
    print(f"{'kernel':32s} " + " ".join(f"{b:>12s}" for b in sorted(backends)) + "     speedup")
    for name, (call, key) in cases(rng).items():
        outs = {b: key(call(m)) for b, m in backends.items()}
        ref = outs["python"]
        for b, out in outs.items():
            if not np.allclose(out, ref, rtol=1e-12, atol=0.0):
                raise SystemExit(f"{name}: backend {b} disagrees with the Python fallback")
        times = {b: min(timeit.repeat(lambda m=m: call(m), number=1, repeat=args.repeat))
                 for b, m in backends.items()}
        row = " ".join(f"{times[b] * 1e3:10.2f}ms" for b in sorted(backends))
        speed = f"{times['python'] / times['cython']:10.1f}x" if "cython" in times else ""
        print(f"{name:32s} {row} {speed}")


if __name__ == "__main__":
    main()
