"""Time the compiled closed-loop kernel against the pure-Python fallback.

Runs the mass-on-car benchmark at a few sampling periods with both
backends, reports wall time per run and the largest deviation between the
two trajectories. Usage:

    python benchmarks/bench_closed_loop.py [--repeat N]
"""

import argparse
import time

import numpy as np

from zohfunnel import (ConstantFunnel, ControlLawConfig, SimConfig, SinusoidReference,
                       compiled_available, mass_on_car, simulate)


def run_case(tau: float, horizon: float, backend: str, repeat: int):
    plant = mass_on_car()
    reference = SinusoidReference([[(0.4, np.pi / 2, 0.0)]])
    funnel = ConstantFunnel(0.08)
    law = ControlLawConfig(beta=25.2, lam=0.7)
    cfg = SimConfig(tau=tau, horizon=horizon, substeps=20, record_stride=10, backend=backend)
    best = float("inf")
    trace = None
    for _ in range(repeat):
        start = time.perf_counter()
        trace = simulate(plant, reference, funnel, law, cfg)
        best = min(best, time.perf_counter() - start)
    return best, trace


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3, help="timing repeats per case (best of)")
    args = parser.parse_args()

    if not compiled_available():
        print("compiled kernel not available; timing the Python path only")

    print(f"{'tau':>10} {'samples':>9} {'python':>12} {'compiled':>12} {'speedup':>9} {'max |dy|':>12}")
    for tau in (1.8e-3, 2e-4, 2e-5):
        horizon = 2.0
        t_py, tr_py = run_case(tau, horizon, "python", args.repeat)
        if compiled_available():
            t_c, tr_c = run_case(tau, horizon, "compiled", args.repeat)
            dev = float(np.max(np.abs(tr_c.y - tr_py.y)))
            print(f"{tau:>10.1e} {len(tr_py.sample_t):>9} {t_py:>11.4f}s {t_c:>11.4f}s "
                  f"{t_py / t_c:>8.1f}x {dev:>12.3e}")
        else:
            print(f"{tau:>10.1e} {len(tr_py.sample_t):>9} {t_py:>11.4f}s {'-':>12} {'-':>9} {'-':>12}")


if __name__ == "__main__":
    main()
