"""Time the numba and pure-numpy kernel paths on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

The numba path is warmed up once before timing so JIT compilation is not
counted. Both paths must agree; the script exits non-zero if they do not.
"""
import argparse
import itertools
import sys
import time

import numpy as np

from bendersplan import _kernels
from bendersplan.detequiv import build_closed, program_to_standard
from bendersplan.instance import flat_demand_instance, generate_synthetic


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def simplex_case(time_steps):
    inst = generate_synthetic(3, n_scenarios=2, n_techs=3, n_storage=1, time_steps=time_steps, n_years=1)
    c, A, b, senses, _ = program_to_standard(build_closed(inst).program)
    return f"closed LP, T={time_steps} ({A.shape[0]}x{A.shape[1]})", (c, A, b, senses)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels.numba is None:
        print("numba not installed; only the numpy path is available")
        return 1

    rows = []
    ok = True
    cases = [("flat-demand LP", program_to_standard(build_closed(flat_demand_instance()).program)[:4])]
    cases += [simplex_case(t) for t in (6, 12, 24)]
    for name, (c, A, b, senses) in cases:
        _kernels.dense_simplex(c, A, b, senses, use_numba=True)  # compile
        t_nb, r_nb = best_of(lambda: _kernels.dense_simplex(c, A, b, senses, use_numba=True), args.repeat)
        t_np, r_np = best_of(lambda: _kernels.dense_simplex(c, A, b, senses, use_numba=False), args.repeat)
        same = r_nb[0] == r_np[0] and abs(r_nb[2] - r_np[2]) <= 1e-9 * max(1.0, abs(r_np[2]))
        ok &= same
        rows.append(("dense_simplex", name, t_np, t_nb, same))

    rng = np.random.default_rng(0)
    for n, m in ((10, 4), (14, 5), (18, 4)):
        d = rng.random((n, n))
        d = d + d.T
        np.fill_diagonal(d, 0.0)
        combos = np.array(list(itertools.combinations(range(n), m)), dtype=np.int64)
        _kernels.medoid_costs(d, combos[:2], use_numba=True)
        t_nb, r_nb = best_of(lambda: _kernels.medoid_costs(d, combos, use_numba=True), args.repeat)
        t_np, r_np = best_of(lambda: _kernels.medoid_costs(d, combos, use_numba=False), args.repeat)
        same = np.allclose(r_nb, r_np, rtol=1e-12, atol=0)
        ok &= same
        rows.append(("medoid_costs", f"n={n} m={m} ({len(combos)} sets)", t_np, t_nb, same))

    print(f"{'kernel':<14} {'case':<34} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}  agree")
    for kernel, name, t_np, t_nb, same in rows:
        print(f"{kernel:<14} {name:<34} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}  {same}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
