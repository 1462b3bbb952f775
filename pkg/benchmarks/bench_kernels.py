"""Time each kernel's numba and numpy flavours on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat 200] [--json out.json]

Both flavours are imported side by side from ``metapop.kernels`` so a single
process compares them; the env flag only picks which one the package uses.
"""
from __future__ import annotations

import argparse
import json
import platform
import timeit

import numpy as np

from metapop import kernels as kr
from metapop._accel import HAVE_NUMBA


def _cases(rng):
    cap = 10_000
    tree = np.zeros(2 * cap - 1)
    for i in range(cap):
        kr.sumtree_update_numpy(tree, cap, i, rng.random())
    targets = rng.random(128) * tree[0]
    probs = rng.dirichlet(np.ones(50), size=(128, 30))
    prior = np.full((128, 30), 1 / 30)
    heads = rng.integers(0, 30, 128)
    actions = rng.integers(0, 50, 128)
    greedy = rng.integers(0, 50, size=(64, 30))
    q = rng.normal(size=(256, 50))
    obs = np.repeat(np.array([[1.0, 0, 1], [0, 1.0, 1]]), 64, axis=0)[rng.permutation(128)]
    n = 20_000
    p, g, m, v = (rng.normal(size=n) for _ in range(4))
    v = np.abs(v)
    return {
        "sumtree_update": (lambda f: f(tree, cap, int(rng.integers(cap)), 0.5)),
        "sumtree_find": (lambda f: f(tree, cap, targets)),
        "cmi_terms": (lambda f: f(probs, prior, heads, actions)),
        "greedy_agreement": (lambda f: f(greedy)),
        "tie_first_argmax": (lambda f: f(q)),
        "unique_rows": (lambda f: f(obs)),
        "adam_update": (lambda f: f(p.copy(), g, m.copy(), v.copy(), 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)),
    }


def run(repeat: int = 200) -> list[dict]:
    rng = np.random.default_rng(0)
    rows = []
    for name, call in _cases(rng).items():
        f_np = getattr(kr, f"{name}_numpy")
        f_nb = getattr(kr, f"{name}_numba")
        if name == "tie_first_argmax":
            f_nb = kr.tie_first_argmax_numba
        call(f_nb)  # compile outside the timed region
        t_np = min(timeit.repeat(lambda: call(f_np), number=repeat, repeat=3)) / repeat
        t_nb = min(timeit.repeat(lambda: call(f_nb), number=repeat, repeat=3)) / repeat
        rows.append({"kernel": name, "numpy_us": t_np * 1e6, "numba_us": t_nb * 1e6, "speedup": t_np / t_nb})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--json", default=None)
    a = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; both columns time the same python code")
    rows = run(a.repeat)
    print(f"{'kernel':<18}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<18}{r['numpy_us']:>12.2f}{r['numba_us']:>12.2f}{r['speedup']:>8.1f}x")
    if a.json:
        with open(a.json, "w") as fh:
            json.dump({"python": platform.python_version(), "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
