"""Benchmark of the numba kernels against the pure-numpy fallback."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import backends, quadrature
from .assembly import FormVariant, assemble_B_jacobian, assemble_B_vector, fe_qp_fields
from .mesh import FeFunction, build_mesh
from .problems import section5_problem
from .schemes import run
from .solvers import SolverConfig


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(n: int = 96, repeats: int = 3, out=None):
    out = out or sys.stdout
    mesh = build_mesh(n, n)
    spec = section5_problem()
    rng = np.random.default_rng(7)
    u = FeFunction(mesh, np.where(mesh.boundary_mask, 0.0,
                                  rng.standard_normal(mesh.n_nodes)))
    cases = {
        "interp_qp": lambda: fe_qp_fields(u),
        "B_vector": lambda: assemble_B_vector(
            mesh, spec, FormVariant.FULL_B, fe_qp_fields(u).vals,
            fe_qp_fields(u)),
        "B_jacobian": lambda: assemble_B_jacobian(mesh, spec, fe_qp_fields(u)),
        "solve_4_steps": lambda: run(
            "standard", spec, mesh, 0.25, 1.0,
            config=SolverConfig(linear_tol=1e-8, newton_tol=1e-8)),
    }
    names = backends.available()
    print(f"mesh {n}x{n} ({mesh.n_nodes} nodes), best of {repeats}", file=out)
    header = f"{'kernel':>14} " + " ".join(f"{b:>12}" for b in names)
    print(header, file=out)
    results = {}
    for label, fn in cases.items():
        times = []
        for backend in names:
            with backends.use(backend):
                fn()  # warm up (JIT compile, allocator)
                times.append(_time(fn, repeats))
        results[label] = dict(zip(names, times))
        row = f"{label:>14} " + " ".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2 and times[0] > 0:
            row += f"   x{times[1] / times[0]:.2f}" if names[0] == "numba" \
                else f"   x{times[0] / times[1]:.2f}"
        print(row, file=out)
    return results


def console_main(argv=None) -> int:
    p = argparse.ArgumentParser(
        prog="pidefem-bench",
        description="compare the numba assembly kernels with the numpy fallback",
    )
    p.add_argument("--n", type=int, default=96, help="mesh subdivisions per axis")
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args(argv)
    run_benchmark(args.n, args.repeats)
    return 0


if __name__ == "__main__":
    sys.exit(console_main())
