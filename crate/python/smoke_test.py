#!/usr/bin/env python3
"""Smoke test for the hbvm_py extension module.

Builds the module if needed, imports it, and exercises the main surface:
quadrature rules, tableaux, kernels, one-step maps, integration, the
convergence study and the energy-drift report.

Usage: python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent


def load_module():
    candidates = [
        REPO_ROOT / "target" / "release" / "libhbvm_py.so",
        REPO_ROOT / "target" / "debug" / "libhbvm_py.so",
    ]
    lib = next((p for p in candidates if p.exists()), None)
    if lib is None:
        print("building hbvm-py ...")
        subprocess.run(
            ["cargo", "build", "-p", "hbvm-py"], cwd=REPO_ROOT, check=True
        )
        lib = candidates[1]
    staging = Path(tempfile.mkdtemp(prefix="hbvm-py-"))
    shutil.copy2(lib, staging / "hbvm_py.so")
    sys.path.insert(0, str(staging))
    import hbvm_py

    return hbvm_py


def approx(a, b, tol=1e-12):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    hbvm = load_module()
    print(f"hbvm_py {hbvm.__version__}")

    # Registry.
    problems = hbvm.list_problems()
    assert set(problems) == {
        "harmonic",
        "henon-heiles",
        "kepler",
        "pendulum",
        "vdpol-2nd",
        "linear-3rd",
    }, problems

    # Quadrature.
    nodes, weights = hbvm.gauss_rule(1)
    assert nodes == [0.5] and weights == [1.0]
    nodes, weights = hbvm.gauss_rule(5)
    approx(sum(weights), 1.0, 1e-14)
    for i in range(5):
        approx(nodes[i] + nodes[4 - i], 1.0, 1e-15)

    # Implicit midpoint tableau, exactly.
    midpoint = hbvm.Method(1, 1).tableau()
    assert midpoint["A"] == [[0.5]]
    assert midpoint["b"] == [1.0]
    assert midpoint["c"] == [0.5]

    # Kernels: a_1(c, tau) = c, abar_1(c, tau) = c/2, and the Nystrom
    # kernel is the iterated kernel for s = 2.
    approx(hbvm.rk_kernel(1, 0.37, 0.9), 0.37, 1e-15)
    approx(hbvm.rkn_kernel(1, 0.8, 0.1), 0.4, 1e-15)
    qnodes, qweights = hbvm.gauss_rule(4)
    for c, tau in [(0.2, 0.7), (0.9, 0.4)]:
        iterated = sum(
            w * hbvm.rk_kernel(2, c, u) * hbvm.rk_kernel(2, u, tau)
            for u, w in zip(qnodes, qweights)
        )
        approx(hbvm.rkn_kernel(2, c, tau), iterated, 1e-13)

    # Integrate the harmonic oscillator: 4th order, energy-conserving.
    run = hbvm.integrate("harmonic", k=3, s=2, t0=0.0, tf=5.0, steps=100)
    assert len(run["times"]) == 101
    assert run["max_energy_drift"] < 1e-12, run["max_energy_drift"]
    y_final, v_final = run["states"][-1][0][0], run["states"][-1][1][0]
    approx(y_final, math.cos(5.0), 1e-6)
    approx(v_final, -math.sin(5.0), 1e-6)

    # One Method.step equals the first record of the run.
    method = hbvm.Method(3, 2)
    levels, iterations, residual = method.step("harmonic", [[1.0], [0.0]], 0.05)
    approx(levels[0][0], run["states"][1][0][0], 1e-14)
    approx(levels[1][0], run["states"][1][1][0], 1e-14)
    assert iterations >= 1 and residual < 1e-12

    # Order 2s = 4 for s = 2.
    rows = hbvm.order_study("harmonic", k=3, s=2, t0=0.0, tf=2.0, base_steps=5, rungs=5)
    reliable_slopes = [slope for _, _, slope, ok in rows if ok and slope is not None]
    assert reliable_slopes, rows
    assert abs(reliable_slopes[-1] - 4.0) < 0.2, reliable_slopes

    # Energy conservation vs the Gauss control on Henon-Heiles.
    _, _, conserving = hbvm.energy_drift("henon-heiles", k=3, s=2, t0=0.0, tf=100.0, steps=1000)
    _, _, control = hbvm.energy_drift("henon-heiles", k=2, s=2, t0=0.0, tf=100.0, steps=1000)
    assert conserving <= 1e-10, conserving
    assert control >= 100.0 * conserving, (control, conserving)

    # Errors surface as ValueError.
    for bad_call in (
        lambda: hbvm.Method(1, 2),
        lambda: hbvm.integrate("nope", k=2, s=2, t0=0.0, tf=1.0, steps=10),
        lambda: hbvm.gauss_rule(0),
    ):
        try:
            bad_call()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
