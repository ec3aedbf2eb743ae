#!/usr/bin/env python3
"""Solve a sparse SDPA feasibility problem written by `phidecomp export-sdpa`.

Checks both the primal system

    find Y_b >= 0  with  sum_b F_qb . Y_b = c_q  (q = 1..m)

and its Farkas alternative

    find y  with  sum_q y_q F_qb >= 0 for every block b,  c . y = -1.

Prints one JSON object: the status of each solve and a verdict, which is
"feasible", "infeasible" or "inconclusive". Exit status is 0 when a verdict
was reached, 2 when inconclusive and 3 when cvxpy is unavailable.

Usage: solve_sdpa.py FILE [--solver CLARABEL|SCS]
"""

import argparse
import json
import sys


def parse_sdpa(path):
    with open(path) as f:
        lines = [l.strip() for l in f]
    lines = [l for l in lines if l]
    while lines and lines[0][0] in "\"*":
        lines.pop(0)

    def clean(l):
        for ch in ",{}()":
            l = l.replace(ch, " ")
        return l.split()

    m = int(clean(lines[0])[0])
    nblocks = int(clean(lines[1])[0])
    sizes = [int(s) for s in clean(lines[2])[:nblocks]]
    rhs = [float(v) for v in clean(lines[3])[:m]]
    entries = []
    for l in lines[4:]:
        k, b, i, j, v = l.split()[:5]
        entries.append((int(k), int(b) - 1, int(i) - 1, int(j) - 1, float(v)))
    return m, sizes, rhs, entries


def constraint_matrices(m, sizes, entries):
    import numpy as np

    mats = [[np.zeros((abs(s), abs(s))) for s in sizes] for _ in range(m + 1)]
    for k, b, i, j, v in entries:
        mats[k][b][i, j] = v
        mats[k][b][j, i] = v
    return mats


def solve(prob, solvers):
    import cvxpy as cp

    last = None
    for name in solvers:
        if name not in cp.installed_solvers():
            continue
        try:
            prob.solve(solver=name)
        except cp.error.SolverError as e:
            last = f"{name}: {e}"
            continue
        return name, prob.status
    return None, last or "no solver available"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("file")
    ap.add_argument("--solver", choices=["CLARABEL", "SCS"])
    args = ap.parse_args()

    try:
        import cvxpy as cp
        import numpy as np
    except ImportError as e:
        print(json.dumps({"verdict": "unavailable", "error": str(e)}))
        return 3

    solvers = [args.solver] if args.solver else ["CLARABEL", "SCS"]
    m, sizes, rhs, entries = parse_sdpa(args.file)
    if any(s < 0 for s in sizes):
        print(json.dumps({"verdict": "unavailable", "error": "diagonal blocks are not supported"}))
        return 3
    F = constraint_matrices(m, sizes, entries)
    c = np.array(rhs)

    Y = [cp.Variable((s, s), PSD=True) for s in sizes]
    cons = [
        sum(cp.trace(F[q + 1][b] @ Y[b]) for b in range(len(sizes))) == c[q]
        for q in range(m)
    ]
    primal = cp.Problem(cp.Minimize(0), cons)
    primal_solver, primal_status = solve(primal, solvers)

    y = cp.Variable(m)
    dual_cons = [
        sum(y[q] * F[q + 1][b] for q in range(m)) >> 0 for b in range(len(sizes))
    ]
    dual_cons.append(c @ y == -1)
    farkas = cp.Problem(cp.Minimize(0), dual_cons)
    farkas_solver, farkas_status = solve(farkas, solvers)

    ok = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
    bad = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)
    if primal_status in ok and farkas_status in bad:
        verdict = "feasible"
    elif primal_status in bad and farkas_status in ok:
        verdict = "infeasible"
    else:
        verdict = "inconclusive"

    out = {
        "verdict": verdict,
        "primal": {"solver": primal_solver, "status": primal_status},
        "farkas": {"solver": farkas_solver, "status": farkas_status},
        "constraints": m,
        "block_sizes": sizes,
    }
    if primal_status in ok:
        out["primal"]["max_constraint_violation"] = float(
            max(abs(con.violation()).max() for con in cons)
        )
    print(json.dumps(out))
    return 0 if verdict != "inconclusive" else 2


if __name__ == "__main__":
    sys.exit(main())
