"""Reference objectives for the golden SDP problems, computed with cvxpy.

Usage: python3 solve_golden.py > golden.txt

The third column is the solver status; p06 reports optimal_inaccurate but
agrees with CVXOPT to 1e-8.
"""
import glob
import os

import cvxpy as cp
import numpy as np


def load(path):
    n, obj, eqs, rhs, blocks = 0, {}, {}, {}, {}
    for line in open(path):
        if line.startswith("#") or not line.strip():
            continue
        kind, a, b, c, pos, val = line.split()
        a, b, c, pos, val = int(a), int(b), int(c), int(pos), float(val)
        if kind == "seg":
            n = max(n, b + c)
        elif kind == "obj":
            obj[pos] = obj.get(pos, 0.0) + val
        elif kind == "eq":
            eqs.setdefault(a, []).append((pos, val))
        elif kind == "rhs":
            rhs[a] = val
        elif kind == "blk":
            blocks[a] = (c, [])
        elif kind == "psd":
            blocks[a][1].append((b, c, pos, val))
    return n, obj, eqs, rhs, blocks


def solve(path):
    n, obj, eqs, rhs, blocks = load(path)
    y = cp.Variable(n)
    cons = []
    for r in sorted(set(eqs) | set(rhs)):
        cons.append(sum(v * y[p] for p, v in eqs.get(r, [])) == rhs.get(r, 0.0))
    for dim, entries in blocks.values():
        cells = {}
        for i, j, p, v in entries:
            cells.setdefault((i, j), []).append((p, v))
        m = [[None] * dim for _ in range(dim)]
        for i in range(dim):
            for j in range(i, dim):
                e = sum((v * y[p] for p, v in cells.get((i, j), [])), cp.Constant(0.0))
                m[i][j] = m[j][i] = e
        cons.append(cp.bmat(m) >> 0)
    objective = cp.Minimize(sum(v * y[p] for p, v in obj.items()))
    prob = cp.Problem(objective, cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value, prob.status


here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "*.sdp"))):
    value, status = solve(path)
    print(f"{os.path.basename(path)} {value:.12e} {status}")
