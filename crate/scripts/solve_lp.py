#!/usr/bin/env python3
"""Solve an LP file written by `errp build-milp` with SciPy's HiGHS MILP backend.

Writes the solution format read by `errp decode-plan`:

    STATUS <optimal|feasible|infeasible|unknown> OBJ <value> [GAP <g>] [TIME <s>]
    <variable> <value>
    ...
"""

import argparse
import sys
import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

SECTIONS = {"minimize", "subject to", "bounds", "generals", "binaries", "end"}
SENSES = {"<=", ">=", "="}


def parse_terms(tokens, index):
    terms = []
    k = 0
    while k < len(tokens):
        sign = -1.0 if tokens[k] == "-" else 1.0
        coef = float(tokens[k + 1])
        terms.append((index(tokens[k + 2]), sign * coef))
        k += 3
    return terms


def parse_lp(text):
    names, lookup = [], {}

    def index(name):
        if name not in lookup:
            lookup[name] = len(names)
            names.append(name)
        return lookup[name]

    section = None
    objective_tokens = []
    rows = []
    pending = []
    bounds = {}
    integers, binaries = set(), set()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("\\"):
            continue
        if line.lower() in SECTIONS:
            section = line.lower()
            continue
        if section == "minimize":
            objective_tokens.extend(line.split(":", 1)[-1].split() if ":" in line else line.split())
        elif section == "subject to":
            pending.extend(line.split(":", 1)[1].split() if not pending else line.split())
            if len(pending) >= 2 and pending[-2] in SENSES:
                rows.append((pending[:-2], pending[-2], float(pending[-1])))
                pending = []
        elif section == "bounds":
            t = line.split()
            if len(t) == 2 and t[1] == "free":
                bounds[t[0]] = (-np.inf, np.inf)
            elif len(t) == 3 and t[1] == ">=":
                bounds[t[0]] = (float(t[2]), np.inf)
            elif len(t) == 3 and t[1] == "=":
                bounds[t[0]] = (float(t[2]), float(t[2]))
            elif len(t) == 5 and t[0] == "-inf":
                bounds[t[2]] = (-np.inf, float(t[4]))
            elif len(t) == 5:
                bounds[t[2]] = (float(t[0]), float(t[4]))
            else:
                raise ValueError(f"unsupported bound line: {line}")
        elif section == "generals":
            integers.update(line.split())
        elif section == "binaries":
            binaries.update(line.split())

    objective = parse_terms(objective_tokens, index)
    constraints = [(parse_terms(t, index), s, r) for t, s, r in rows]
    for name in list(bounds) + sorted(integers) + sorted(binaries):
        index(name)
    return names, objective, constraints, bounds, integers, binaries


def solve(text, time_limit):
    names, objective, constraints, bounds, integers, binaries = parse_lp(text)
    n = len(names)
    c = np.zeros(n)
    for j, a in objective:
        c[j] += a
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    integrality = np.zeros(n)
    for j, name in enumerate(names):
        if name in binaries:
            hi[j] = 1.0
            integrality[j] = 1
        elif name in bounds:
            lo[j], hi[j] = bounds[name]
        if name in integers:
            integrality[j] = 1
    data, rows, cols = [], [], []
    row_lo, row_hi = [], []
    for i, (terms, sense, rhs) in enumerate(constraints):
        for j, a in terms:
            rows.append(i)
            cols.append(j)
            data.append(a)
        row_lo.append(rhs if sense in (">=", "=") else -np.inf)
        row_hi.append(rhs if sense in ("<=", "=") else np.inf)
    kwargs = {}
    if constraints:
        a = coo_matrix((data, (rows, cols)), shape=(len(constraints), n)).tocsr()
        kwargs["constraints"] = LinearConstraint(a, row_lo, row_hi)
    options = {"disp": False}
    if time_limit is not None:
        options["time_limit"] = time_limit
    start = time.perf_counter()
    result = milp(c, integrality=integrality, bounds=Bounds(lo, hi), options=options, **kwargs)
    elapsed = time.perf_counter() - start
    status = {0: "optimal", 1: "feasible" if result.x is not None else "unknown", 2: "infeasible"}.get(
        result.status, "unknown"
    )
    return names, status, result, elapsed


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("lp", help="LP file")
    parser.add_argument("-o", "--out", help="solution file (stdout when omitted)")
    parser.add_argument("--time-limit", type=float, default=None, help="seconds")
    args = parser.parse_args(argv)

    with open(args.lp) as f:
        names, status, result, elapsed = solve(f.read(), args.time_limit)
    lines = []
    if result.x is None:
        lines.append(f"STATUS {status} OBJ - TIME {elapsed:.3f}")
    else:
        gap = getattr(result, "mip_gap", None)
        header = f"STATUS {status} OBJ {float(result.fun)!r}"
        if gap is not None:
            header += f" GAP {float(gap)!r}"
        lines.append(header + f" TIME {elapsed:.3f}")
        lines.extend(f"{name} {float(value)!r}" for name, value in zip(names, result.x))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0 if status in ("optimal", "feasible") else 1


if __name__ == "__main__":
    sys.exit(main())
