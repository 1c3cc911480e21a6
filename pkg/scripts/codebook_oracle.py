#!/usr/bin/env python3
"""Exhaustive oracle for the offset-codebook optimality check.

For every (L <= 10, delta_be <= 2, N <= 16) this computes the true
minimum achievable max codeword weight for a binary code of size N with
pairwise Hamming distance >= 2*delta_be + 1, via branch-and-bound max
clique with a greedy coloring bound. The output table is frozen into
the acceptance test; rerun this script to regenerate it.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
import tempfile
import time
from pathlib import Path

CAP = 16
_HELPER_SRC = Path(__file__).with_name("max_clique.c")
_HELPER_BIN: Path | None = None


def _helper() -> Path | None:
    """Compile the C max-clique helper once; None if no compiler."""
    global _HELPER_BIN
    if _HELPER_BIN is None:
        cc = shutil.which("cc") or shutil.which("gcc")
        if not cc:
            return None
        out = Path(tempfile.gettempdir()) / "tablemark_max_clique"
        if not out.exists():
            subprocess.run([cc, "-O2", "-o", str(out), str(_HELPER_SRC)], check=True)
        _HELPER_BIN = out
    return _HELPER_BIN


def words_by_weight(L):
    return sorted(range(2**L), key=lambda v: (bin(v).count("1"), v))


def max_clique_capped(adj, cap):
    """Size of the largest clique, early-stopped at `cap`."""
    n = len(adj)
    best = 0

    def expand(size, cand):
        nonlocal best
        if size > best:
            best = size
            if best >= cap:
                return True
        # greedy coloring bound: vertices grouped into independent sets
        order = []
        bounds = []
        color = 0
        rest = cand
        while rest:
            color += 1
            cls = 0
            avail = rest
            while avail:
                v = (avail & -avail).bit_length() - 1
                bit = 1 << v
                cls |= bit
                avail &= ~adj[v]
                avail &= avail - 0  # no-op clarity
                avail &= ~bit
                order.append(v)
                bounds.append(color)
            rest &= ~cls
        for i in range(len(order) - 1, -1, -1):
            if size + bounds[i] <= best:
                return False
            v = order[i]
            if expand(size + 1, cand & adj[v]):
                return True
            cand &= ~(1 << v)
        return False

    expand(0, (1 << n) - 1)
    return best


def plotkin_bound(L, d):
    """Plotkin upper bound on A(L, d), or None when it does not apply.

    Odd distances use A(n, d) = A(n+1, d+1) (parity extension) first.
    The scan over weight budgets stops once a clique meets this bound,
    since the per-budget clique number can never exceed A(L, d).
    """
    n2, d2 = (L + 1, d + 1) if d % 2 else (L, d)
    if 2 * d2 > n2:
        return 2 * (d2 // (2 * d2 - n2))
    if 2 * d2 == n2:
        return 4 * d2
    return None


def min_max_weight_table(L, delta_be):
    """min achievable max weight per code size N (None = infeasible <= cap)."""
    d = 2 * delta_be + 1
    out = {}
    if d == 1:
        ws = [bin(v).count("1") for v in words_by_weight(L)]
        for N in range(1, CAP + 1):
            out[N] = ws[N - 1] if N <= len(ws) else None
        return out
    words = words_by_weight(L)
    weights = [bin(v).count("1") for v in words]
    bound = plotkin_bound(L, d)
    target = CAP if bound is None else min(CAP, bound)
    best_size = 0
    min_w = {}
    for W in range(L + 1):
        cand = [v for v, wt in zip(words, weights) if wt <= W]
        if len(cand) <= best_size:
            continue
        adj = []
        for a in cand:
            mask = 0
            for j, b in enumerate(cand):
                if a != b and bin(a ^ b).count("1") >= d:
                    mask |= 1 << j
            adj.append(mask)
        helper = _helper()
        if helper is not None:
            lines = [f"{len(adj)} {CAP}"] + [format(m, "x") for m in adj]
            res = subprocess.run(
                [str(helper)], input="\n".join(lines) + "\n", capture_output=True, text=True, check=True
            )
            c = int(res.stdout.strip())
        else:
            c = max_clique_capped(adj, CAP)
        for N in range(best_size + 1, c + 1):
            min_w[N] = W
        best_size = max(best_size, c)
        if best_size >= target:
            break
    for N in range(1, CAP + 1):
        out[N] = min_w.get(N)
    return out


def main():
    table = {}
    for L in range(1, 11):
        for delta_be in range(0, 3):
            t0 = time.time()
            table[f"{L},{delta_be}"] = min_max_weight_table(L, delta_be)
            print(f"L={L} delta_be={delta_be} done in {time.time() - t0:.1f}s", file=sys.stderr)
    json.dump(table, sys.stdout, indent=1)
    print()


if __name__ == "__main__":
    main()
