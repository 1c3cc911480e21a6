"""Watermarked-histogram optimizer.

Minimizes the mean squared deviation from the original histogram subject
to the per-bit sign and robustness constraints, the box around the
original histogram, the simple partial orders, and equal cardinality.

The simplified problem couples variables only within cluster pairs plus
one global cardinality equality, so it decomposes exactly:

  1. per pair, enumerate the integer 2-D feasible region inside the box
     and tabulate the minimal cost for every pair deviation sum;
  2. fold pairs together with a min-plus DP over the total deviation;
  3. close the cardinality gap over non-template clusters, a separable
     convex allocation solved by a greedy heap.

An upper bound from the cheapest per-pair choices prunes both the DP
span and the per-pair candidate sets, keeping the search exact but fast.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import EncodingInfeasibleError, ValidationError
from .robustness import EPS_STRICT, BitCoefficients, ConstraintSet, analytic_ber, emit_constraints

_DL_CHUNK = 128
_INF = float("inf")


@dataclass(frozen=True)
class OptimizerConfig:
    tau_init: float = 0.01
    stages: int = 6
    tau_cap: float = 0.2
    radius_cap: int = 4096  # per-coordinate enumeration cap inside the box
    span_cap: int = 8192  # cap on the DP total-deviation span

    def __post_init__(self):
        if not 0 < self.tau_init <= self.tau_cap <= 1:
            raise ValidationError("need 0 < tau_init <= tau_cap <= 1")
        if self.stages < 1:
            raise ValidationError("stages must be >= 1")


@dataclass
class WatermarkedHistogram:
    x: np.ndarray
    mse: float
    per_bit_ber: np.ndarray
    report: list[dict] = field(default_factory=list)


class InfeasibleStage(Exception):
    def __init__(self, bit: int):
        super().__init__(f"bit {bit} infeasible at current tau")
        self.bit = bit


def surrogate_bounds(coeffs: BitCoefficients, h, tau: float, watermark=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-bit surrogate bounds (E_i, F_i) over the tau-box feasible set.

    E_i bounds the non-pair part of the sign/robustness term (from below
    for bit 0, from above for bit 1); F_i bounds the variance term from
    above. Solved as continuous linear programs, rounded conservatively.
    """
    if not 0 < tau <= 1:
        raise ValidationError("tau must be in (0,1]")
    h = np.asarray(h, dtype=float)
    w = coeffs.watermark if watermark is None else np.asarray(watermark, dtype=np.uint8)
    M = len(h)
    L = coeffs.template.L
    total = h.sum()
    B = tau * total
    bounds = [(max(0.0, h_j - B), h_j + B) for h_j in h]
    A_ub = np.zeros((L, M))
    b_ub = np.zeros(L)
    for j, (l, r) in enumerate(coeffs.template.pairs):
        if w[j] == 0:
            A_ub[j, l], A_ub[j, r] = -1.0, 1.0  # x_r - x_l <= 0
        else:
            A_ub[j, l], A_ub[j, r] = 1.0, -1.0  # x_l - x_r <= -1
            b_ub[j] = -1.0
    A_eq = np.ones((1, M))
    b_eq = np.array([total])
    E = np.zeros(L)
    F = np.zeros(L)
    for i, (l, r) in enumerate(coeffs.template.pairs):
        ca = coeffs.alpha[i].copy()
        cb = coeffs.beta[i].copy()
        ca[[l, r]] = 0.0
        cb[[l, r]] = 0.0
        sign = 1.0 if w[i] == 0 else -1.0  # minimize for bit 0, maximize for bit 1
        res = linprog(sign * ca, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if not res.success:
            raise InfeasibleStage(bit=i)
        val = sign * res.fun
        slack = 1e-9 * max(1.0, abs(val))
        E[i] = val - slack if w[i] == 0 else val + slack
        res = linprog(-cb, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if not res.success:
            raise InfeasibleStage(bit=i)
        val = -res.fun
        F[i] = val + 1e-9 * max(1.0, abs(val))
    return E, F


def _pair_cost_table_dense(h_l, h_r, a_l, a_r, b_l, b_r, E_i, F_i, bit_value, z2, R):
    """Minimal pair cost per deviation sum s = dl + dr, by full enumeration.

    Returns (s_offset, g) with g[k] = min cost achieving dl + dr =
    s_offset + k, or inf when that sum is infeasible.
    """
    lo_l, lo_r = -min(R, h_l), -min(R, h_r)
    dls = np.arange(lo_l, R + 1)
    drs = np.arange(lo_r, R + 1)
    s_offset = lo_l + lo_r
    size = (R - lo_l) + (R - lo_r) + 1
    g = np.full(size, _INF)
    for start in range(0, len(dls), _DL_CHUNK):
        dl = dls[start : start + _DL_CHUNK, None].astype(float)
        dr = drs[None, :].astype(float)
        xl = h_l + dl
        xr = h_r + dr
        s = a_l * xl + a_r * xr + E_i
        if bit_value == 0:
            ok = (s >= 0.0) & (xl - xr >= 0.0)
        else:
            ok = (s <= -EPS_STRICT) & (xl - xr <= -1.0)
        ok &= s * s - z2 * (b_l * xl + b_r * xr + F_i) >= 0.0
        cost = np.where(ok, dl * dl + dr * dr, _INF)
        idx = ((dl - lo_l) + (dr - lo_r)).astype(int)
        np.minimum.at(g, idx.ravel(), cost.ravel())
    return s_offset, g


def _pair_cost_table(h_l, h_r, a_l, a_r, b_l, b_r, E_i, F_i, bit_value, z2, R):
    """Minimal pair cost per deviation sum s = dl + dr, in O(R) per pair.

    On the antidiagonal dl + dr = s, write u = dl - dr. The box, the
    partial order, and the margin sign are u-intervals; the quadratic
    robustness constraint excludes at most one open u-interval (its
    leading coefficient is a perfect square). The cheapest point of each
    surviving interval has |u| minimal, so only interval endpoints and
    the parity points nearest u = 0 can be optimal. Candidates are found
    algebraically, padded two parity steps outward/inward to absorb
    floating-point boundary error, and re-checked with the verbatim
    predicate of the dense enumeration, keeping the table exact.
    """
    lo_l, lo_r = -min(R, h_l), -min(R, h_r)
    s_offset = lo_l + lo_r
    size = (R - lo_l) + (R - lo_r) + 1
    s = np.arange(s_offset, 2 * R + 1, dtype=np.int64)
    sf = s.astype(float)

    u_lo = np.maximum(2 * lo_l - sf, sf - 2 * R)
    u_hi = np.minimum(2 * R - sf, sf - 2 * lo_r)
    diff = h_l - h_r
    if bit_value == 0:
        u_lo = np.maximum(u_lo, float(-diff))
    else:
        u_hi = np.minimum(u_hi, float(-diff - 1))

    c1 = 0.5 * (a_l - a_r)
    c0 = a_l * h_l + a_r * h_r + E_i + 0.5 * (a_l + a_r) * sf
    if bit_value == 0:  # c0 + c1 u >= 0
        if c1 > 0:
            u_lo = np.maximum(u_lo, -c0 / c1)
        elif c1 < 0:
            u_hi = np.minimum(u_hi, -c0 / c1)
        else:
            u_lo = np.where(c0 >= 0.0, u_lo, u_hi + 1.0)
    else:  # c0 + c1 u <= -EPS_STRICT
        rhs = -(c0 + EPS_STRICT)
        if c1 > 0:
            u_hi = np.minimum(u_hi, rhs / c1)
        elif c1 < 0:
            u_lo = np.maximum(u_lo, rhs / c1)
        else:
            u_lo = np.where(c0 <= -EPS_STRICT, u_lo, u_hi + 1.0)

    # quadratic A u^2 + B u + C >= 0 with A = c1^2 >= 0
    d1 = 0.5 * (b_l - b_r)
    d0 = b_l * h_l + b_r * h_r + F_i + 0.5 * (b_l + b_r) * sf
    A = c1 * c1
    B = 2.0 * c0 * c1 - z2 * d1
    C = c0 * c0 - z2 * d0
    q1 = np.full(len(s), _INF)  # feasible u <= q1 or u >= q2
    q2 = np.full(len(s), _INF)
    if A > 0.0:
        disc = B * B - 4.0 * A * C
        hole = disc > 0.0
        sq = np.sqrt(np.where(hole, disc, 0.0))
        qq = -0.5 * (B + np.where(B >= 0.0, sq, -sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(qq != 0.0, C / qq, 0.0)
            r2 = qq / A
        q1 = np.where(hole, np.minimum(r1, r2), _INF)
        q2 = np.where(hole, np.maximum(r1, r2), _INF)
    else:
        bq = -z2 * d1  # B is the same scalar for every s when c1 == 0
        if bq > 0.0:
            q1, q2 = np.full(len(s), -_INF), -C / bq
        elif bq < 0.0:
            q1 = -C / bq
        else:
            bad = C < 0.0
            q1 = np.where(bad, -_INF, _INF)
            q2 = np.where(bad, _INF, _INF)

    # surviving intervals: [u_lo, min(u_hi, q1)] and [max(u_lo, q2), u_hi]
    intervals = ((u_lo, np.minimum(u_hi, q1)), (np.maximum(u_lo, q2), u_hi))
    parity = (s & 1).astype(np.int64)
    g = np.full(size, _INF)
    for a, b in intervals:
        lim = 2.0 * R + 2
        ul = np.ceil(np.clip(a, -lim, lim)).astype(np.int64)
        uh = np.floor(np.clip(b, -lim, lim)).astype(np.int64)
        ul += (ul ^ parity) & 1  # snap endpoints to the parity of s
        uh -= (uh ^ parity) & 1
        near0 = np.clip(parity, ul, uh)
        for u in (ul - 2, ul, ul + 2, uh - 2, uh, uh + 2, near0, -near0):
            dl = (s + u) >> 1
            dr = (s - u) >> 1
            ok = (dl >= lo_l) & (dl <= R) & (dr >= lo_r) & (dr <= R)
            xl = (h_l + dl).astype(float)
            xr = (h_r + dr).astype(float)
            m = a_l * xl + a_r * xr + E_i
            if bit_value == 0:
                ok &= (m >= 0.0) & (xl - xr >= 0.0)
            else:
                ok &= (m <= -EPS_STRICT) & (xl - xr <= -1.0)
            ok &= m * m - z2 * (b_l * xl + b_r * xr + F_i) >= 0.0
            dlf = dl.astype(float)
            drf = dr.astype(float)
            cost = np.where(ok, dlf * dlf + drf * drf, _INF)
            np.minimum(g, cost, out=g)
    return s_offset, g


def _pair_argmin(h_l, h_r, a_l, a_r, b_l, b_r, E_i, F_i, bit_value, z2, R, s_target):
    """Best (dl, dr) with dl + dr = s_target; mirrors _pair_cost_table."""
    lo_l, lo_r = -min(R, h_l), -min(R, h_r)
    best = None
    for dl in range(max(lo_l, s_target - R), min(R, s_target - lo_r) + 1):
        dr = s_target - dl
        xl, xr = h_l + dl, h_r + dr
        s = a_l * xl + a_r * xr + E_i
        if bit_value == 0:
            if not (s >= 0.0 and xl - xr >= 0.0):
                continue
        else:
            if not (s <= -EPS_STRICT and xl - xr <= -1.0):
                continue
        if s * s - z2 * (b_l * xl + b_r * xr + F_i) < 0.0:
            continue
        cost = dl * dl + dr * dr
        if best is None or cost < best[0]:
            best = (cost, dl, dr)
    if best is None:
        raise RuntimeError("pair reconstruction failed; inconsistent cost table")
    return best[1], best[2]


def _allocation_costs(lows, highs, span):
    """Cumulative minimal costs of pushing the free clusters' total deviation.

    Returns (up, down): up[t] = min sum of squared deviations with total
    +t, down[t] = same for total -t, for t in [0, span]. Greedy on
    marginal costs; exact because the objective is separable convex.
    """
    up = np.full(span + 1, _INF)
    down = np.full(span + 1, _INF)
    up[0] = down[0] = 0.0
    heap = [(2 * 0 + 1, k, 0) for k in range(len(highs)) if highs[k] > 0]
    heapq.heapify(heap)
    cost = 0.0
    for t in range(1, span + 1):
        if not heap:
            break
        marg, k, d = heapq.heappop(heap)
        cost += marg
        up[t] = cost
        if d + 1 < highs[k]:
            heapq.heappush(heap, (2 * (d + 1) + 1, k, d + 1))
    heap = [(2 * 0 + 1, k, 0) for k in range(len(lows)) if lows[k] < 0]
    heapq.heapify(heap)
    cost = 0.0
    for t in range(1, span + 1):
        if not heap:
            break
        marg, k, d = heapq.heappop(heap)
        cost += marg
        down[t] = cost
        if -(d + 1) > lows[k]:
            heapq.heappush(heap, (2 * (d + 1) + 1, k, d + 1))
    return up, down


def _allocate(lows, highs, t):
    """Deviations per free cluster summing to t, minimizing sum of squares."""
    n = len(highs)
    d = np.zeros(n, dtype=np.int64)
    remaining = abs(t)
    direction = 1 if t >= 0 else -1
    heap = []
    for k in range(n):
        room = highs[k] if direction > 0 else -lows[k]
        if room > 0:
            heap.append((1, k))
    heapq.heapify(heap)
    while remaining > 0:
        if not heap:
            raise RuntimeError("allocation reconstruction failed")
        marg, k = heapq.heappop(heap)
        d[k] += direction
        remaining -= 1
        room = highs[k] - d[k] if direction > 0 else d[k] - lows[k]
        if room > 0:
            heapq.heappush(heap, (2 * abs(d[k]) + 1, k))
    return d


def _balance_upper_bound(tables, g_min, s_at_min, cnt) -> float:
    """Feasible-solution cost from greedy unit moves on the pair sums.

    Starts every pair at its cheapest deviation sum and walks the total
    toward zero one unit at a time, always taking the cheapest available
    pair move; free-cluster closing is priced at every intermediate
    total. Only an upper bound is needed, so greediness is fine.
    """
    offs = [s_off for s_off, _, _ in tables]
    gs = [g for _, g, _ in tables]
    ks = [s - off for s, off in zip(s_at_min, offs)]
    cost = sum(g_min)
    t = sum(s_at_min)
    best = cost + cnt(-t)
    while t != 0:
        direction = -1 if t > 0 else 1
        best_i, best_marg = -1, _INF
        for i, g in enumerate(gs):
            k = ks[i] + direction
            if 0 <= k < len(g) and g[k] < _INF:
                marg = g[k] - g[ks[i]]
                if marg < best_marg:
                    best_i, best_marg = i, marg
        if best_i < 0:
            break
        ks[best_i] += direction
        cost += best_marg
        t += direction
        best = min(best, cost + cnt(-t))
    return best


def solve_simplified(h, coeffs: BitCoefficients, bounds, tau: float, watermark=None, config: OptimizerConfig | None = None) -> np.ndarray:
    """Exact integer optimum of the simplified (surrogate-bound) problem."""
    config = config or OptimizerConfig()
    h = np.asarray(h, dtype=np.int64)
    w = coeffs.watermark if watermark is None else np.asarray(watermark, dtype=np.uint8)
    E, F = bounds
    M = len(h)
    total = int(h.sum())
    B = int(math.floor(tau * total))
    R = min(B, config.radius_cap)
    z2 = coeffs.phi_inv**2
    pairs = coeffs.template.pairs
    pair_idx = set(coeffs.template.indices())
    free = [k for k in range(M) if k not in pair_idx]
    lows = np.array([-min(R, int(h[k])) for k in free], dtype=np.int64)
    highs = np.full(len(free), R, dtype=np.int64)

    tables = []
    g_min = []
    s_at_min = []
    for i, (l, r) in enumerate(pairs):
        args = (int(h[l]), int(h[r]), coeffs.alpha[i, l], coeffs.alpha[i, r],
                coeffs.beta[i, l], coeffs.beta[i, r], float(E[i]), float(F[i]), int(w[i]), z2, R)
        s_off, g = _pair_cost_table(*args)
        if not np.isfinite(g).any():
            raise InfeasibleStage(bit=i)
        tables.append((s_off, g, args))
        k = int(np.argmin(g))
        g_min.append(float(g[k]))
        s_at_min.append(s_off + k)

    span = min(config.span_cap, max(1, R * max(2 * len(pairs), 1) + 1))
    up, down = _allocation_costs(lows, highs, span)

    def cnt(t: int) -> float:
        if t == 0:
            return 0.0
        if t > 0:
            return up[t] if t <= span else _INF
        return down[-t] if -t <= span else _INF

    G = sum(g_min)
    t0 = sum(s_at_min)
    ub = min(G + cnt(-t0), _balance_upper_bound(tables, g_min, s_at_min, cnt))

    # prune per-pair candidates that cannot appear in any optimal solution
    pruned = []
    for (s_off, g, args), gm in zip(tables, g_min):
        if math.isfinite(ub):
            keep = g <= ub - (G - gm) + 1e-9
        else:
            keep = np.isfinite(g)
        ks = np.flatnonzero(keep)
        pruned.append((s_off + ks, g[ks]))

    # min-plus DP over pairs on the total deviation sum
    suffix = np.zeros(len(pruned) + 1)
    for i in range(len(pruned) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + float(pruned[i][1].min())
    dp_lo = dp_hi = 0
    dp = np.zeros(1)
    choices: list[tuple[int, np.ndarray]] = []  # (layer_lo, chosen s per t)
    for layer, (s_vals, g_vals) in enumerate(pruned):
        new_lo = max(dp_lo + int(s_vals.min()), -config.span_cap)
        new_hi = min(dp_hi + int(s_vals.max()), config.span_cap)
        size = new_hi - new_lo + 1
        nd = np.full(size, _INF)
        chosen = np.zeros(size, dtype=np.int64)
        for s, gv in zip(s_vals, g_vals):
            lo = max(new_lo, dp_lo + s)
            hi = min(new_hi, dp_hi + s)
            if lo > hi:
                continue
            seg = dp[lo - s - dp_lo : hi - s - dp_lo + 1] + gv
            dst = slice(lo - new_lo, hi - new_lo + 1)
            better = seg < nd[dst]
            nd[dst][better] = seg[better]
            chosen[dst][better] = s
        # states that cannot beat the greedy upper bound are dead ends
        if math.isfinite(ub):
            nd[nd > ub - suffix[layer + 1] + 1e-9] = _INF
        alive = np.flatnonzero(np.isfinite(nd))
        if len(alive) == 0:
            raise InfeasibleStage(bit=-1)
        first, last = int(alive[0]), int(alive[-1])
        dp = nd[first : last + 1]
        chosen = chosen[first : last + 1]
        dp_lo, dp_hi = new_lo + first, new_lo + last
        choices.append((dp_lo, chosen))

    ts = np.arange(dp_lo, dp_hi + 1)
    closing = np.array([cnt(int(-t)) for t in ts])
    totals = dp + closing
    if not np.isfinite(totals).any():
        raise InfeasibleStage(bit=-1)
    t_star = int(ts[int(np.argmin(totals))])

    # reconstruct per-pair sums by walking the DP layers backwards
    s_per_pair = []
    t = t_star
    for layer_lo, chosen in reversed(choices):
        s = int(chosen[t - layer_lo])
        s_per_pair.append(s)
        t -= s
    s_per_pair.reverse()

    x = h.astype(np.int64).copy()
    for i, ((s_off, g, args), s) in enumerate(zip(tables, s_per_pair)):
        dl, dr = _pair_argmin(*args, s_target=s)
        l, r = pairs[i]
        x[l] = h[l] + dl
        x[r] = h[r] + dr
    if free:
        d_free = _allocate(lows, highs, -t_star)
        for k, dk in zip(free, d_free):
            x[k] = h[k] + dk
    assert int(x.sum()) == total
    return x


def verify(x, h, constraint_set: ConstraintSet, delta_ber: float) -> tuple[list[int], np.ndarray]:
    """Check the unsimplified constraints and the analytic BER at x."""
    coeffs = constraint_set.coeffs
    violated = list(constraint_set.check(x))
    bers = np.array([analytic_ber(x, coeffs, i) for i in range(coeffs.template.L)])
    for i, b in enumerate(bers):
        if b > delta_ber * (1 + 1e-9) + 1e-15 and i not in violated:
            violated.append(i)
    return violated, bers


def optimize(h, coeffs: BitCoefficients, config: OptimizerConfig, watermark=None) -> WatermarkedHistogram:
    """Multi-stage optimization with adaptive tau and best-of selection."""
    h = np.asarray(h, dtype=np.int64)
    w = coeffs.watermark if watermark is None else np.asarray(watermark, dtype=np.uint8)
    total = int(h.sum())
    tau_floor = 1.0 / total
    constraint_set = emit_constraints(coeffs, total)
    tau = config.tau_init
    best: WatermarkedHistogram | None = None
    report: list[dict] = []
    stage = 0
    last_violated: list[int] = []
    while stage < config.stages:
        tau_eff = min(max(tau, tau_floor), config.tau_cap)
        try:
            bounds = surrogate_bounds(coeffs, h, tau_eff, w)
            x = solve_simplified(h, coeffs, bounds, tau_eff, w, config)
        except InfeasibleStage as exc:
            if tau_eff >= config.tau_cap:
                raise EncodingInfeasibleError(
                    f"no feasible watermarked histogram at tau cap {config.tau_cap}",
                    violated_bits=[exc.bit] if exc.bit >= 0 else [],
                ) from exc
            tau = min(tau_eff * 2, config.tau_cap)
            continue
        violated, bers = verify(x, h, constraint_set, coeffs.delta_ber)
        mse = float(np.mean((x - h) ** 2))
        feasible = not violated
        report.append({
            "stage": stage,
            "tau": tau_eff,
            "mse": mse,
            "feasible": feasible,
            "max_ber": float(bers.max()) if len(bers) else 0.0,
        })
        if feasible and (best is None or mse < best.mse):
            best = WatermarkedHistogram(x=x, mse=mse, per_bit_ber=bers, report=report)
        if not feasible:
            last_violated = violated
        tau = max(float(np.max(np.abs(x - h))) / total, tau_floor)
        stage += 1
    if best is None:
        raise EncodingInfeasibleError(
            "no stage produced a verified feasible histogram",
            violated_bits=[b for b in last_violated if b >= 0],
        )
    best.report = report
    return best
