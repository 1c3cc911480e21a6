"""Utility and traceability evaluation.

Implements the aggregation-query benchmark (RAQE), marginal and
correlation distribution gaps, and the traceability-accuracy driver.
Queries are generated from the original table with rejection sampling so
each selectivity bucket (1%, 5%, 20%) holds a fixed number of queries
whose selectivity lies within [0.5x, 2x] of the bucket center.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import ValidationError
from .tableio import CATEGORICAL, NUMERICAL, Table

AGGREGATIONS = ("COUNT", "AVG")
BUCKETS = ("1%", "5%", "20%")
BUCKET_CENTERS = {"1%": 0.01, "5%": 0.05, "20%": 0.20}
_BAND = (0.5, 2.0)  # retention band around the bucket center
GROUP_BY_FRACTION = 0.1


@dataclass(frozen=True)
class Query:
    aggregation: str  # COUNT or AVG
    agg_column: str  # numerical column carrying the aggregation
    predicates: tuple[tuple[str, str, object], ...]  # (column, op, literal); op in {<=, >=, ==}
    group_by: str | None
    bucket: str


@dataclass(frozen=True)
class QueryWorkload:
    queries: tuple[Query, ...]


class _Frame:
    """Column-major view of a table for fast predicate evaluation."""

    def __init__(self, table: Table):
        self.n = len(table)
        self.cols: dict[str, np.ndarray] = {}
        self.kinds: dict[str, str] = {}
        for i, col in enumerate(table.schema.columns):
            vals = [r[i] for r in table.rows]
            if col.kind == NUMERICAL:
                self.cols[col.name] = np.asarray(vals, dtype=float)
            else:
                self.cols[col.name] = np.asarray(vals, dtype=object)
            self.kinds[col.name] = col.kind

    def mask(self, predicates) -> np.ndarray:
        m = np.ones(self.n, dtype=bool)
        for name, op, lit in predicates:
            col = self.cols[name]
            if op == "<=":
                m &= col <= lit
            elif op == ">=":
                m &= col >= lit
            else:
                m &= col == lit
        return m


def _draw_query(frame: _Frame, table: Table, rng: np.random.Generator):
    cols = table.schema.columns
    num_names = [c.name for c in cols if c.kind == NUMERICAL]
    if not num_names:
        raise ValidationError("workload generation requires a numerical column")
    agg_col = num_names[rng.integers(0, len(num_names))]
    f = int(rng.integers(1, len(cols) + 1))
    picks = rng.choice(len(cols), size=f, replace=False)
    row = table.rows[int(rng.integers(0, len(table)))]
    preds = []
    for p in picks:
        col = cols[int(p)]
        lit = row[int(p)]
        if col.kind == NUMERICAL:
            op = "<=" if rng.random() < 0.5 else ">="
        else:
            op = "=="
        preds.append((col.name, op, lit))
    return agg_col, tuple(preds)


def _bucket_of(selectivity: float) -> str | None:
    candidates = []
    for b, c in BUCKET_CENTERS.items():
        if _BAND[0] * c <= selectivity <= _BAND[1] * c:
            candidates.append((abs(np.log(selectivity / c)), c, b))
    if not candidates:
        return None
    return min(candidates)[2]


def generate_workload(table_o: Table, seed: int, per_bucket: int = 1000, max_attempts_factor: int = 500) -> QueryWorkload:
    if len(table_o) == 0:
        raise ValidationError("workload generation requires a non-empty table")
    rng = np.random.default_rng(seed)
    frame = _Frame(table_o)
    filled: dict[tuple[str, str], list[Query]] = {(a, b): [] for a in AGGREGATIONS for b in BUCKETS}
    need = len(AGGREGATIONS) * len(BUCKETS) * per_bucket
    attempts_cap = max_attempts_factor * need
    attempts = 0
    done = 0
    agg_cycle = 0
    while done < need:
        if attempts >= attempts_cap:
            fill = {f"{a}/{b}": len(v) for (a, b), v in filled.items()}
            raise ValidationError(f"workload generation stalled; bucket fill: {fill}")
        attempts += 1
        aggregation = AGGREGATIONS[agg_cycle % len(AGGREGATIONS)]
        agg_cycle += 1
        agg_col, preds = _draw_query(frame, table_o, rng)
        sel = float(frame.mask(preds).sum()) / frame.n
        bucket = _bucket_of(sel)
        if bucket is None or len(filled[(aggregation, bucket)]) >= per_bucket:
            continue
        filled[(aggregation, bucket)].append(
            Query(aggregation=aggregation, agg_column=agg_col, predicates=preds, group_by=None, bucket=bucket)
        )
        done += 1
    # convert exactly 10% of the categorical-predicate queries per group
    out: list[Query] = []
    for key in filled:
        group = filled[key]
        cat_idx = [i for i, q in enumerate(group) if any(op == "==" for _, op, _ in q.predicates)]
        k = int(np.floor(GROUP_BY_FRACTION * len(cat_idx)))
        chosen = set(rng.choice(cat_idx, size=k, replace=False).tolist()) if k else set()
        for i, q in enumerate(group):
            if i in chosen:
                cat_preds = [j for j, (_, op, _) in enumerate(q.predicates) if op == "=="]
                j = cat_preds[int(rng.integers(0, len(cat_preds)))]
                gb = q.predicates[j][0]
                preds = q.predicates[:j] + q.predicates[j + 1 :]
                q = Query(q.aggregation, q.agg_column, preds, gb, q.bucket)
            out.append(q)
    return QueryWorkload(queries=tuple(out))


def _answers(frame: _Frame, q: Query, group_domain) -> dict:
    """Query answers keyed by group (None for ungrouped queries)."""
    m = frame.mask(q.predicates)
    agg = frame.cols[q.agg_column]
    out = {}
    if q.group_by is None:
        if q.aggregation == "COUNT":
            out[None] = float(m.sum())
        else:
            sel = agg[m]
            if len(sel):
                out[None] = float(sel.mean())
        return out
    gcol = frame.cols[q.group_by]
    for g in group_domain:
        gm = m & (gcol == g)
        if q.aggregation == "COUNT":
            out[g] = float(gm.sum())
        else:
            sel = agg[gm]
            if len(sel):
                out[g] = float(sel.mean())
    return out


def query_errors(workload: QueryWorkload, table_syn: Table, table_o: Table, scale_counts: bool = False) -> dict[tuple[str, str], list[float]]:
    """Per-query relative errors grouped by (aggregation, bucket).

    Exposed separately from :func:`raqe` so callers can pool errors from
    several synthetic draws before taking the percentile.
    """
    if not workload.queries:
        raise ValidationError("empty workload")
    if [c.name for c in table_syn.schema.columns] != [c.name for c in table_o.schema.columns]:
        raise ValidationError("schemas do not match")
    fo = _Frame(table_o)
    fs = _Frame(table_syn)
    scale = len(table_o) / len(table_syn) if scale_counts and len(table_syn) else 1.0
    errors: dict[tuple[str, str], list[float]] = {}
    domains = {c.name: c.domain for c in table_o.schema.columns if c.kind == CATEGORICAL}
    for q in workload.queries:
        dom = domains.get(q.group_by) if q.group_by else None
        ao = _answers(fo, q, dom)
        asn = _answers(fs, q, dom)
        for g, a_o in ao.items():
            if q.aggregation == "AVG" and g not in asn:
                continue  # empty synthetic group: AVG undefined, skipped
            a_s = asn.get(g, 0.0)
            if q.aggregation == "COUNT" and scale_counts:
                a_s *= scale
            err = abs(a_s - a_o) / max(abs(a_o), 1.0)
            errors.setdefault((q.aggregation, q.bucket), []).append(err)
    return errors


def nearest_rank_p95(values) -> float:
    vals = np.sort(np.asarray(values, dtype=float))
    rank = max(int(np.ceil(0.95 * len(vals))), 1)
    return float(vals[rank - 1])


def raqe(workload: QueryWorkload, table_syn: Table, table_o: Table, scale_counts: bool = False) -> dict[tuple[str, str], float]:
    """Per-(aggregation, bucket) nearest-rank 95th-percentile relative error."""
    errors = query_errors(workload, table_syn, table_o, scale_counts=scale_counts)
    return {key: nearest_rank_p95(errs) for key, errs in errors.items()}


def _tvd(p_counts: dict, q_counts: dict) -> float:
    keys = set(p_counts) | set(q_counts)
    np_, nq = sum(p_counts.values()), sum(q_counts.values())
    return 0.5 * sum(abs(p_counts.get(k, 0) / np_ - q_counts.get(k, 0) / nq) for k in keys)


def marginal_gap(table_syn: Table, table_o: Table) -> float:
    """Mean per-column gap: KS statistic (numerical) or TVD (categorical)."""
    if len(table_syn) == 0 or len(table_o) == 0:
        raise ValidationError("empty table")
    fo = _Frame(table_o)
    fs = _Frame(table_syn)
    gaps = []
    for col in table_o.schema.columns:
        if col.kind == NUMERICAL:
            gaps.append(float(stats.ks_2samp(fs.cols[col.name], fo.cols[col.name]).statistic))
        else:
            cs = dict(zip(*np.unique(fs.cols[col.name], return_counts=True)))
            co = dict(zip(*np.unique(fo.cols[col.name], return_counts=True)))
            gaps.append(_tvd(cs, co))
    return float(np.mean(gaps))


def _quartile_codes(vals: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.digitize(vals, edges)


def correlation_gap(table_syn: Table, table_o: Table) -> float:
    """Mean pairwise gap: |dPearson|/2 for numerical pairs, joint TVD otherwise.

    Numerical columns in mixed pairs are discretized into quartile bins
    taken from the original table.
    """
    cols = table_o.schema.columns
    if len(cols) < 2:
        raise ValidationError("correlation gap requires at least two columns")
    fo = _Frame(table_o)
    fs = _Frame(table_syn)
    edges = {
        c.name: np.quantile(fo.cols[c.name], [0.25, 0.5, 0.75]) for c in cols if c.kind == NUMERICAL
    }

    def codes(frame, col):
        if col.kind == NUMERICAL:
            return _quartile_codes(frame.cols[col.name], edges[col.name])
        return frame.cols[col.name]

    gaps = []
    for i in range(len(cols)):
        for j in range(i + 1, len(cols)):
            a, b = cols[i], cols[j]
            if a.kind == NUMERICAL and b.kind == NUMERICAL:
                def corr(frame):
                    x, y = frame.cols[a.name], frame.cols[b.name]
                    if x.std() == 0 or y.std() == 0:
                        return 0.0
                    return float(np.corrcoef(x, y)[0, 1])
                gaps.append(abs(corr(fs) - corr(fo)) / 2.0)
            else:
                def joint(frame):
                    ca, cb = codes(frame, a), codes(frame, b)
                    pairs, counts = np.unique(
                        np.array([f"{u}\x1f{v}" for u, v in zip(ca, cb)]), return_counts=True
                    )
                    return dict(zip(pairs, counts))
                gaps.append(_tvd(joint(fs), joint(fo)))
    return float(np.mean(gaps))


def traceability_accuracy(n_trials: int, run_trial: Callable[[int], tuple[int, int | None]]) -> float:
    """Fraction of trials where the identified buyer equals the true buyer."""
    if n_trials < 1:
        raise ValidationError("n_trials must be >= 1")
    correct = 0
    for i in range(n_trials):
        true_buyer, found = run_trial(i)
        if found == true_buyer:
            correct += 1
    return correct / n_trials
