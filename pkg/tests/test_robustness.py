import math

import numpy as np
import pytest

from tablemark.clusterspace import fit_cluster_model
from tablemark.errors import ValidationError
from tablemark.robustness import (
    BitCoefficients,
    DeletionProbs,
    RobustnessParams,
    analytic_ber,
    bit_coefficients,
    derive_delta_ber,
    emit_constraints,
    estimate_deletion_probs,
    estimate_transition_matrix,
    fnr_bound,
    load_robustness,
    required_samples,
    save_robustness,
    validate_transition_matrix,
)
from tablemark.synthesizer import fit_sampler
from tablemark.tableio import CATEGORICAL, NUMERICAL, Column, Table, TableSchema
from tablemark.template import WatermarkTemplate


def mc_pair_difference(x, P, q_vec, l, r, draws, seed):
    """Monte Carlo of the per-tuple survive-then-transition channel."""
    rng = np.random.default_rng(seed)
    diff = np.zeros(draws)
    for k in range(len(x)):
        if x[k] == 0:
            continue
        surv = rng.binomial(int(x[k]), 1.0 - q_vec[k], size=draws)
        pl, pr = P[k, l], P[k, r]
        n_l = rng.binomial(surv, pl)
        rem = surv - n_l
        n_r = rng.binomial(rem, pr / (1.0 - pl)) if pl < 1.0 else np.zeros(draws, dtype=int)
        diff += n_l - n_r
    return diff


def test_required_samples_hoeffding():
    # ceil(ln(2M/xi) / (2 eta^2))
    assert required_samples(0.01, 0.05, 256) == math.ceil(math.log(2 * 256 / 0.05) / (2 * 0.01**2))
    assert required_samples(0.1, 0.1, 4) == math.ceil(math.log(80) / 0.02)


def test_fnr_bound_closed_form_delta_be_zero():
    for p in (0.001, 0.01, 0.2):
        assert fnr_bound(p, 0, 32) == pytest.approx(1 - (1 - p) ** 32, rel=1e-12)


def test_derive_delta_ber_closed_form():
    # at delta_be = 0 the bisection target has the closed form 1-(1-fnr)^(1/L)
    got = derive_delta_ber(1e-3, 0, 32)
    want = 1 - (1 - 1e-3) ** (1 / 32)
    assert got == pytest.approx(want, rel=1e-6)


def test_derive_delta_ber_monotone_in_delta_be():
    vals = [derive_delta_ber(1e-3, b, 32) for b in range(5)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_derive_delta_ber_satisfies_bound():
    for delta_be in (0, 2, 4):
        p = derive_delta_ber(1e-3, delta_be, 32)
        assert fnr_bound(p, delta_be, 32) <= 1e-3 * (1 + 1e-8)


def separated_numeric_table(n_per=300, centers=((0.0,), (100.0,), (200.0,), (300.0,))):
    schema = TableSchema(columns=(Column(name="x", kind=NUMERICAL),))
    rng = np.random.default_rng(0)
    rows = []
    for c in centers:
        for _ in range(n_per):
            rows.append((float(c[0] + rng.normal(scale=0.5)),))
    return Table(schema=schema, rows=tuple(rows))


def test_transition_identity_without_noise():
    table = separated_numeric_table()
    model = fit_cluster_model(table, M=4, seed=0)
    sampler = fit_sampler(table, model, sigma_jit=0.0, seed=0)
    P = estimate_transition_matrix(model, sampler, T=200, i_per=0.0, i_alt=0.0, seed=1)
    assert np.array_equal(P, np.eye(4))


def test_transition_rows_stochastic():
    table = separated_numeric_table()
    model = fit_cluster_model(table, M=4, seed=0)
    sampler = fit_sampler(table, model, sigma_jit=0.02, seed=0)
    P = estimate_transition_matrix(model, sampler, T=128, i_per=0.05, i_alt=0.0, seed=1)
    validate_transition_matrix(P)


def test_transition_full_alteration_two_clusters():
    # one categorical column with two values, one cluster per value; full
    # alteration resamples uniformly over the domain, so rows mix ~50/50
    schema = TableSchema(columns=(Column(name="c", kind=CATEGORICAL, domain=("a", "b")),))
    rows = tuple([("a",)] * 500 + [("b",)] * 500)
    table = Table(schema=schema, rows=rows)
    model = fit_cluster_model(table, M=2, seed=0)
    sampler = fit_sampler(table, model, sigma_jit=0.0, seed=0)
    T = 4000
    P = estimate_transition_matrix(model, sampler, T=T, i_per=0.0, i_alt=1.0, seed=5)
    sigma = math.sqrt(0.25 / T)
    for k in range(2):
        assert abs(P[k, 1 - k] - 0.5) <= 3 * sigma + 1e-12


def test_deletion_probs_zero_intensity():
    template = WatermarkTemplate(L=1, pairs=((0, 1),))
    q = estimate_deletion_probs(np.zeros((10, 2)), np.zeros(10, dtype=int), template, np.array([5, 5]), 2, 0.0, 10)
    assert q.q_in == 0.0 and q.q_out == 0.0


def test_deletion_probs_all_template():
    # M = 2L: the attacker's selection is always the full template, so
    # every deletion hits it: q_in = i_del * total / sum_template = i_del
    rng = np.random.default_rng(2)
    pts = np.concatenate([rng.normal(loc=c, scale=0.1, size=(50, 2)) for c in (0.0, 10.0)])
    assign = np.repeat([0, 1], 50)
    template = WatermarkTemplate(L=1, pairs=((0, 1),))
    h = np.array([50, 50])
    q = estimate_deletion_probs(pts, assign, template, h, 2, 0.2, 5, seed=3)
    assert q.q_in == pytest.approx(0.2)
    assert q.q_out == 0.0


def test_q_vector_layout():
    q = DeletionProbs(q_in=0.3, q_out=0.1, template_clusters=frozenset({1, 3}))
    v = q.q_vector(5)
    assert v.tolist() == [0.1, 0.3, 0.1, 0.3, 0.1]


def random_instance(seed, M=6):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.full(M, 2.0), size=M)
    q = DeletionProbs(q_in=float(rng.uniform(0, 0.3)), q_out=float(rng.uniform(0, 0.2)),
                      template_clusters=frozenset({0, 1}))
    template = WatermarkTemplate(L=1, pairs=((0, 1),))
    x = rng.integers(100, 600, size=M)
    w = np.array([rng.integers(0, 2)], dtype=np.uint8)
    coeffs = bit_coefficients(P, q, template, w, 0.01)
    return x, P, q, template, coeffs, w


@pytest.mark.parametrize("seed", range(5))
def test_analytic_ber_matches_monte_carlo(seed):
    x, P, q, template, coeffs, w = random_instance(seed)
    ber = analytic_ber(x, coeffs, 0)
    draws = 200_000
    diff = mc_pair_difference(x, P, q.q_vector(len(x)), 0, 1, draws, seed + 77)
    if w[0] == 0:
        emp = float(np.mean(diff < 0))
    else:
        emp = float(np.mean(diff >= 0))
    sigma = math.sqrt(max(emp * (1 - emp), 1e-12) / draws)
    assert abs(ber - emp) <= max(3 * sigma, 0.01)


def test_analytic_ber_degenerate_variance():
    # identity transitions with no deletion: variance 0, error is 0 or 1
    template = WatermarkTemplate(L=1, pairs=((0, 1),))
    q = DeletionProbs(q_in=0.0, q_out=0.0, template_clusters=frozenset({0, 1}))
    for w, x, expect in [
        (0, np.array([5, 3]), 0.0),
        (0, np.array([3, 5]), 1.0),
        (1, np.array([3, 5]), 0.0),
        (1, np.array([5, 3]), 1.0),
    ]:
        coeffs = bit_coefficients(np.eye(2), q, template, np.array([w], dtype=np.uint8), 0.01)
        assert analytic_ber(x, coeffs, 0) == expect


def test_constraint_set_flags_violations():
    template = WatermarkTemplate(L=1, pairs=((0, 1),))
    q = DeletionProbs(q_in=0.0, q_out=0.0, template_clusters=frozenset({0, 1}))
    coeffs = bit_coefficients(np.eye(2), q, template, np.array([0], dtype=np.uint8), 0.01)
    cs = emit_constraints(coeffs, total=8)
    assert cs.check(np.array([5, 3])) == []
    assert 0 in cs.check(np.array([3, 5]))  # wrong orientation
    assert -1 in cs.check(np.array([5, 4]))  # cardinality breach


def test_params_validation():
    with pytest.raises(ValidationError):
        RobustnessParams(delta_fpr=0.0)
    with pytest.raises(ValidationError):
        RobustnessParams(i_del=1.0)


def test_robustness_round_trip(tmp_path):
    P = np.eye(3)
    q = DeletionProbs(q_in=0.2, q_out=0.05, template_clusters=frozenset({0, 2}))
    params = RobustnessParams()
    path = tmp_path / "rob.json"
    save_robustness(path, P, q, delta_be=2, delta_ber=0.01, params=params, seed=4)
    obj = load_robustness(path)
    assert np.array_equal(obj["P"], P)
    assert obj["q"] == q
    assert obj["delta_be"] == 2
    assert obj["params"]["delta_fnr"] == params.delta_fnr
