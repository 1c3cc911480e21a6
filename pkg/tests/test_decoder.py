import numpy as np
import pytest

from tablemark.optimizer import OptimizerConfig
from tablemark.robustness import RobustnessParams
from tablemark.template import SecretKey
from tablemark.watermarkdb import WatermarkDatabase
from tablemark.workflow import decode_table, encode_table, fit_owner, identify_table

KEY = SecretKey(bytes(range(32)))


@pytest.fixture(scope="module")
def pipeline(small_desk):
    params = RobustnessParams(T=256, deletion_sims=5)
    owner = fit_owner(small_desk, KEY, M=16, L=4, params=params, seed=1)
    db = WatermarkDatabase.generate(8, 4, 0.9)
    return owner, db


def test_encode_decode_round_trip(pipeline):
    owner, db = pipeline
    table_w, result, w_buyer = encode_table(owner, db, "alice", OptimizerConfig(), seed=5)
    decoded = decode_table(owner, db, table_w)
    assert np.array_equal(decoded.bits, w_buyer)


def test_identify_returns_correct_buyer(pipeline):
    owner, db = pipeline
    encode_table(owner, db, "alice", OptimizerConfig(), seed=5)
    table_w, _, _ = encode_table(owner, db, "bob", OptimizerConfig(), seed=6)
    res = identify_table(owner, db, table_w)
    assert res.buyer_id == "bob"
    assert res.distance == 0


def test_counts_reflect_template_pairs(pipeline):
    owner, db = pipeline
    table_w, result, _ = encode_table(owner, db, "carol", OptimizerConfig(), seed=7)
    decoded = decode_table(owner, db, table_w)
    for (l, r), (cl, cr) in zip(owner.template.pairs, decoded.counts):
        assert cl == result.x[l]
        assert cr == result.x[r]


def test_bits_are_raw_xor_w_star(pipeline):
    owner, db = pipeline
    table_w, _, w_buyer = encode_table(owner, db, "dave", OptimizerConfig(), seed=8)
    decoded = decode_table(owner, db, table_w)
    assert np.array_equal(decoded.bits, decoded.raw_bits ^ db.w_star)
