from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pbrl import codec, tables


def reference_decode(h, llr_full, n_active, max_iter, layered):
    """Textbook dictionary-based sum-product with the same message clamps as the fast decoder."""
    h = sp.csr_matrix(h)
    h.sort_indices()
    rows = [h.indices[h.indptr[c]:h.indptr[c + 1]] for c in range(n_active)]
    chan = np.clip(llr_full, -codec.LLR_CLAMP, codec.LLR_CLAMP)
    msg = {(c, v): 0.0 for c in range(n_active) for v in rows[c]}
    post = chan.copy()

    def update(ins):
        t = np.clip(np.tanh(ins / 2), -codec.TANH_CLAMP, codec.TANH_CLAMP)
        out = []
        for i in range(len(ins)):
            p = np.clip(np.prod(np.delete(t, i)), -codec.TANH_CLAMP, codec.TANH_CLAMP)
            out.append(np.clip(2 * np.arctanh(p), -codec.LLR_CLAMP, codec.LLR_CLAMP))
        return out

    hard = (post < 0).astype(np.uint8)
    for it in range(1, max_iter + 1):
        if layered:
            for c in range(n_active):
                ins = np.array([post[v] - msg[c, v] for v in rows[c]])
                for v, i, o in zip(rows[c], ins, update(ins)):
                    msg[c, v] = o
                    post[v] = i + o
        else:
            ins = {c: np.array([post[v] - msg[c, v] for v in rows[c]]) for c in range(n_active)}
            for c in range(n_active):
                for v, o in zip(rows[c], update(ins[c])):
                    msg[c, v] = o
            post = chan.copy()
            for (c, v), o in msg.items():
                post[v] += o
        hard = (post < 0).astype(np.uint8)
        if all(hard[r].sum() % 2 == 0 for r in rows):
            return hard, it, True
    return hard, max_iter, False


@pytest.fixture(scope="module")
def pn_code(short_codes):
    return short_codes["short_pnpbrl_z32"]


def test_short_code_dimensions(pn_code):
    code, plan = pn_code
    assert (code.n, plan.k, code.k) == (608, 192, 192)
    assert code.n_tx(0) == 224 and code.n_tx(1) == 256 and code.n_tx(11) == 576
    for m in range(code.num_lt):
        nxt = code.transmit_positions(m + 1)
        assert np.array_equal(code.transmit_positions(m), nxt[: code.n_tx(m)])


def test_codewords_satisfy_every_check(short_codes):
    rng = np.random.default_rng(0)
    for code, plan in short_codes.values():
        info = rng.integers(0, 2, (500, plan.k), dtype=np.uint8)
        cw = codec.encode(plan, info)
        assert not code.syndrome(cw).any()
        assert np.array_equal(cw[:, plan.info_positions], info)
        assert not codec.encode(plan, np.zeros(plan.k, np.uint8)).any()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_encoder_is_linear(short_codes, seed):
    code, plan = short_codes["short_pbrl_z32"]
    rng = np.random.default_rng(seed)
    a, b = rng.integers(0, 2, (2, plan.k), dtype=np.uint8)
    assert np.array_equal(codec.encode(plan, a ^ b), codec.encode(plan, a) ^ codec.encode(plan, b))


@pytest.mark.parametrize("schedule", codec.SCHEDULES)
def test_noiseless_and_erased_inputs(pn_code, schedule):
    code, plan = pn_code
    info = np.random.default_rng(1).integers(0, 2, (8, plan.k), dtype=np.uint8)
    for m in (0, 1, 11):
        tx = codec.select_transmit(codec.encode(plan, info), code, m)
        out = codec.decode(code, 20.0 * (1 - 2.0 * tx), m, schedule)
        assert out.converged.all() and out.iterations.max() <= 2
        assert np.array_equal(out.hard[:, plan.info_positions], info)
    # a zero LLR decides bit 0, and the all-zero word is a codeword
    zero = codec.decode(code, np.zeros(code.n_tx(1)), 1, schedule, max_iter=10)
    assert zero.converged and zero.iterations == 1 and not zero.hard.any()
    noise = codec.decode(code, np.random.default_rng(9).normal(0, 1, code.n_tx(1)), 1, schedule,
                         max_iter=10)
    assert not noise.converged and noise.iterations == 10


def test_sign_symmetry(pn_code):
    code, plan = pn_code
    rng = np.random.default_rng(2)
    info = rng.integers(0, 2, plan.k, dtype=np.uint8)
    cw = codec.encode(plan, info)
    m = 3
    sent = (code.n_precode + m) * code.z
    for sd in (0.4, 1.2):
        noise = rng.normal(0, sd, code.n_tx(m))
        zero_word = codec.decode(code, 2.5 * (1 + noise), m)
        signs = 1 - 2.0 * codec.select_transmit(cw, code, m)
        flipped = codec.decode(code, 2.5 * signs * (1 + noise), m)
        assert zero_word.iterations == flipped.iterations
        assert np.array_equal((zero_word.hard ^ cw)[:sent], flipped.hard[:sent])


@pytest.mark.parametrize("schedule", codec.SCHEDULES)
def test_deactivation_equals_truncated_graph(pn_code, schedule):
    code, plan = pn_code
    rng = np.random.default_rng(3)
    for m in (1, 5):
        info = rng.integers(0, 2, (40, plan.k), dtype=np.uint8)
        tx = codec.select_transmit(codec.encode(plan, info), code, m)
        llr = 1.6 * (1 - 2.0 * tx + rng.normal(0, 0.9, tx.shape))
        full = codec.decode(code, llr, m, schedule)
        small = codec.decode(code.truncated(m), llr, m, schedule)
        width = small.hard.shape[1]
        assert np.array_equal(full.hard[:, :width], small.hard)
        assert np.array_equal(full.iterations, small.iterations)


@pytest.mark.parametrize("schedule", codec.SCHEDULES)
def test_agrees_with_reference_decoder(pn_code, schedule):
    code, plan = pn_code
    rng = np.random.default_rng(4)
    m = 2
    info = rng.integers(0, 2, (4, plan.k), dtype=np.uint8)
    tx = codec.select_transmit(codec.encode(plan, info), code, m)
    llr = 1.4 * (1 - 2.0 * tx + rng.normal(0, 1.0, tx.shape))
    fast = codec.decode(code, llr, m, schedule, max_iter=15)
    n_active = (code.r_precode + m) * code.z
    full = codec.channel_to_variables(code, llr, m)
    for f in range(len(llr)):
        hard, it, ok = reference_decode(code.h, full[f], n_active, 15, schedule == "layered")
        assert (fast.iterations[f], bool(fast.converged[f])) == (it, ok)
        assert np.array_equal(fast.hard[f], hard)


@pytest.mark.parametrize("seed", [1, 5])
def test_layered_posterior_is_not_saturated(pn_code, seed):
    # on these frames, clipping the posterior at the message clamp changes hard decisions
    code, plan = pn_code
    rng = np.random.default_rng(seed)
    m = 2
    info = rng.integers(0, 2, (1, plan.k), dtype=np.uint8)
    tx = codec.select_transmit(codec.encode(plan, info), code, m)
    llr = 8.0 * (1 - 2.0 * tx + rng.normal(0, 0.9, tx.shape))
    fast = codec.decode(code, llr, m, "layered", max_iter=15)
    full = codec.channel_to_variables(code, llr, m)
    hard, it, ok = reference_decode(code.h, full[0], (code.r_precode + m) * code.z, 15, True)
    assert (fast.iterations[0], bool(fast.converged[0])) == (it, ok)
    assert np.array_equal(fast.hard[0], hard)


def test_rejects_bad_inputs(pn_code):
    code, plan = pn_code
    with pytest.raises(codec.CodecError):
        codec.decode(code, np.full(code.n_tx(1), np.nan), 1)
    with pytest.raises(codec.CodecError):
        codec.decode(code, np.zeros(code.n_tx(1) + 1), 1)
    with pytest.raises(codec.CodecError):
        codec.decode(code, np.zeros(code.n_tx(1)), 1, schedule="shuffled")
    with pytest.raises(codec.CodecError):
        codec.encode(plan, np.zeros(plan.k - 1, np.uint8))
    with pytest.raises(codec.CodecError):
        code.n_tx(code.num_lt + 1)
    dup = sp.csr_matrix(np.array([[1, 1, 1, 0], [1, 1, 1, 0]], dtype=np.uint8))
    with pytest.raises(codec.CodecError):
        codec.build_encoder(codec.SparseParityCheck.from_matrix(dup, 1, 4, 2))


def test_expand_checks_family():
    qc = tables.load_qc("short_pnpbrl_z32_printed")
    with pytest.raises(codec.CodecError):
        codec.expand(qc, tables.load_family("short_pnpbrl"))


def test_file_formats_round_trip(tmp_path, pn_code):
    code, plan = pn_code
    bits = np.random.default_rng(5).integers(0, 2, (3, 17), dtype=np.uint8)
    codec.write_bits(tmp_path / "b.txt", bits)
    assert np.array_equal(codec.read_bits(tmp_path / "b.txt"), bits)
    llr = np.random.default_rng(6).normal(size=(2, 9)).astype(np.float32)
    codec.write_llr(tmp_path / "l.bin", llr)
    assert np.array_equal(codec.read_llr(tmp_path / "l.bin", 9), llr)
    with pytest.raises(codec.CodecError):
        codec.read_llr(tmp_path / "l.bin", 7)
