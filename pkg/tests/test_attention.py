"""Intra- and inter-particle attention: closures, oracles, stochasticity, gradients."""

import numpy as np
import pytest

from metaswarm import attention as att
from metaswarm import tape as td


def _random_intra(rng, n):
    return (td.Tensor(rng.uniform(-1, 1, (n, n))),
            td.Tensor(rng.uniform(-1, 1, (n, n))),
            td.Tensor(rng.uniform(-1, 1, (n, 1))))


def test_identical_features_mix_to_themselves():
    rng = np.random.default_rng(0)
    s = rng.uniform(-2, 2, (3, 1))
    feats = [td.Tensor(s) for _ in range(4)]
    w, u, v = _random_intra(rng, 3)
    c, p = att.intra_attend(feats, td.Tensor(np.zeros((3, 1))), w, u, v)
    np.testing.assert_allclose(c.data, s, rtol=1e-12)
    assert p.data.sum() == pytest.approx(1.0, abs=1e-12)


def test_zero_score_vector_gives_uniform_weights():
    rng = np.random.default_rng(1)
    feats = [td.Tensor(rng.uniform(-2, 2, (3, 1))) for _ in range(4)]
    w, u, _ = _random_intra(rng, 3)
    c, p = att.intra_attend(feats, td.Tensor(rng.uniform(-1, 1, (3, 1))), w, u,
                            td.Tensor(np.zeros((3, 1))))
    np.testing.assert_allclose(p.data.ravel(), np.full(4, 0.25), rtol=1e-12)
    ref = sum(0.25 * f.data for f in feats)
    np.testing.assert_allclose(c.data, ref, rtol=1e-12)


def test_intra_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    feats_data = [rng.uniform(-2, 2, (3, 1)) for _ in range(4)]
    ctx = rng.uniform(-1, 1, (3, 1))
    theta = {"w_a": rng.uniform(-1, 1, (3, 3)), "u_a": rng.uniform(-1, 1, (3, 3)),
             "v_a": rng.uniform(-1, 1, (3, 1))}

    def build(t, p):
        feats = [td.Tensor(f) for f in feats_data]
        c, _ = att.intra_attend(feats, td.Tensor(ctx), p["w_a"], p["u_a"], p["v_a"])
        return td.sum_all(c)

    assert td.grad_check(build, theta, 1e-5) < 1e-5


def test_single_particle_closure():
    rng = np.random.default_rng(3)
    c1 = td.Tensor(rng.uniform(-1, 1, (4, 1)))
    x1 = td.Tensor(rng.uniform(-5, 5, (4, 1)))
    es, q, m = att.inter_attend([c1], [x1], gamma=1.0, length_scale=1.0)
    np.testing.assert_allclose(q.data, [[1.0]])
    np.testing.assert_allclose(m.data, [[1.0]])
    np.testing.assert_allclose(es[0].data, 2.0 * c1.data, rtol=1e-12)


def test_identical_pair_mixes_half_of_gamma():
    # both matrices become all 0.5, so sum_r m q c = c / 2 and e = (1 + gamma/2) c
    c = td.Tensor(np.array([[0.3], [-0.7]]))
    x = td.Tensor(np.array([[1.0], [2.0]]))
    es, q, m = att.inter_attend([c, c], [x, x], gamma=1.0, length_scale=1.0)
    np.testing.assert_allclose(q.data, np.full((2, 2), 0.5), atol=1e-12)
    np.testing.assert_allclose(m.data, np.full((2, 2), 0.5), atol=1e-12)
    for e in es:
        np.testing.assert_allclose(e.data, 1.5 * c.data, rtol=1e-12)


def test_three_particle_case_matches_term_by_term_summation():
    rng = np.random.default_rng(4)
    cs = [rng.uniform(-1, 1, (3, 1)) for _ in range(3)]
    xs = [rng.uniform(-5, 5, (3, 1)) for _ in range(3)]
    gamma, ell = 1.0, 1.0
    es, q, m = att.inter_attend([td.Tensor(c) for c in cs], [td.Tensor(x) for x in xs],
                                gamma, ell)
    qref = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            qref[i, j] = np.exp(-np.sum((xs[i] - xs[j]) ** 2) / (2 * ell))
    qref = qref / qref.sum(axis=0, keepdims=True)
    dots = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            dots[i, j] = float(np.dot(cs[i].ravel(), cs[j].ravel()))
    mref = np.exp(dots - dots.max(axis=0)) / np.exp(dots - dots.max(axis=0)).sum(axis=0, keepdims=True)
    np.testing.assert_allclose(q.data, qref, rtol=1e-12)
    np.testing.assert_allclose(m.data, mref, rtol=1e-12)
    for j in range(3):
        eref = gamma * sum(mref[r, j] * qref[r, j] * cs[r] for r in range(3)) + cs[j]
        rel = np.max(np.abs(es[j].data - eref) / (np.abs(eref) + 1e-12))
        assert rel < 1e-12


def test_trace_share_identity_limit_and_hand_value():
    q = np.full((2, 2), 0.5)
    m = np.full((2, 2), 0.5)
    assert att.trace_share(q, m, gamma=0.0) == pytest.approx(1.0)
    assert att.trace_share(q, m, gamma=1.0) == pytest.approx(2.5 / 3.0)


def test_q_and_m_columns_sum_to_one_across_sizes():
    rng = np.random.default_rng(5)
    for k in (1, 2, 4, 10):
        for _ in range(100):
            cs = [td.Tensor(rng.uniform(-3, 3, (4, 1))) for _ in range(k)]
            xs = [td.Tensor(rng.uniform(-5.12, 5.12, (4, 1))) for _ in range(k)]
            _, q, m = att.inter_attend(cs, xs, gamma=1.0, length_scale=1.0)
            np.testing.assert_allclose(q.data.sum(axis=0), np.ones(k), atol=1e-9)
            np.testing.assert_allclose(m.data.sum(axis=0), np.ones(k), atol=1e-9)
            assert np.all(q.data > 0) and np.all(q.data <= 1 + 1e-12)
            assert np.all(m.data > 0) and np.all(m.data <= 1 + 1e-12)


def test_permuting_particles_permutes_outputs():
    rng = np.random.default_rng(6)
    for case in range(20):
        cs = [rng.uniform(-1, 1, (3, 1)) for _ in range(4)]
        xs = [rng.uniform(-5, 5, (3, 1)) for _ in range(4)]
        perm = rng.permutation(4)
        es, _, _ = att.inter_attend([td.Tensor(c) for c in cs], [td.Tensor(x) for x in xs], 1.0, 1.0)
        es_p, _, _ = att.inter_attend([td.Tensor(cs[i]) for i in perm],
                                      [td.Tensor(xs[i]) for i in perm], 1.0, 1.0)
        for slot, orig in enumerate(perm):
            np.testing.assert_allclose(es_p[slot].data, es[orig].data, rtol=1e-10, atol=1e-12)


def test_attention_weights_are_shift_invariant():
    rng = np.random.default_rng(7)
    scores = rng.uniform(-2, 2, (4, 1))
    base = td.softmax(td.Tensor(scores), axis=0).data
    shifted = td.softmax(td.Tensor(scores + 3.7), axis=0).data
    np.testing.assert_allclose(base, shifted, rtol=1e-12)


def test_full_attention_module_gradients_match_finite_differences():
    rng = np.random.default_rng(8)
    k, n = 3, 2
    feats_data = [[rng.uniform(-1, 1, (n, 1)) for _ in range(4)] for _ in range(k)]
    xs_data = [rng.uniform(-2, 2, (n, 1)) for _ in range(k)]
    ctx_data = [rng.uniform(-1, 1, (n, 1)) for _ in range(k)]
    theta = {"w_a": rng.uniform(-0.5, 0.5, (n, n)), "u_a": rng.uniform(-0.5, 0.5, (n, n)),
             "v_a": rng.uniform(-0.5, 0.5, (n, 1))}

    def build(t, p):
        cs = []
        for i in range(k):
            feats = [td.Tensor(f) for f in feats_data[i]]
            c, _ = att.intra_attend(feats, td.Tensor(ctx_data[i]), p["w_a"], p["u_a"], p["v_a"])
            cs.append(c)
        es, _, _ = att.inter_attend(cs, [td.Tensor(x) for x in xs_data], 1.0, 1.0)
        total = es[0]
        for e in es[1:]:
            total = total + e
        return td.sqnorm(total)

    assert td.grad_check(build, theta, 1e-5) < 1e-4


def test_empty_particle_set_rejected():
    with pytest.raises(Exception):
        att.inter_attend([], [], 1.0, 1.0)
