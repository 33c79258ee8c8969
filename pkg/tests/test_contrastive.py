import numpy as np
import pytest

from agegraph.common import ConfigError, make_rng
from agegraph.contrastive import (EmbeddingBundle, LossConfig, anchor_embed, loss_components,
                                  loss_over_negatives, loss_total, loss_triplet, loss_upper,
                                  make_bundles, negative_shuffle, neighbor_positive,
                                  row_distance_sq)
from agegraph.tensor import Tensor

from utils import assert_close, leaky, random_graph, run_grad_harness


def rows(n, d=3, seed=0):
    return Tensor(make_rng(seed, 11).normal(size=(n, d)))


def test_anchor_zero_weights():
    params = {'fc1': Tensor(np.zeros((4, 5))), 'fc2': Tensor(np.zeros((5, 3)))}
    assert_close(anchor_embed(rows(6, 4), params), np.zeros((6, 3)))


def test_anchor_matches_straight_line():
    rng = make_rng(1)
    xi = rng.normal(size=(6, 4))
    w1, w2 = rng.normal(size=(4, 5)), rng.normal(size=(5, 3))
    params = {'fc1': Tensor(w1), 'fc2': Tensor(w2)}
    out = anchor_embed(Tensor(xi), params)
    assert_close(out, leaky(xi @ w1) @ w2, tol=1e-12)
    assert np.array_equal(out.values, anchor_embed(Tensor(xi), params).values)


def test_anchor_dropout_training_only():
    rng = make_rng(2)
    params = {'fc1': Tensor(rng.normal(size=(4, 5))), 'fc2': Tensor(rng.normal(size=(5, 3)))}
    xi = rows(6, 4)
    eval_out = anchor_embed(xi, params, training=False, rate=0.5, seed=3)
    assert_close(eval_out, anchor_embed(xi, params), tol=0)
    train_a = anchor_embed(xi, params, training=True, rate=0.5, seed=3)
    train_b = anchor_embed(xi, params, training=True, rate=0.5, seed=3)
    assert np.array_equal(train_a.values, train_b.values)


def test_negative_shuffle_pair():
    h = rows(2)
    neg, perm = negative_shuffle(h, 0)
    assert perm.tolist() == [1, 0]
    assert_close(neg, h.values[::-1])


def test_negative_shuffle_is_row_permutation():
    h = rows(7)
    for seed in range(20):
        neg, perm = negative_shuffle(h, seed)
        assert sorted(perm.tolist()) == list(range(7))
        assert np.array_equal(neg.values, h.values[perm])


def test_negative_shuffle_has_no_fixed_points():
    h = rows(6)
    fixed = 0
    for seed in range(10**4):
        _, perm = negative_shuffle(h, (seed, 1))
        fixed += int(np.sum(perm == np.arange(6)))
    assert fixed == 0


def test_negative_shuffle_within_segments():
    segments = np.repeat([0, 1, 2], 3)
    _, perm = negative_shuffle(rows(9), 5, segments)
    assert np.array_equal(segments[perm], segments)
    assert not np.any(perm == np.arange(9))


def test_negative_shuffle_single_row():
    with pytest.raises(ConfigError):
        negative_shuffle(rows(1), 0)
    with pytest.raises(ConfigError):
        negative_shuffle(rows(3), 0, np.array([0, 0, 1]))


def test_neighbor_positive_identical_rows():
    g = random_graph(6, 3, 2)
    h = Tensor(np.tile([1.0, -2.0, 0.5], (6, 1)))
    assert_close(neighbor_positive(h, g, 2, 0), h, tol=1e-12)


def test_neighbor_positive_single_neighbor():
    g = random_graph(5, 1, 2)
    h = rows(5)
    assert_close(neighbor_positive(h, g, 1, 0), h.values[g.neighbors[:, 0]])


def test_neighbor_positive_samples_without_replacement():
    g = random_graph(10, 5, 2, seed=1)
    h = rows(10, seed=1)
    out = neighbor_positive(h, g, 3, (4, 0)).values
    picks = np.argsort(make_rng(4, 0).random((10, 5)), axis=1)[:, :3]
    for i in range(10):
        chosen = g.neighbors[i, picks[i]]
        assert len(set(chosen.tolist())) == 3
        assert_close(out[i], h.values[chosen].mean(axis=0), tol=1e-12)


def test_neighbor_positive_all_neighbors():
    g = random_graph(8, 4, 2)
    h = rows(8)
    expected = h.values[g.neighbors].mean(axis=1)
    assert_close(neighbor_positive(h, g, 4, 7), expected, tol=1e-12)


def test_neighbor_positive_count_range():
    g = random_graph(6, 3, 2)
    with pytest.raises(ConfigError):
        neighbor_positive(rows(6), g, 4, 0)
    with pytest.raises(ConfigError):
        neighbor_positive(rows(6), g, 0, 0)


def test_row_distance_examples():
    a = rows(4)
    assert_close(row_distance_sq(a, a), np.zeros(4))
    b = rows(4, seed=1)
    expected = [sum((a.values[i, k] - b.values[i, k])**2 for k in range(3)) for i in range(4)]
    assert_close(row_distance_sq(a, b), expected, tol=1e-12)


def triplet_loop(h, p, n, alpha):
    total = 0.0
    for i in range(len(h)):
        total += max(np.sum((h[i] - p[i])**2) - np.sum((h[i] - n[i])**2) + alpha, 0.0)
    return total / len(h)


def upper_loop(h, p, n, alpha, beta):
    total = 0.0
    for i in range(len(h)):
        total += min(np.sum((h[i] - p[i])**2) - np.sum((h[i] - n[i])**2) + alpha + beta, 0.0)
    return -total / len(h)


def test_triplet_examples():
    h = rows(3)
    far = Tensor(h.values + 10.0)
    assert loss_triplet(h, h, far, 0.8).item() == 0.0
    assert abs(loss_triplet(h, h, h, 0.8).item() - 0.8) < 1e-12

    p, n = rows(3, seed=1), rows(3, seed=2)
    expected = triplet_loop(h.values, p.values, n.values, 0.8)
    assert abs(loss_triplet(h, p, n, 0.8).item() - expected) < 1e-12


def test_upper_examples():
    h = rows(4)
    assert loss_upper(h, h, h, 0.8, 0.2).item() == 0.0

    # squared negative distance = alpha + beta + 1
    one = Tensor([[0.0, 0.0]])
    neg = Tensor([[np.sqrt(2.0), 0.0]])
    assert abs(loss_upper(one, one, neg, 0.8, 0.2).item() - 1.0) < 1e-12

    p, n = rows(4, seed=1), Tensor(rows(4, seed=2).values * 3)
    expected = upper_loop(h.values, p.values, n.values, 0.8, 0.2)
    assert abs(loss_upper(h, p, n, 0.8, 0.2).item() - expected) < 1e-12


def bundle(n=6, seed=0):
    h, p, tilde = rows(n, seed=seed), rows(n, seed=seed + 1), rows(n, seed=seed + 2)
    neg, perm = negative_shuffle(h, seed)
    return EmbeddingBundle(h, p, tilde, neg, perm)


def test_loss_total_weights():
    b = bundle()
    assert loss_total(b, LossConfig(w1=0, w2=0, w3=0)).item() == 0.0
    parts = {k: v.item() for k, v in loss_components(b, LossConfig()).items()}
    expected = parts['l_n'] + 0.5 * parts['l_m'] + 0.5 * parts['l_v']
    assert abs(loss_total(b, LossConfig()).item() - expected) < 1e-12


def test_loss_total_composes_components():
    cfg = LossConfig(w1=0.3, w2=1.7, w3=0.9)
    for seed in range(10):
        b = bundle(seed=seed)
        expected = (0.3 * loss_triplet(b.anchor, b.structural_pos, b.negative, cfg.alpha).item()
                    + 1.7 * loss_triplet(b.anchor, b.neighbor_pos, b.negative, cfg.alpha).item()
                    + 0.9 * loss_upper(b.anchor, b.structural_pos, b.negative, cfg.alpha,
                                       cfg.beta).item())
        assert abs(loss_total(b, cfg).item() - expected) < 1e-12


def test_losses_non_negative():
    rng = make_rng(12)
    for seed in range(200):
        scale = rng.uniform(0.01, 10)
        b = bundle(seed=seed)
        b = b._replace(negative=Tensor(b.negative.values * scale))
        for value in loss_components(b, LossConfig()).values():
            assert value.item() >= 0.0
        assert loss_total(b, LossConfig()).item() >= 0.0


def random_bundle(rng):
    n, d = rng.integers(2, 9), rng.integers(1, 6)
    scale = 10.0**rng.uniform(-2, 1)
    h, p, tilde = (Tensor(rng.normal(size=(n, d)) * scale) for _ in range(3))
    others = Tensor(rng.normal(size=(n, d)) * scale)
    neg, perm = negative_shuffle(others, int(rng.integers(1 << 30)))
    return EmbeddingBundle(h, p, tilde, neg, perm)


def test_losses_non_negative_many_bundles():
    rng = make_rng(14)
    for _ in range(10_000):
        cfg = LossConfig(alpha=rng.uniform(0.01, 2), beta=rng.uniform(0.01, 2))
        parts = loss_components(random_bundle(rng), cfg)
        assert min(v.item() for v in parts.values()) >= 0.0


def within_bound_loop(h, p, n, alpha, beta):
    for i in range(len(h)):
        d_pos = sum((h[i, k] - p[i, k])**2 for k in range(h.shape[1]))
        d_neg = sum((h[i, k] - n[i, k])**2 for k in range(h.shape[1]))
        if d_neg > d_pos + alpha + beta:
            return False
    return True


def test_upper_zero_exactly_when_rows_within_bound():
    rng = make_rng(15)
    outcomes = set()
    for _ in range(2000):
        alpha, beta = rng.uniform(0.1, 1.5), rng.uniform(0.1, 1.5)
        n, d = rng.integers(1, 7), rng.integers(1, 5)
        h, p = rng.normal(size=(n, d)), rng.normal(size=(n, d))
        # place each negative just inside or just outside the bound
        slack = np.where(rng.random(n) < 0.7, -rng.uniform(1e-3, (alpha + beta) / 2, n),
                         rng.uniform(1e-3, 2.0, n))
        target = np.sum((h - p)**2, axis=1) + alpha + beta + slack
        direction = rng.normal(size=(n, d))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        neg = h + direction * np.sqrt(target)[:, None]

        value = loss_upper(Tensor(h), Tensor(p), Tensor(neg), alpha, beta).item()
        within = within_bound_loop(h, p, neg, alpha, beta)
        assert within == bool(np.all(slack < 0))
        assert (value == 0.0) == within
        assert abs(value - upper_loop(h, p, neg, alpha, beta)) < 1e-9
        outcomes.add(within)
    assert outcomes == {True, False}


def test_triplet_rotation_invariant():
    b = bundle(seed=3)
    q, _ = np.linalg.qr(make_rng(13).normal(size=(3, 3)))
    rot = [Tensor(t.values @ q) for t in (b.anchor, b.structural_pos, b.negative)]
    before = loss_triplet(b.anchor, b.structural_pos, b.negative, 0.8).item()
    assert abs(loss_triplet(*rot, 0.8).item() - before) < 1e-10


def test_monotone_in_margins():
    b = bundle(seed=4)
    args = (b.anchor, b.structural_pos, b.negative)
    alphas = np.linspace(0.05, 5, 30)
    l_n = [loss_triplet(*args, a).item() for a in alphas]
    assert all(x <= y for x, y in zip(l_n, l_n[1:]))
    betas = np.linspace(0.05, 5, 30)
    l_v = [loss_upper(*args, 0.8, beta).item() for beta in betas]
    assert all(x >= y for x, y in zip(l_v, l_v[1:]))


def test_loss_config_validate():
    LossConfig().validate()
    LossConfig(w1=0, w2=0, w3=0).validate(require_weight=False)
    for bad in (LossConfig(alpha=0), LossConfig(beta=-1), LossConfig(w2=-0.5),
                LossConfig(w1=0, w2=0, w3=0), LossConfig(neighbor_samples=0),
                LossConfig(negative_count=0)):
        with pytest.raises(ConfigError):
            bad.validate()


def test_make_bundles_shares_neighbor_positive():
    g = random_graph(8, 4, 3)
    anchor, h_struct = rows(8), rows(8, seed=1)
    cfg = LossConfig(neighbor_samples=2, negative_count=3)
    bundles = make_bundles(anchor, h_struct, g, cfg, (1, 2))
    assert len(bundles) == 3
    assert all(b.neighbor_pos is bundles[0].neighbor_pos for b in bundles)
    for b in bundles:
        assert np.array_equal(b.negative.values, anchor.values[b.permutation])
    mean_loss = np.mean([loss_total(b, cfg).item() for b in bundles])
    assert abs(loss_over_negatives(bundles, cfg).item() - mean_loss) < 1e-12


def test_loss_gradients():
    rng = make_rng(14)
    h = Tensor(rng.normal(size=(5, 3)))
    p = Tensor(h.values + 0.1 * rng.normal(size=(5, 3)))
    tilde = Tensor(h.values + 0.2 * rng.normal(size=(5, 3)))
    n = Tensor(h.values + rng.normal(size=(5, 3)))
    cfg = LossConfig()
    far = row_distance_sq(h, n).values
    # evaluation point away from every hinge
    for pos in (p, tilde):
        gap = row_distance_sq(h, pos).values - far
        assert np.all(np.abs(gap + cfg.alpha) > 1e-3)
    gap = row_distance_sq(h, p).values - far
    assert np.all(np.abs(gap + cfg.alpha + cfg.beta) > 1e-3)
    perm = np.arange(5)

    def fn(h, p, tilde, n):
        return loss_total(EmbeddingBundle(h, p, tilde, n, perm), cfg)

    run_grad_harness(fn, [h, p, tilde, n])
