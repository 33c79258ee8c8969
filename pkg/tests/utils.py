import numpy as np

from agegraph.common import make_rng
from agegraph.contrastive import LossConfig
from agegraph.gradcheck import check_gradients
from agegraph.graph import build_knn_graph
from agegraph.params import ModelConfig
from agegraph.tensor import Tensor
from agegraph.training import TrainConfig

TINY_MODEL = ModelConfig(embed_dim=6, hidden_dim=6, out_dim=6, layer_count=2, stem_channels=3,
                         stem_kernel=2, anchor_hidden=6)
TINY_TRAIN = TrainConfig(image_size=16, patch_size=4, K=3, batch_size=4, epochs=2, dropout=0.0,
                         mask_rate=0.25, learning_rate=1e-3, model=TINY_MODEL,
                         loss=LossConfig(neighbor_samples=2))

TINY_CLI = [
    '--set', 'model.preset=tiny', '--set', 'image_size=16', '--set', 'patch_size=4',
    '--set', 'K=3', '--set', 'model.stem_kernel=2', '--set', 'batch_size=4',
    '--set', 'loss.neighbor_samples=2'
]


def assert_close(actual, expected, tol=1e-12):
    actual = actual.values if isinstance(actual, Tensor) else np.asarray(actual)
    expected = expected.values if isinstance(expected, Tensor) else np.asarray(expected)
    assert actual.shape == expected.shape, (actual.shape, expected.shape)
    if not np.allclose(actual, expected, rtol=0, atol=tol):
        print('ACTUAL')
        print(actual)
        print('=' * 30)
        print('EXPECTED')
        print(expected)
        assert False, 'max abs difference {}'.format(np.max(np.abs(actual - expected)))


def random_graph(n, k, d, seed=0, num_relations=1):
    rng = make_rng(seed, 99)
    features = Tensor(rng.normal(size=(n, d)))
    return build_knn_graph(features, k, num_relations)


def run_grad_harness(fn, inputs, tol=1e-4):
    report = check_gradients(fn, inputs)
    assert report.max_error <= tol, report
    return report


def leaky(x, slope=0.01):
    return np.where(x > 0, x, slope * x)


def attention_oracle(h, g, a, slope=0.01):
    """Straight-line concat → dot → leaky → softmax per node."""
    n = g.num_nodes
    omega = np.zeros((n, g.k + 1))
    for i in range(n):
        group = [i] + list(g.neighbors[i])
        scores = np.array([leaky(np.concatenate([h[i], h[j]]) @ a[:, 0], slope) for j in group])
        e = np.exp(scores - scores.max())
        omega[i] = e / e.sum()
    return omega


def dense_gcn_oracle(h, g, omega, self_w, neighbor_ws, self_term='averaged', slope=0.01):
    """
    Attention-weighted relational graph convolution with graph_sage
    aggregation, evaluated with dense per-relation adjacency matrices:

        leaky(Σ_r A_r·H·W_neighbor,r + c_r·diag(ω_ii)·H·W_self)
    """
    n = g.num_nodes
    total = np.zeros((n, self_w.shape[1]))
    for r, w_nbr in enumerate(neighbor_ws):
        adj = np.zeros((n, n))
        self_scale = np.zeros(n)
        for i in range(n):
            cols = [c for c in range(g.k) if g.relations[i, c] == r]
            for c in cols:
                adj[i, g.neighbors[i, c]] += omega[i, c + 1] / len(cols)
            self_scale[i] = omega[i, 0] * (1 if self_term == 'averaged' else len(cols))
        total += adj @ h @ w_nbr + (self_scale[:, None] * h) @ self_w
    return leaky(total, slope)
