import logging as log
from typing import FrozenSet, Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

from .common import ConfigError, DataError, StructuralError, floor_count, make_rng
from .ops import concat, conv2d, leaky_relu, mean, mul
from .tensor import Tensor


class ImageSample(NamedTuple):
    pixels: np.ndarray  # h×w×3, channels in [0, 1]
    age_label: Optional[float]
    id: str


class Edge(NamedTuple):
    src: int
    dst: int
    relation: int
    weight: float


def check_image(img: ImageSample, patch_size: int):
    pixels = img.pixels
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise DataError(f'{img.id}: expected an h×w×3 image, got {pixels.shape}')
    if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
        raise DataError(f'{img.id}: pixel values outside [0, 1]')
    h, w, _ = pixels.shape
    if patch_size < 1 or h % patch_size or w % patch_size:
        raise ConfigError(
            f'{img.id}: patch size {patch_size} does not divide image size {h}×{w}')


def partition_image(img: ImageSample, patch_size: int) -> np.ndarray:
    """
    Cuts an image into non-overlapping patch_size×patch_size blocks, returned
    as an N×p×p×3 array in row-major scan order.
    """
    check_image(img, patch_size)
    h, w, c = img.pixels.shape
    p = patch_size
    blocks = img.pixels.reshape(h // p, p, w // p, p, c).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(-1, p, p, c)


def assemble_patches(patches: np.ndarray, h: int, w: int) -> np.ndarray:
    n, p, _, c = patches.shape
    assert n == (h // p) * (w // p), (n, h, w, p)
    blocks = patches.reshape(h // p, w // p, p, p, c).transpose(0, 2, 1, 3, 4)
    return blocks.reshape(h, w, c)


def embed_patches(patches, stem, slope: float = 0.01) -> Tensor:
    """
    Conv stem shared by the graph nodes and the anchor path: two valid
    convolutions with LeakyReLU, then a spatial mean, giving one d-vector per
    patch. `stem` maps 'conv1'/'conv2' (and optionally 'bias1'/'bias2') to
    tensors.
    """
    x = patches if isinstance(patches, Tensor) else Tensor(np.asarray(patches))
    for layer in ('1', '2'):
        x = conv2d(x, stem['conv' + layer])
        if 'bias' + layer in stem:
            x = x + stem['bias' + layer]
        x = leaky_relu(x, slope)
    return mean(x, axis=(1, 2))


class PatchGraph(NamedTuple):
    """
    KNN graph over patch features. Neighbors are stored densely: row i
    of `neighbors` lists the in-neighbors of node i (entry j is an edge
    j→i), with the matching relation id and edge weight. A batch of
    images is one PatchGraph whose `segments` give each node's image.
    """
    node_features: Tensor
    neighbors: np.ndarray  # N×K int
    relations: np.ndarray  # N×K int, ids in [0, num_relations)
    weights: np.ndarray  # N×K, each in [0, 1]
    mask_rows: FrozenSet[int] = frozenset()
    num_relations: int = 1
    segments: Optional[np.ndarray] = None

    @property
    def num_nodes(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    @property
    def dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def segment_ids(self) -> np.ndarray:
        if self.segments is None:
            return np.zeros(self.num_nodes, dtype=np.int64)
        return self.segments

    @property
    def num_segments(self) -> int:
        return int(self.segment_ids.max()) + 1 if self.num_nodes else 0

    @property
    def edges(self) -> Iterator[Edge]:
        for i in range(self.num_nodes):
            for col in range(self.k):
                yield Edge(int(self.neighbors[i, col]), i,
                           int(self.relations[i, col]), float(self.weights[i, col]))

    def relation_columns(self, relation: int) -> np.ndarray:
        """
        Neighbor-list columns holding `relation`; the layout must be the same
        on every row.
        """
        cols = np.flatnonzero(self.relations[0] == relation) if self.num_nodes else np.array([], dtype=np.int64)
        if self.num_nodes and np.any((self.relations == relation) != (self.relations[0] == relation)):
            raise StructuralError(f'relation {relation} does not occupy the same columns on every node')
        return cols

    def with_weights(self, weights: np.ndarray) -> 'PatchGraph':
        weights = np.asarray(weights, dtype=np.float64)
        assert weights.shape == self.neighbors.shape, (weights.shape, self.neighbors.shape)
        if np.any(weights < 0) or np.any(weights > 1):
            raise StructuralError('edge weights must lie in [0, 1]')
        return self._replace(weights=weights)

    @classmethod
    def batch(cls, graphs: Sequence['PatchGraph']) -> 'PatchGraph':
        """
        Disjoint union: node indices of graph b are offset by the node count
        of graphs 0..b-1, and every node carries segment id b.
        """
        if not graphs:
            raise StructuralError('cannot batch an empty list of graphs')
        ks = {g.k for g in graphs}
        rels = {g.num_relations for g in graphs}
        if len(ks) != 1 or len(rels) != 1:
            raise StructuralError('batched graphs must share K and the relation set')

        offsets = np.cumsum([0] + [g.num_nodes for g in graphs])
        mask_rows = frozenset(int(r + off) for g, off in zip(graphs, offsets) for r in g.mask_rows)
        return cls(
            node_features=concat([g.node_features for g in graphs], axis=0),
            neighbors=np.concatenate([g.neighbors + off for g, off in zip(graphs, offsets)]),
            relations=np.concatenate([g.relations for g in graphs]),
            weights=np.concatenate([g.weights for g in graphs]),
            mask_rows=mask_rows,
            num_relations=graphs[0].num_relations,
            segments=np.concatenate(
                [np.full(g.num_nodes, b, dtype=np.int64) for b, g in enumerate(graphs)]))


def knn_neighbors(values: np.ndarray, K: int) -> np.ndarray:
    """
    K nearest rows of each row by squared Euclidean distance, self excluded,
    ties to the lower index.
    """
    n = values.shape[0]
    if K < 1 or K >= n:
        raise ConfigError(f'K must satisfy 1 <= K < N, got K={K}, N={n}')
    diff = values[:, None, :] - values[None, :, :]
    dist = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=1, kind='stable')[:, :K]


def build_knn_graph(features: Tensor, K: int, num_relations: int = 1,
                    segments: Optional[np.ndarray] = None) -> PatchGraph:
    """
    Builds the KNN patch graph on the current feature values. With
    `segments`, neighbors are searched within each segment only. The neighbor
    of distance rank k gets relation ⌊k·num_relations/K⌋ and every edge weight starts at
    1/K.
    """
    if num_relations < 1 or num_relations > K:
        raise ConfigError(f'relation count must lie in [1, K={K}], got {num_relations}')

    values = features.values
    if segments is None:
        neighbors = knn_neighbors(values, K)
    else:
        segments = np.asarray(segments, dtype=np.int64)
        neighbors = np.empty((values.shape[0], K), dtype=np.int64)
        for s in np.unique(segments):
            rows = np.flatnonzero(segments == s)
            neighbors[rows] = rows[knn_neighbors(values[rows], K)]

    n = values.shape[0]
    ranks = (np.arange(K) * num_relations) // K
    log.debug('built knn graph: N={} K={} relations={}'.format(n, K, num_relations))
    return PatchGraph(
        node_features=features,
        neighbors=neighbors,
        relations=np.tile(ranks, (n, 1)),
        weights=np.full((n, K), 1.0 / K),
        num_relations=num_relations,
        segments=segments)


def apply_mask(g: PatchGraph, p: float, rng_seed) -> PatchGraph:
    """
    Zeroes ⌊p·N⌋ node feature rows chosen uniformly without replacement
    (per image for a batched graph). Edges are untouched; p=0 returns the
    graph as is.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f'mask rate must lie in [0, 1], got {p}')
    if p == 0.0:
        return g

    rng = make_rng(*rng_seed) if isinstance(rng_seed, tuple) else make_rng(rng_seed)
    segments = g.segment_ids
    masked: List[int] = []
    for s in range(g.num_segments):
        rows = np.flatnonzero(segments == s)
        count = floor_count(p, rows.size)
        masked.extend(int(r) for r in rng.choice(rows, size=count, replace=False))

    keep = np.ones((g.num_nodes, 1))
    keep[masked] = 0.0
    log.debug('masked {} of {} nodes (p={})'.format(len(masked), g.num_nodes, p))
    return g._replace(node_features=mul(g.node_features, Tensor(keep)),
                      mask_rows=g.mask_rows | frozenset(masked))


def dump_graph(g: PatchGraph, p: float, stream):
    """
    Line-oriented text dump: header `N K d p`, one `id masked f1..fd` line
    per node, then one `src dst rel weight` line per edge.
    """
    feats = g.node_features.values
    stream.write(f'{g.num_nodes} {g.k} {g.dim} {p!r}\n')
    for i in range(g.num_nodes):
        masked = 1 if i in g.mask_rows else 0
        stream.write(' '.join([str(i), str(masked)] + [repr(float(v)) for v in feats[i]]) + '\n')
    for e in g.edges:
        stream.write(f'{e.src} {e.dst} {e.relation} {e.weight!r}\n')
