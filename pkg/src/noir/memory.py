"""Retrieval memory for few-shot object-skill suggestion.

Scene features are embedded by a trained metric-learning net and stored
with their object/skill labels; at query time the nearest stored
embedding supplies the suggestion. A synthetic featurizer stands in for
a pretrained visual backbone; real feature dumps can be ingested via the
FMX1 file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .embed import EmbedConfig, EmbeddingNet, train_embedding

FMX1_MAGIC = b"FMX1"

VARIATIONS = ("none", "position", "pose", "instance", "context")


class MemoryError_(ValueError):
    pass


@dataclass(frozen=True)
class MemoryRecord:
    embedding: np.ndarray
    object_id: str
    skill_id: str
    provenance: str = ""


@dataclass
class MemoryStore:
    net: EmbeddingNet
    records: list[MemoryRecord] = field(default_factory=list)
    distance_threshold: float | None = None

    @classmethod
    def build(
        cls,
        net: EmbeddingNet,
        features: np.ndarray,
        labels: list[tuple[str, str]],
        threshold_percentile: float = 95.0,
    ) -> "MemoryStore":
        """Embed training features and compute the confidence gate.

        The gate is the given percentile of leave-one-out nearest-neighbor
        distances among the stored embeddings.
        """
        emb = net.forward(np.asarray(features, dtype=np.float64))
        records = [
            MemoryRecord(embedding=emb[i], object_id=obj, skill_id=skill, provenance=f"train:{i}")
            for i, (obj, skill) in enumerate(labels)
        ]
        d2 = _pairwise_sq(emb, emb)
        np.fill_diagonal(d2, np.inf)
        nn = np.sqrt(d2.min(axis=1))
        threshold = float(np.percentile(nn, threshold_percentile)) if len(nn) > 1 else None
        return cls(net=net, records=records, distance_threshold=threshold)


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (
        np.sum(a**2, axis=1)[:, None]
        + np.sum(b**2, axis=1)[None, :]
        - 2.0 * a @ b.T
    ).clip(min=0.0)


def retrieve(store: MemoryStore, query: np.ndarray) -> tuple[str, str, float]:
    """Nearest stored record to the embedded query; ties break by insertion order."""
    if not store.records:
        raise MemoryError_("memory store is empty")
    q = store.net.forward(np.asarray(query, dtype=np.float64))
    dists = np.sqrt(_pairwise_sq(q[None, :], np.array([r.embedding for r in store.records]))[0])
    i = int(np.argmin(dists))
    rec = store.records[i]
    return rec.object_id, rec.skill_id, float(dists[i])


def retrieve_gated(store: MemoryStore, query: np.ndarray) -> tuple[str, str, float] | None:
    """Like retrieve, but None when the distance exceeds the confidence gate."""
    obj, skill, dist = retrieve(store, query)
    if store.distance_threshold is not None and dist > store.distance_threshold:
        return None
    return obj, skill, dist


def evaluate_retrieval(
    store: MemoryStore, test_features: np.ndarray, test_labels: list[tuple[str, str]]
) -> float:
    """Fraction of queries where both object and skill are retrieved correctly."""
    hits = 0
    for feat, (obj, skill) in zip(test_features, test_labels):
        got_obj, got_skill, _ = retrieve(store, feat)
        hits += got_obj == obj and got_skill == skill
    return hits / len(test_labels)


def nearest_centroid_accuracy(
    train_features: np.ndarray,
    train_labels: list[tuple[str, str]],
    test_features: np.ndarray,
    test_labels: list[tuple[str, str]],
) -> float:
    """Baseline: nearest per-label centroid on raw (unembedded) features."""
    keys = list(dict.fromkeys(train_labels))
    centroids = np.array(
        [
            np.mean([f for f, l in zip(train_features, train_labels) if l == k], axis=0)
            for k in keys
        ]
    )
    d2 = _pairwise_sq(np.asarray(test_features, dtype=np.float64), centroids)
    pred = d2.argmin(axis=1)
    hits = sum(keys[p] == l for p, l in zip(pred, test_labels))
    return hits / len(test_labels)


class SceneFeaturizer:
    """Synthetic scene descriptor -> feature vector mapping.

    Each object-skill stage carries two well-separated signature modes
    (think: the scene seen from two viewpoints), plus nuisance components
    driven by the variation regime and isotropic noise. The two-mode
    construction makes raw per-label centroids uninformative while
    nearest-neighbor retrieval stays easy.
    """

    def __init__(
        self,
        stages: list[tuple[str, str]],
        dim: int = 2048,
        separation: float = 5.0,
        noise_sigma: float = 1.0,
        nuisance_scale: float = 2.0,
        seed: int = 0,
    ):
        self.stages = list(stages)
        self.dim = dim
        self.separation = separation
        self.noise_sigma = noise_sigma
        self.nuisance_scale = nuisance_scale
        rng = np.random.default_rng(seed)
        # magnitude scales with sqrt(dim) so "separation" stays in units of
        # the within-cluster noise norm regardless of dimension
        mag = separation * noise_sigma * np.sqrt(dim)
        self.signatures = {}
        for stage in self.stages:
            u = rng.standard_normal(dim)
            u /= np.linalg.norm(u)
            # antipodal modes: the per-label mean sits near the origin
            self.signatures[stage] = (mag * u, -mag * u)
        self.position_proj = rng.standard_normal((dim, 3)) / np.sqrt(dim)
        self.pose_proj = rng.standard_normal((dim, 3)) / np.sqrt(dim)
        self.instance_proj = rng.standard_normal((dim, 8)) / np.sqrt(dim)
        self.context_proj = rng.standard_normal((dim, 20)) / np.sqrt(dim)

    def sample(
        self, stage: tuple[str, str], variation: str, rng: np.random.Generator
    ) -> np.ndarray:
        if variation not in VARIATIONS:
            raise MemoryError_(f"unknown variation {variation!r}")
        modes = self.signatures[stage]
        feat = modes[int(rng.integers(2))].copy()
        s = self.nuisance_scale * np.sqrt(self.dim)
        if variation in ("position", "pose"):
            feat += s * (self.position_proj @ rng.uniform(-1, 1, 3))
        if variation == "pose":
            feat += s * (self.pose_proj @ rng.uniform(-1, 1, 3))
        if variation == "instance":
            feat += s * (self.instance_proj @ rng.standard_normal(8))
        if variation == "context":
            one_hot = np.zeros(20)
            one_hot[rng.integers(20)] = 1.0
            feat += 2 * s * (self.context_proj @ one_hot)
        feat += self.noise_sigma * rng.standard_normal(self.dim)
        return feat


def make_retrieval_corpus(
    stages: list[tuple[str, str]],
    samples_per_stage: int = 15,
    test_per_stage: int = 10,
    variation: str = "pose",
    dim: int = 2048,
    separation: float = 5.0,
    seed: int = 0,
    featurizer: SceneFeaturizer | None = None,
):
    """Train/test feature sets for one variation regime.

    variation="none" returns the training set itself as the test set.
    """
    fz = featurizer or SceneFeaturizer(stages, dim=dim, separation=separation, seed=seed)
    rng = np.random.default_rng(seed + 1)
    train_f, train_l = [], []
    for stage in stages:
        for _ in range(samples_per_stage):
            train_f.append(fz.sample(stage, variation if variation != "none" else "position", rng))
            train_l.append(stage)
    if variation == "none":
        return np.array(train_f), train_l, np.array(train_f), list(train_l), fz
    test_f, test_l = [], []
    for stage in stages:
        for _ in range(test_per_stage):
            test_f.append(fz.sample(stage, variation, rng))
            test_l.append(stage)
    return np.array(train_f), train_l, np.array(test_f), test_l, fz


def train_memory(
    features: np.ndarray,
    labels: list[tuple[str, str]],
    config: EmbedConfig | None = None,
    seed: int = 0,
) -> MemoryStore:
    """Train the embedding net on the labeled features and build the store."""
    flat = [f"{o}|{s}" for o, s in labels]
    net = train_embedding(np.asarray(features), flat, config=config, seed=seed)
    return MemoryStore.build(net, features, labels)


def write_feature_matrix(path, features: np.ndarray, labels: list[tuple[str, str]]):
    """FMX1: magic, u32 N, u32 D, N length-prefixed 'object|skill' labels, N x D f32."""
    features = np.asarray(features)
    with open(path, "wb") as fh:
        fh.write(FMX1_MAGIC)
        fh.write(struct.pack("<II", features.shape[0], features.shape[1]))
        for obj, skill in labels:
            raw = f"{obj}|{skill}".encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(features.astype("<f4").tobytes(order="C"))


def read_feature_matrix(path):
    with open(path, "rb") as fh:
        if fh.read(4) != FMX1_MAGIC:
            raise MemoryError_("not an FMX1 file")
        n, d = struct.unpack("<II", fh.read(8))
        labels = []
        for _ in range(n):
            (ln,) = struct.unpack("<I", fh.read(4))
            obj, _, skill = fh.read(ln).decode("utf-8").partition("|")
            labels.append((obj, skill))
        feats = np.frombuffer(fh.read(n * d * 4), dtype="<f4").reshape(n, d)
    return feats.astype(np.float64), labels
