"""Synthetic long-tailed multi-label data with a known semantic model.

A hidden model assigns each verb and object a random direction; a class
prototype is the normalized sum of its verb and object vectors, so
classes sharing a slot are correlated on purpose.  Samples draw a
primary class from a Zipf law over class ranks (rank = class index + 1),
optionally add co-labels that share the primary's object, and emit the
mean of the positive prototypes plus Gaussian noise.

Noise convention: a noise parameter `scale` always means a Gaussian
vector with per-component sigma scale/sqrt(d), i.e. expected norm
`scale` relative to the unit prototypes, independent of dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import EmbeddingMatrix
from .seeding import substream
from .taxonomy import ClassStats, ClassTaxonomy, compute_stats

__all__ = [
    "SemanticModel",
    "LabeledSample",
    "SampleSet",
    "SyntheticDataset",
    "sample_semantic_model",
    "generate_dataset",
    "synthesize_language_embeddings",
    "save_samples",
    "load_samples",
]


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    labels: np.ndarray

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 1)


@dataclass(frozen=True)
class SampleSet:
    """Column store of samples: features (N, d) and sign labels (N, C)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("features and labels must be 2-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} label rows"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(self.features[i], self.labels[i])

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class SemanticModel:
    """Ground-truth directions behind a synthetic taxonomy."""

    taxonomy: ClassTaxonomy
    verb_vectors: np.ndarray
    object_vectors: np.ndarray
    noise_scale: float
    prototypes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.verb_vectors.shape[0] != len(self.taxonomy.verbs):
            raise ValueError("one verb vector per taxonomy verb is required")
        if self.object_vectors.shape[0] != len(self.taxonomy.objects):
            raise ValueError("one object vector per taxonomy object is required")
        if self.verb_vectors.shape[1] != self.object_vectors.shape[1]:
            raise ValueError("verb and object vectors must share a dimension")
        if not np.isfinite(self.noise_scale) or self.noise_scale < 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")
        sums = np.stack(
            [
                self.verb_vectors[v] + self.object_vectors[o]
                for v, o in self.taxonomy.classes
            ]
        )
        norms = np.linalg.norm(sums, axis=1)
        if (norms == 0).any():
            raise ValueError("a verb and object vector cancel exactly; reseed the model")
        object.__setattr__(self, "prototypes", sums / norms[:, None])

    @property
    def dim(self) -> int:
        return self.verb_vectors.shape[1]

    def class_prototype(self, class_index: int) -> np.ndarray:
        return self.prototypes[class_index]


@dataclass(frozen=True)
class SyntheticDataset:
    train: SampleSet
    test: SampleSet
    taxonomy: ClassTaxonomy
    stats: ClassStats
    zipf_exponent: float
    seed: int

    @property
    def dim(self) -> int:
        return self.train.dim


def sample_semantic_model(
    taxonomy: ClassTaxonomy, dim: int, noise_scale: float, seed: int
) -> SemanticModel:
    """Draw isotropic verb/object directions (per-component sigma 1/sqrt(d))."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    rng = substream(seed, "semantic-model")
    scale = 1.0 / np.sqrt(dim)
    return SemanticModel(
        taxonomy=taxonomy,
        verb_vectors=rng.normal(0.0, scale, size=(len(taxonomy.verbs), dim)),
        object_vectors=rng.normal(0.0, scale, size=(len(taxonomy.objects), dim)),
        noise_scale=float(noise_scale),
    )


def _zipf_pmf(num_classes: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    weights = ranks**-exponent
    return weights / weights.sum()


def _draw_split(
    model: SemanticModel,
    n: int,
    pmf: np.ndarray,
    max_labels: int,
    rng: np.random.Generator,
) -> SampleSet:
    tax = model.taxonomy
    num_classes = len(tax)
    dim = model.dim
    sigma = model.noise_scale / np.sqrt(dim)
    same_object = [
        [j for j in tax.classes_with_object(o) if j != i]
        for i, (_, o) in enumerate(tax.classes)
    ]
    primaries = rng.choice(num_classes, size=n, p=pmf)
    features = np.empty((n, dim))
    labels = np.full((n, num_classes), -1, dtype=np.int8)
    for row, primary in enumerate(primaries):
        positives = [int(primary)]
        pool = same_object[primary]
        budget = min(max_labels - 1, len(pool))
        if budget > 0:
            extra = int(rng.integers(0, budget + 1))
            if extra > 0:
                positives.extend(
                    int(c) for c in rng.choice(pool, size=extra, replace=False)
                )
        labels[row, positives] = 1
        mean_proto = model.prototypes[positives].mean(axis=0)
        features[row] = mean_proto + sigma * rng.standard_normal(dim)
    return SampleSet(features=features, labels=labels)


def generate_dataset(
    model: SemanticModel,
    n_train: int,
    n_test: int,
    zipf_exponent: float,
    max_labels_per_sample: int = 1,
    seed: int = 0,
) -> SyntheticDataset:
    """Draw disjoint train/test splits from the model's sampling process."""
    if n_train < 1 or n_test < 1:
        raise ValueError("need n_train >= 1 and n_test >= 1")
    if max_labels_per_sample < 1:
        raise ValueError("max_labels_per_sample must be >= 1")
    if not np.isfinite(zipf_exponent) or zipf_exponent < 0:
        raise ValueError(f"zipf_exponent must be >= 0, got {zipf_exponent}")
    pmf = _zipf_pmf(len(model.taxonomy), zipf_exponent)
    train = _draw_split(
        model, n_train, pmf, max_labels_per_sample, substream(seed, "train-samples")
    )
    test = _draw_split(
        model, n_test, pmf, max_labels_per_sample, substream(seed, "test-samples")
    )
    return SyntheticDataset(
        train=train,
        test=test,
        taxonomy=model.taxonomy,
        stats=compute_stats(train.labels),
        zipf_exponent=float(zipf_exponent),
        seed=int(seed),
    )


def synthesize_language_embeddings(
    model: SemanticModel, embedding_noise: float, seed: int
) -> EmbeddingMatrix:
    """Noisy unit-norm stand-ins for text-encoder class embeddings."""
    if not np.isfinite(embedding_noise) or embedding_noise < 0:
        raise ValueError(f"embedding_noise must be >= 0, got {embedding_noise}")
    if embedding_noise == 0.0:
        # Prototypes are already unit rows; skip the renormalization so
        # the zero-noise embeddings equal them bit for bit.
        return EmbeddingMatrix(model.prototypes.copy())
    rng = substream(seed, "language-embeddings")
    sigma = embedding_noise / np.sqrt(model.dim)
    noisy = model.prototypes + sigma * rng.standard_normal(model.prototypes.shape)
    return EmbeddingMatrix.from_raw(noisy)


def save_samples(samples: SampleSet, path, taxonomy_ref: str) -> None:
    """Dataset JSON: {taxonomy_ref, d, samples: [{features, positives}]}."""
    payload = {
        "taxonomy_ref": taxonomy_ref,
        "d": samples.dim,
        "samples": [
            {
                "features": [float(v) for v in samples.features[i]],
                "positives": [int(c) for c in np.flatnonzero(samples.labels[i] == 1)],
            }
            for i in range(len(samples))
        ],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_samples(path, num_classes: int) -> tuple[SampleSet, str]:
    """Read a dataset JSON; returns the samples and the taxonomy_ref string."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("taxonomy_ref", "d", "samples"):
        if key not in payload:
            raise ValueError(f"dataset file {path} is missing field {key!r}")
    dim = int(payload["d"])
    records = payload["samples"]
    features = np.empty((len(records), dim))
    labels = np.full((len(records), num_classes), -1, dtype=np.int8)
    for i, rec in enumerate(records):
        vec = np.asarray(rec["features"], dtype=np.float64)
        if vec.shape != (dim,):
            raise ValueError(f"sample {i}: feature length {vec.shape[0]} != d={dim}")
        features[i] = vec
        for c in rec["positives"]:
            if not 0 <= int(c) < num_classes:
                raise ValueError(f"sample {i}: positive class {c} out of range")
            labels[i, int(c)] = 1
    return SampleSet(features=features, labels=labels), str(payload["taxonomy_ref"])
