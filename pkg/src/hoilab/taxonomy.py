"""Verb-object class taxonomy, prompts, and per-class label statistics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ClassTaxonomy",
    "ClassStats",
    "build_taxonomy",
    "full_product_taxonomy",
    "make_prompt",
    "compute_stats",
    "load_taxonomy",
    "save_taxonomy",
    "load_surface_forms",
    "save_surface_forms",
    "DEFAULT_PROMPT_TEMPLATE",
]

DEFAULT_PROMPT_TEMPLATE = "a person {verb} a {object}"


@dataclass(frozen=True)
class ClassTaxonomy:
    """Immutable catalogue of interaction classes as (verb, object) pairs."""

    verbs: tuple[str, ...]
    objects: tuple[str, ...]
    classes: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        seen: dict[tuple[int, int], int] = {}
        for pos, pair in enumerate(self.classes):
            verb_idx, obj_idx = pair
            if not 0 <= verb_idx < len(self.verbs):
                raise ValueError(f"class {pos}: verb index {verb_idx} out of range")
            if not 0 <= obj_idx < len(self.objects):
                raise ValueError(f"class {pos}: object index {obj_idx} out of range")
            if pair in seen:
                raise ValueError(
                    f"class {pos}: duplicate pair {pair} (first seen at {seen[pair]})"
                )
            seen[pair] = pos

    def __len__(self) -> int:
        return len(self.classes)

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(
            f"{self.verbs[v]} {self.objects[o]}" for v, o in self.classes
        )

    def verb_of(self, class_index: int) -> str:
        return self.verbs[self.classes[class_index][0]]

    def object_of(self, class_index: int) -> str:
        return self.objects[self.classes[class_index][1]]

    def classes_with_object(self, object_index: int) -> tuple[int, ...]:
        """Indices of all classes whose object slot is `object_index`."""
        if not 0 <= object_index < len(self.objects):
            raise ValueError(f"object index {object_index} out of range")
        return tuple(
            i for i, (_, o) in enumerate(self.classes) if o == object_index
        )

    def object_index(self, name_or_index) -> int:
        """Resolve an object given by name or integer index."""
        if isinstance(name_or_index, str):
            try:
                return self.objects.index(name_or_index)
            except ValueError:
                raise KeyError(f"unknown object {name_or_index!r}") from None
        idx = int(name_or_index)
        if not 0 <= idx < len(self.objects):
            raise KeyError(f"object index {idx} out of range")
        return idx


def build_taxonomy(
    verbs: Sequence[str],
    objects: Sequence[str],
    pairs: Iterable[tuple[int, int]],
) -> ClassTaxonomy:
    """Assemble a taxonomy, rejecting duplicate or out-of-range pairs."""
    return ClassTaxonomy(
        verbs=tuple(str(v) for v in verbs),
        objects=tuple(str(o) for o in objects),
        classes=tuple((int(v), int(o)) for v, o in pairs),
    )


def full_product_taxonomy(verbs: Sequence[str], objects: Sequence[str]) -> ClassTaxonomy:
    """Taxonomy over every verb-object combination, verb-major order."""
    pairs = [(v, o) for v in range(len(verbs)) for o in range(len(objects))]
    return build_taxonomy(verbs, objects, pairs)


def make_prompt(
    taxonomy: ClassTaxonomy,
    class_index: int,
    template: str = DEFAULT_PROMPT_TEMPLATE,
    surface_forms: Mapping[str, str] | None = None,
) -> str:
    """Render the text prompt for one class.

    `template` must contain both a {verb} and an {object} slot.  When a
    surface-form table is given, it rewrites the verb (e.g. "ride" to
    "riding") before substitution; verbs absent from the table pass
    through unchanged.
    """
    if not 0 <= class_index < len(taxonomy):
        raise ValueError(f"class index {class_index} out of range")
    for slot in ("{verb}", "{object}"):
        if slot not in template:
            raise ValueError(f"prompt template is missing the {slot} slot")
    verb = taxonomy.verb_of(class_index)
    if surface_forms is not None:
        verb = surface_forms.get(verb, verb)
    return template.format(verb=verb, object=taxonomy.object_of(class_index))


@dataclass(frozen=True)
class ClassStats:
    """Per-class positive counts over a labelled sample set."""

    train_count: np.ndarray
    n_samples: int
    positive_indices: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def num_classes(self) -> int:
        return int(self.train_count.shape[0])

    def few_shot_at(self, k: int) -> frozenset[int]:
        """Classes with at most `k` positive samples."""
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        return frozenset(int(c) for c in np.flatnonzero(self.train_count <= k))


def compute_stats(labels, num_classes: int | None = None) -> ClassStats:
    """Count positives per class over sign-label rows.

    `labels` is an (N, C) array (or list of length-C rows) with entries
    in {+1, -1}.  `num_classes` is only needed when N == 0 and the width
    cannot be inferred.
    """
    arr = np.asarray(labels)
    if arr.size == 0:
        if num_classes is None:
            if arr.ndim == 2:
                num_classes = arr.shape[1]
            else:
                raise ValueError("num_classes is required for an empty label set")
        counts = np.zeros(num_classes, dtype=np.int64)
        empty = tuple(np.empty(0, dtype=np.int64) for _ in range(num_classes))
        return ClassStats(train_count=counts, n_samples=0, positive_indices=empty)
    if arr.ndim != 2:
        raise ValueError(f"labels must be 2-D (N, C), got shape {arr.shape}")
    if num_classes is not None and arr.shape[1] != num_classes:
        raise ValueError(
            f"label width {arr.shape[1]} does not match num_classes={num_classes}"
        )
    bad = (arr != 1) & (arr != -1)
    if bad.any():
        n, c = np.argwhere(bad)[0]
        raise ValueError(f"label[{n}][{c}] = {arr[n, c]!r} is not +1 or -1")
    positive = arr == 1
    counts = positive.sum(axis=0).astype(np.int64)
    per_class = tuple(np.flatnonzero(positive[:, c]) for c in range(arr.shape[1]))
    return ClassStats(
        train_count=counts, n_samples=arr.shape[0], positive_indices=per_class
    )


def save_taxonomy(taxonomy: ClassTaxonomy, path) -> None:
    """Write one `<verb>TAB<object>` line per class."""
    lines = [
        f"{taxonomy.verbs[v]}\t{taxonomy.objects[o]}\n" for v, o in taxonomy.classes
    ]
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_taxonomy(path) -> ClassTaxonomy:
    """Read a tab-separated class list; names dedup in first-seen order."""
    verbs: list[str] = []
    objects: list[str] = []
    pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"{path}:{lineno}: expected '<verb>\\t<object>', got {raw!r}")
        verb, obj = parts
        if verb not in verbs:
            verbs.append(verb)
        if obj not in objects:
            objects.append(obj)
        pairs.append((verbs.index(verb), objects.index(obj)))
    return build_taxonomy(verbs, objects, pairs)


def save_surface_forms(forms: Mapping[str, str], path) -> None:
    lines = [f"{verb}\t{surface}\n" for verb, surface in forms.items()]
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_surface_forms(path) -> dict[str, str]:
    """Read a `<verb>TAB<surface>` table into a dict."""
    forms: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValueError(f"{path}:{lineno}: expected '<verb>\\t<surface>', got {raw!r}")
        forms[parts[0]] = parts[1]
    return forms
