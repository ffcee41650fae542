"""Class catalogue construction, prompt rendering, and per-class counts."""

import numpy as np
import pytest

from hoilab.taxonomy import (
    ClassStats,
    build_taxonomy,
    compute_stats,
    full_product_taxonomy,
    load_surface_forms,
    load_taxonomy,
    make_prompt,
    save_surface_forms,
    save_taxonomy,
)

VERBS = ["ride", "hold", "carry"]
OBJECTS = ["bicycle", "apple"]


def small_taxonomy():
    return build_taxonomy(VERBS, OBJECTS, [(0, 0), (1, 1), (2, 0)])


def test_full_product_layout():
    tax = full_product_taxonomy([f"v{i}" for i in range(10)], [f"o{j}" for j in range(8)])
    assert tax.num_classes == 80
    # verb-major: class i pairs verb i // 8 with object i % 8
    for i, (v, o) in enumerate(tax.classes):
        assert (v, o) == (i // 8, i % 8)
    assert tax.class_names[0] == "v0 o0"
    assert tax.class_names[79] == "v9 o7"


def test_single_class_taxonomy():
    tax = build_taxonomy(["ride"], ["bicycle"], [(0, 0)])
    assert len(tax) == 1
    assert tax.verb_of(0) == "ride"
    assert tax.object_of(0) == "bicycle"


def test_duplicate_pair_rejected_with_position():
    with pytest.raises(ValueError, match="class 2: duplicate"):
        build_taxonomy(VERBS, OBJECTS, [(0, 0), (0, 1), (0, 0)])


def test_out_of_range_pair_rejected():
    with pytest.raises(ValueError, match="verb index 3"):
        build_taxonomy(VERBS, OBJECTS, [(3, 0)])
    with pytest.raises(ValueError, match="object index 5"):
        build_taxonomy(VERBS, OBJECTS, [(0, 5)])


def test_object_lookup():
    tax = small_taxonomy()
    assert tax.classes_with_object(0) == (0, 2)
    assert tax.classes_with_object(1) == (1,)
    assert tax.object_index("apple") == 1
    assert tax.object_index(0) == 0
    with pytest.raises(KeyError):
        tax.object_index("chair")
    with pytest.raises(KeyError):
        tax.object_index(9)


def test_prompt_without_surface_forms():
    tax = small_taxonomy()
    assert make_prompt(tax, 0) == "a person ride a bicycle"
    # no article smoothing either: "a apple" comes out verbatim
    assert make_prompt(tax, 1) == "a person hold a apple"


def test_prompt_with_surface_forms():
    tax = small_taxonomy()
    forms = {"ride": "riding", "hold": "holding"}
    assert make_prompt(tax, 0, surface_forms=forms) == "a person riding a bicycle"
    assert make_prompt(tax, 1, surface_forms=forms) == "a person holding a apple"
    # verbs missing from the table pass through unchanged
    assert make_prompt(tax, 2, surface_forms=forms) == "a person carry a bicycle"


def test_prompt_custom_template_and_validation():
    tax = small_taxonomy()
    out = make_prompt(tax, 0, template="photo of {verb} with {object}")
    assert out == "photo of ride with bicycle"
    with pytest.raises(ValueError, match=r"\{object\} slot"):
        make_prompt(tax, 0, template="just {verb}")
    with pytest.raises(ValueError, match=r"\{verb\} slot"):
        make_prompt(tax, 0, template="just {object}")
    with pytest.raises(ValueError, match="class index"):
        make_prompt(tax, 3)


def test_compute_stats_counts():
    labels = np.array(
        [
            [1, -1, -1],
            [1, 1, -1],
            [1, -1, -1],
        ]
    )
    stats = compute_stats(labels)
    np.testing.assert_array_equal(stats.train_count, [3, 1, 0])
    assert stats.n_samples == 3
    np.testing.assert_array_equal(stats.positive_indices[0], [0, 1, 2])
    np.testing.assert_array_equal(stats.positive_indices[1], [1])
    assert stats.positive_indices[2].size == 0


def test_few_shot_membership():
    # 49 singleton classes among 60; the rest see 2 positives, so the
    # k=1 subset is exactly the singletons
    c = 60
    rows = []
    for cls in range(49):
        row = -np.ones(c, dtype=int)
        row[cls] = 1
        rows.append(row)
    for cls in range(49, 60):
        for _ in range(2):
            row = -np.ones(c, dtype=int)
            row[cls] = 1
            rows.append(row)
    stats = compute_stats(np.array(rows))
    assert stats.few_shot_at(0) == frozenset()
    assert len(stats.few_shot_at(1)) == 49
    assert stats.few_shot_at(1) == frozenset(range(49))
    assert stats.few_shot_at(1) <= stats.few_shot_at(5)
    with pytest.raises(ValueError):
        stats.few_shot_at(-1)


def test_zero_count_classes_are_few_shot():
    stats = compute_stats(np.array([[1, -1]]))
    assert stats.few_shot_at(0) == frozenset({1})
    assert stats.few_shot_at(1) == frozenset({0, 1})


def test_empty_dataset_stats():
    stats = compute_stats([], num_classes=7)
    assert stats.n_samples == 0
    np.testing.assert_array_equal(stats.train_count, np.zeros(7, dtype=np.int64))
    assert stats.few_shot_at(3) == frozenset(range(7))
    with pytest.raises(ValueError, match="num_classes"):
        compute_stats([])


def test_stats_counts_add_over_concatenation():
    rng = np.random.default_rng(2)
    a = rng.choice([-1, 1], (20, 6))
    b = rng.choice([-1, 1], (13, 6))
    both = compute_stats(np.concatenate([a, b]))
    np.testing.assert_array_equal(
        both.train_count,
        compute_stats(a).train_count + compute_stats(b).train_count,
    )


def test_stats_input_validation():
    with pytest.raises(ValueError, match=r"label\[1\]\[2\]"):
        compute_stats(np.array([[1, -1, 1], [1, -1, 0]]))
    with pytest.raises(ValueError, match="2-D"):
        compute_stats(np.array([1, -1]))
    with pytest.raises(ValueError, match="num_classes=4"):
        compute_stats(np.array([[1, -1]]), num_classes=4)


def test_taxonomy_roundtrip(tmp_path):
    tax = small_taxonomy()
    path = tmp_path / "classes.tsv"
    save_taxonomy(tax, path)
    loaded = load_taxonomy(path)
    assert loaded.classes == tax.classes
    assert loaded.class_names == tax.class_names
    assert path.read_text() == "ride\tbicycle\nhold\tapple\ncarry\tbicycle\n"


def test_taxonomy_load_rejects_malformed_line(tmp_path):
    path = tmp_path / "classes.tsv"
    path.write_text("ride\tbicycle\nno-tab-here\n")
    with pytest.raises(ValueError, match=":2:"):
        load_taxonomy(path)


def test_surface_form_roundtrip(tmp_path):
    forms = {"ride": "riding", "hold": "holding"}
    path = tmp_path / "forms.tsv"
    save_surface_forms(forms, path)
    assert load_surface_forms(path) == forms
    path.write_text("ride riding\n")  # space, not tab
    with pytest.raises(ValueError, match=":1:"):
        load_surface_forms(path)


def test_stats_direct_construction_matches_compute():
    labels = np.array([[1, -1], [-1, -1], [1, 1]])
    stats = compute_stats(labels)
    clone = ClassStats(
        train_count=stats.train_count.copy(),
        n_samples=stats.n_samples,
        positive_indices=stats.positive_indices,
    )
    assert clone.few_shot_at(2) == stats.few_shot_at(2)
    assert clone.num_classes == 2
