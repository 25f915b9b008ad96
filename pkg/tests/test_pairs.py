import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from augforge import pairs as pairs_mod
from augforge.pairs import (
    PreferencePair,
    augment_resize256,
    build_pairs,
    curate,
    emit_dataset,
    rewrite_resize,
)
from augforge.prompts import format_accuracy
from augforge.repository import Repository
from tests.conftest import make_brute_record, numbered_code


def records_with_accuracies(accuracies):
    repo = Repository()
    for i, acc in enumerate(accuracies):
        repo.insert(make_brute_record(numbered_code(i), accuracy=acc))
    return repo.records()


class TestPairInvariant:
    def test_strict_inequality_enforced(self):
        with pytest.raises(ValueError):
            PreferencePair(
                base_id=1, addon_id=2, base_accuracy=0.5, addon_accuracy=0.5,
                base_code="a", addon_code="b",
            )

    def test_unknown_provenance(self):
        with pytest.raises(ValueError):
            PreferencePair(
                base_id=1, addon_id=2, base_accuracy=0.4, addon_accuracy=0.5,
                base_code="a", addon_code="b", provenance="mystery",
            )


class TestBuildPairs:
    def test_distinct_accuracies_yield_n_minus_one(self):
        rng = random.Random(0)
        accs = rng.sample([i / 1000 for i in range(1, 999)], 200)
        records = records_with_accuracies(accs)
        built = build_pairs(records, seed=1)
        assert len(built) == len(records) - 1

    def test_every_pair_strictly_better_vs_exhaustive_oracle(self):
        rng = random.Random(1)
        accs = rng.sample([i / 1000 for i in range(1, 999)], 60)
        records = records_with_accuracies(accs)
        by_id = {r.record_id: r for r in records}
        built = build_pairs(records, seed=5)
        max_acc = max(accs)
        base_ids = {p.base_id for p in built}
        for record in records:
            # Oracle: a record is a baseline iff something strictly beats it.
            assert (record.record_id in base_ids) == (record.accuracy < max_acc)
        for p in built:
            assert p.addon_accuracy > p.base_accuracy
            assert by_id[p.addon_id].accuracy == p.addon_accuracy

    def test_tied_maximum_excluded(self):
        records = records_with_accuracies([0.3, 0.7, 0.7, 0.5])
        built = build_pairs(records)
        assert len(built) == 2
        assert {p.base_accuracy for p in built} == {0.3, 0.5}

    def test_all_equal_yields_no_pairs(self):
        records = records_with_accuracies([0.5, 0.5, 0.5])
        assert build_pairs(records) == []

    def test_nearest_better_matches_bruteforce_oracle(self):
        rng = random.Random(2)
        accs = rng.sample([i / 1000 for i in range(1, 999)], 80)
        records = records_with_accuracies(accs)
        built = build_pairs(records, policy="nearest_better")
        by_base = {p.base_id: p for p in built}
        for base in records:
            better = [r for r in records if r.accuracy > base.accuracy]
            if not better:
                assert base.record_id not in by_base
                continue
            want = min(better, key=lambda r: (r.accuracy - base.accuracy, r.record_id))
            assert by_base[base.record_id].addon_id == want.record_id

    def test_uniform_better_deterministic_for_seed(self):
        records = records_with_accuracies([i / 100 for i in range(1, 40)])
        a = build_pairs(records, seed=9)
        b = build_pairs(records, seed=9)
        assert a == b

    def test_uniform_better_insensitive_to_record_order(self):
        records = records_with_accuracies([i / 100 for i in range(1, 40)])
        shuffled = list(records)
        random.Random(0).shuffle(shuffled)
        assert build_pairs(records, seed=9) == build_pairs(shuffled, seed=9)

    def test_seed_changes_partner_choice(self):
        records = records_with_accuracies([i / 100 for i in range(1, 60)])
        a = build_pairs(records, seed=1)
        b = build_pairs(records, seed=2)
        assert [p.addon_id for p in a] != [p.addon_id for p in b]

    def test_empty_input_raises(self):
        with pytest.raises(ValueError):
            build_pairs([])

    def test_unevaluated_record_raises(self):
        records = records_with_accuracies([0.4]) + [make_brute_record(numbered_code(99))]
        with pytest.raises(ValueError):
            build_pairs(records)

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            build_pairs(records_with_accuracies([0.4, 0.5]), policy="best_of_three")

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.integers(min_value=1, max_value=999),
            min_size=2,
            max_size=50,
            unique=True,
        ),
        st.integers(min_value=0, max_value=1000),
    )
    def test_pair_count_law_property(self, milli_accs, seed):
        records = records_with_accuracies([m / 1000 for m in milli_accs])
        built = build_pairs(records, seed=seed)
        assert len(built) == len(records) - 1
        assert all(p.addon_accuracy > p.base_accuracy for p in built)


class TestRewriteResize:
    def test_tuple_form(self):
        assert rewrite_resize("transforms.Resize((64, 64))") == "transforms.Resize((256, 256))"

    def test_scalar_form(self):
        assert rewrite_resize("transforms.Resize(32)") == "transforms.Resize(256)"

    def test_keyword_forms(self):
        assert rewrite_resize("Resize(size=(64, 64))") == "Resize(size=(256, 256))"
        assert rewrite_resize("Resize(size=48)") == "Resize(size=256)"

    def test_random_resized_crop_untouched(self):
        code = "transforms.RandomResizedCrop(24, scale=(0.5, 1.0))"
        assert rewrite_resize(code) == code

    def test_multiple_occurrences(self):
        code = "Resize((64, 64))\nResize(100)\n"
        assert rewrite_resize(code) == "Resize((256, 256))\nResize(256)\n"

    def test_already_256_stable(self):
        code = "transforms.Resize((256, 256))"
        assert rewrite_resize(code) == code


class TestAugmentation:
    def _pairs(self, n: int):
        records = records_with_accuracies([i / 500 for i in range(1, n + 2)])
        return build_pairs(records, seed=0)

    def test_exact_floor_count(self):
        built = self._pairs(100)
        clones = augment_resize256(built, 0.5, seed=1)
        assert len(clones) == math.floor(0.5 * len(built))

    def test_odd_count_floors(self):
        built = self._pairs(33)
        clones = augment_resize256(built, 0.5, seed=1)
        assert len(clones) == 16

    def test_every_clone_resized_and_marked(self):
        clones = augment_resize256(self._pairs(40), 0.5, seed=2)
        assert clones
        for clone in clones:
            assert "Resize((256, 256))" in clone.addon_code
            assert "Resize((64, 64))" not in clone.addon_code
            assert clone.provenance == "resize256_augmented"

    def test_base_side_untouched(self):
        built = self._pairs(40)
        clones = augment_resize256(built, 1.0, seed=2)
        by_base = {p.base_id: p for p in built}
        for clone in clones:
            assert clone.base_code == by_base[clone.base_id].base_code

    def test_fraction_zero_and_one(self):
        built = self._pairs(20)
        assert augment_resize256(built, 0.0, seed=0) == []
        assert len(augment_resize256(built, 1.0, seed=0)) == len(built)

    def test_deterministic_draw(self):
        built = self._pairs(50)
        assert augment_resize256(built, 0.4, seed=7) == augment_resize256(built, 0.4, seed=7)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            augment_resize256(self._pairs(5), 1.5)

    def test_empty_input(self):
        assert augment_resize256([], 0.5) == []


class TestCurate:
    def test_curated_drops_errors_and_duplicates(self, valid_code):
        repo = Repository()
        repo.insert(make_brute_record(valid_code, accuracy=0.5), mode="unfiltered")
        repo.insert(make_brute_record(valid_code, accuracy=0.6), mode="unfiltered")
        repo.insert(
            make_brute_record(numbered_code(1), error_class="runtime_error"),
            mode="unfiltered",
        )
        curated = curate(repo.records(), "curated")
        assert len(curated) == 1
        assert curated[0].record_id == 1  # earliest duplicate wins

    def test_unfiltered_pins_errors_to_zero(self, valid_code):
        record = make_brute_record(valid_code, error_class="timeout")
        out = curate([record], "unfiltered")
        assert out[0].accuracy == 0.0
        assert out[0].error_class == "timeout"

    def test_idempotent(self, valid_code):
        repo = Repository()
        repo.insert(make_brute_record(valid_code, accuracy=0.5), mode="unfiltered")
        repo.insert(make_brute_record(valid_code, accuracy=0.6), mode="unfiltered")
        once = curate(repo.records(), "curated")
        assert curate(once, "curated") == once

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            curate([], "strict")


class TestEmitDataset:
    def test_sample_shape_and_bindings(self, tmp_path):
        records = records_with_accuracies([0.41, 0.67])
        built = build_pairs(records)
        path = tmp_path / "ds.jsonl"
        assert emit_dataset(built, path) == 1

        sample = json.loads(path.read_text().splitlines()[0])
        assert set(sample) == {"prompt", "output", "provenance"}
        base, addon = records[0], records[1]
        assert f"(Accuracy: {format_accuracy(base.accuracy)}):" in sample["prompt"][1]
        assert sample["prompt"][2] == f"<tr>{base.code}</tr>"
        assert sample["output"] == [f"<tr>{addon.code}</tr>"]
        assert sample["provenance"] == "original"

    def test_byte_stable(self, tmp_path):
        records = records_with_accuracies([i / 50 for i in range(1, 30)])
        built = build_pairs(records, seed=3)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        emit_dataset(built, a)
        emit_dataset(built, b)
        assert a.read_bytes() == b.read_bytes()

    def test_augmented_samples_carry_provenance(self, tmp_path):
        records = records_with_accuracies([0.3, 0.5, 0.7])
        built = build_pairs(records, seed=0)
        clones = augment_resize256(built, 1.0, seed=0)
        path = tmp_path / "ds.jsonl"
        emit_dataset(built + clones, path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert sum(1 for r in rows if r["provenance"] == "resize256_augmented") == len(clones)
