import random

import pytest

from toxtrig.corpus import RawRecord, build_threads
from toxtrig.errors import ConfigError, DatasetError
from toxtrig.toxicity import ToxicityLabel
from toxtrig.triggers import (
    TriggerConfig,
    TriggerExample,
    TriggerLabelValue,
    label_triggers,
    make_dataset,
    sample_nontriggers,
    write_triggers_csv,
)

from treegen import naive_descendant_triggers, naive_direct_triggers, random_labeled_forest

TOX = ToxicityLabel.TOXIC
NON = ToxicityLabel.NON_TOXIC
AMB = ToxicityLabel.AMBIGUOUS


def comment(cid, parent=None, thread="t1", created=None):
    return RawRecord(
        id=cid,
        parent_id=parent,
        thread_id=thread,
        author="a",
        body=f"body of {cid}",
        created_at=created if created is not None else int(cid[1:] or 1) + 1,
        community="x",
    )


def star(replies):
    """One root with labeled replies; returns (threads, labels)."""
    comments = [comment("c0", created=1)]
    labels = {"c0": NON}
    for i, label in enumerate(replies, start=1):
        comments.append(comment(f"c{i}", parent="c0", created=i + 1))
        labels[f"c{i}"] = label
    return build_threads(comments), labels


class TestLabelTriggers:
    def test_two_toxic_replies_make_a_trigger(self):
        threads, labels = star([TOX, TOX])
        result = label_triggers(threads, labels)
        assert result.trigger_ids == {"c0"}
        assert result.toxic_child_counts["c0"] == 2

    def test_one_toxic_plus_ambiguous_is_not_a_trigger(self):
        threads, labels = star([TOX, AMB, AMB, AMB])
        result = label_triggers(threads, labels)
        assert result.trigger_ids == frozenset()
        assert result.toxic_child_counts["c0"] == 1

    def test_toxic_comment_never_a_trigger(self):
        threads, labels = star([TOX] * 5)
        labels["c0"] = TOX
        result = label_triggers(threads, labels)
        assert result.trigger_ids == frozenset()
        assert "c0" not in result.toxic_child_counts

    def test_orphans_excluded_from_candidacy(self):
        comments = [
            comment("c0", parent="nowhere", created=1),
            comment("c1", parent="c0", created=2),
            comment("c2", parent="c0", created=3),
        ]
        labels = {"c0": NON, "c1": TOX, "c2": TOX}
        result = label_triggers(build_threads(comments), labels)
        assert result.trigger_ids == frozenset()

    def test_descendants_scope_counts_whole_subtree(self):
        comments = [
            comment("c0", created=1),
            comment("c1", parent="c0", created=2),
            comment("c2", parent="c1", created=3),
            comment("c3", parent="c2", created=4),
        ]
        labels = {"c0": NON, "c1": NON, "c2": TOX, "c3": TOX}
        threads = build_threads(comments)
        direct = label_triggers(threads, labels, TriggerConfig(n=2, child_scope="direct"))
        deep = label_triggers(threads, labels, TriggerConfig(n=2, child_scope="descendants"))
        assert direct.trigger_ids == frozenset()
        assert deep.trigger_ids == {"c0", "c1"}

    def test_deep_chain_beyond_recursion_limit(self):
        comments = [comment("c0", created=1)]
        labels = {"c0": NON}
        for i in range(1, 3000):
            comments.append(comment(f"c{i}", parent=f"c{i - 1}", created=i + 1))
            labels[f"c{i}"] = TOX
        result = label_triggers(
            build_threads(comments), labels, TriggerConfig(n=2, child_scope="descendants")
        )
        assert "c0" in result.trigger_ids

    def test_monotone_in_n_and_scope(self):
        rng = random.Random(3)
        for _ in range(20):
            threads, labels, _ = random_labeled_forest(rng, max_nodes=120)
            by_n = [
                label_triggers(threads, labels, TriggerConfig(n=n)).trigger_ids
                for n in (1, 2, 3)
            ]
            assert by_n[2] <= by_n[1] <= by_n[0]
            deep = label_triggers(
                threads, labels, TriggerConfig(n=2, child_scope="descendants")
            ).trigger_ids
            assert by_n[1] <= deep

    def test_matches_naive_quadratic_oracle(self):
        rng = random.Random(17)
        for _ in range(30):
            threads, labels, comments = random_labeled_forest(rng, max_nodes=150)
            got = label_triggers(threads, labels, TriggerConfig(n=2)).trigger_ids
            assert got == naive_direct_triggers(comments, labels, threads, 2)

    def test_descendants_matches_ancestor_walk_oracle(self):
        rng = random.Random(23)
        for _ in range(15):
            threads, labels, comments = random_labeled_forest(rng, max_nodes=80)
            got = label_triggers(
                threads, labels, TriggerConfig(n=2, child_scope="descendants")
            ).trigger_ids
            assert got == naive_descendant_triggers(comments, labels, threads, 2)

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            TriggerConfig(n=0)
        with pytest.raises(ConfigError):
            TriggerConfig(child_scope="cousins")


class TestSampleNontriggers:
    def test_same_seed_same_sample(self):
        ids = [f"c{i}" for i in range(50)]
        assert sample_nontriggers(ids, 10, seed=4) == sample_nontriggers(ids, 10, seed=4)

    def test_input_order_irrelevant(self):
        ids = [f"c{i}" for i in range(50)]
        shuffled = ids[::-1]
        assert sample_nontriggers(ids, 10, seed=4) == sample_nontriggers(shuffled, 10, seed=4)

    def test_insufficient_candidates_names_both_counts(self):
        with pytest.raises(DatasetError, match=r"5.*3|3.*5"):
            sample_nontriggers(["a", "b", "c"], 5, seed=0)

    def test_balanced_count(self):
        sample = sample_nontriggers([f"c{i}" for i in range(30)], 7, seed=1)
        assert len(sample) == 7


def examples(n, label, prefix):
    return [
        TriggerExample(f"{prefix}{i}", f"text {prefix}{i}", label) for i in range(n)
    ]


class TestMakeDataset:
    def test_eighty_twenty_split_sizes(self):
        split = make_dataset(
            examples(1135, TriggerLabelValue.TRIGGER, "t"),
            examples(1135, TriggerLabelValue.NON_TRIGGER, "n"),
            ratio=0.8,
            seed=9,
        )
        assert len(split.train) == 1816
        assert len(split.test) == 454
        for part in (split.train, split.test):
            triggers = sum(1 for e in part if e.is_trigger)
            assert abs(triggers - len(part) / 2) <= 1

    def test_disjoint_and_complete(self):
        split = make_dataset(
            examples(10, TriggerLabelValue.TRIGGER, "t"),
            examples(10, TriggerLabelValue.NON_TRIGGER, "n"),
            seed=2,
        )
        train_ids = {e.comment_id for e in split.train}
        test_ids = {e.comment_id for e in split.test}
        assert not train_ids & test_ids
        assert len(train_ids | test_ids) == 20

    def test_seed_reproducibility(self):
        a = make_dataset(
            examples(10, TriggerLabelValue.TRIGGER, "t"),
            examples(10, TriggerLabelValue.NON_TRIGGER, "n"),
            seed=5,
        )
        b = make_dataset(
            examples(10, TriggerLabelValue.TRIGGER, "t"),
            examples(10, TriggerLabelValue.NON_TRIGGER, "n"),
            seed=5,
        )
        assert a.to_dict() == b.to_dict()

    def test_ratio_one_rejected(self):
        with pytest.raises(DatasetError):
            make_dataset(
                examples(4, TriggerLabelValue.TRIGGER, "t"),
                examples(4, TriggerLabelValue.NON_TRIGGER, "n"),
                ratio=1.0,
            )

    def test_too_few_examples_rejected(self):
        with pytest.raises(DatasetError, match="at least 2"):
            make_dataset(
                examples(1, TriggerLabelValue.TRIGGER, "t"),
                examples(5, TriggerLabelValue.NON_TRIGGER, "n"),
            )

    def test_overlapping_ids_rejected(self):
        triggers = examples(3, TriggerLabelValue.TRIGGER, "x")
        nontriggers = [
            TriggerExample("x0", "clash", TriggerLabelValue.NON_TRIGGER),
            TriggerExample("y1", "ok", TriggerLabelValue.NON_TRIGGER),
        ]
        with pytest.raises(DatasetError, match="x0"):
            make_dataset(triggers, nontriggers)

    def test_both_splits_keep_both_classes(self):
        split = make_dataset(
            examples(2, TriggerLabelValue.TRIGGER, "t"),
            examples(2, TriggerLabelValue.NON_TRIGGER, "n"),
            ratio=0.8,
            seed=0,
        )
        assert sum(e.is_trigger for e in split.train) == 1
        assert sum(e.is_trigger for e in split.test) == 1


def test_triggers_csv_layout(tmp_path):
    threads, labels = star([TOX, TOX, NON])
    labeling = label_triggers(threads, labels)
    out = tmp_path / "triggers.csv"
    with open(out, "w") as handle:
        write_triggers_csv(handle, labeling)
    lines = out.read_text().splitlines()
    assert lines[0] == "comment_id,label,toxic_child_count"
    assert "c0,trigger,2" in lines
    assert "c3,non_trigger,0" in lines
