"""Record validation, file round trips, and split arithmetic."""

import numpy as np
import pytest

from conftest import make_labels, make_pool, make_prompts
from routekit import (
    ConsistencyError,
    LabelMatrix,
    LlmProfile,
    PairwiseRecord,
    ParseError,
    PromptRecord,
    SplitSpec,
    ValidationError,
    load_dataset,
    load_labels,
    load_pairwise,
    load_pool,
    load_prompts,
    make_split,
    restrict,
    save_dataset,
    save_labels,
    save_pool,
    save_prompts,
)


class TestRecords:
    def test_prompt_embedding_coerced_to_float64(self):
        rec = PromptRecord(id="a", embedding=[1, 2, 3])
        assert rec.embedding.dtype == np.float64
        assert rec.embedding.shape == (3,)

    def test_prompt_rejects_nan_and_matrix(self):
        with pytest.raises(ValidationError):
            PromptRecord(id="a", embedding=[1.0, float("nan")])
        with pytest.raises(ValueError):
            PromptRecord(id="a", embedding=np.zeros((2, 2)))

    def test_profile_rejects_negative_or_nan_cost(self):
        with pytest.raises(ValidationError):
            LlmProfile(id="m", cost=-0.5)
        with pytest.raises(ValidationError):
            LlmProfile(id="m", cost=float("inf"))
        assert LlmProfile(id="m", cost=0.0).cost == 0.0

    def test_label_matrix_validates_observed_range_only(self):
        losses = np.array([[0.5, 7.0]])
        mask = np.array([[True, False]])
        lm = LabelMatrix(losses=losses, mask=mask)  # masked junk is fine
        assert lm.n_prompts == 1 and lm.n_llms == 2
        with pytest.raises(ValidationError):
            LabelMatrix(losses=losses, mask=np.array([[True, True]]))

    def test_label_matrix_shape_mismatch(self):
        with pytest.raises(ValueError):
            LabelMatrix(losses=np.zeros((2, 3)), mask=np.ones((3, 2), dtype=bool))

    def test_label_equality_ignores_masked_cells(self):
        a = make_labels([[0.1, 0.9]], [[True, False]])
        b = LabelMatrix(losses=np.array([[0.1, 0.2]]), mask=np.array([[True, False]]))
        assert a == b

    def test_pairwise_record_validation(self):
        PairwiseRecord(prompt_id="p", llm_a="x", llm_b="y", outcome="tie")
        with pytest.raises(ValidationError):
            PairwiseRecord(prompt_id="p", llm_a="x", llm_b="x", outcome="a_wins")
        with pytest.raises(ValidationError):
            PairwiseRecord(prompt_id="p", llm_a="x", llm_b="y", outcome="draw")

    def test_split_spec_rejects_overlap(self):
        with pytest.raises(ValidationError):
            SplitSpec(
                train_idx=[0, 1],
                val_idx=[1],
                test_idx=[2],
                train_llms=[0],
                test_llms=[1],
                seed=0,
            )
        with pytest.raises(ValidationError):
            SplitSpec(
                train_idx=[0],
                val_idx=[1],
                test_idx=[2],
                train_llms=[0],
                test_llms=[0],
                seed=0,
            )


class TestFileRoundTrips:
    def test_dataset_round_trip_is_exact(self, tmp_path):
        prompts = make_prompts(17, 5, seed=3)
        pool = make_pool([0.25, 1.0, 10.0 / 3.0])
        rng = np.random.Generator(np.random.PCG64(5))
        losses = rng.random((17, 3))
        mask = rng.random((17, 3)) < 0.7
        mask[0] = [True, True, True]
        labels = make_labels(losses, mask)
        save_dataset(prompts, labels, pool, tmp_path)
        p2, l2, pool2 = load_dataset(
            tmp_path / "prompts.jsonl", tmp_path / "labels.csv", tmp_path / "pool.csv"
        )
        assert p2 == prompts
        assert pool2 == pool
        assert l2 == labels
        assert np.array_equal(l2.mask, labels.mask)
        # observed cells survive with bit-exact values
        assert np.array_equal(l2.losses[l2.mask], labels.losses[labels.mask])

    def test_save_then_save_again_identical_bytes(self, tmp_path):
        prompts = make_prompts(5, 2, seed=1)
        pool = make_pool([1.0, 2.0])
        labels = make_labels(np.full((5, 2), 1.0 / 3.0))
        save_dataset(prompts, labels, pool, tmp_path / "a")
        save_dataset(prompts, labels, pool, tmp_path / "b")
        for name in ("prompts.jsonl", "labels.csv", "pool.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_labels_align_to_prompt_and_pool_order(self, tmp_path):
        prompts = make_prompts(3, 2)
        pool = make_pool([1.0, 2.0])
        text = "prompt_id,llm01,llm00\np0002,0.5,0.1\np0000,,0.2\np0001,0.25,\n"
        path = tmp_path / "labels.csv"
        path.write_text(text)
        lm = load_labels(path, prompts, pool)
        # rows reordered to prompts order; columns to pool order
        assert lm.losses[2, 1] == 0.5 and lm.losses[2, 0] == 0.1
        assert lm.mask[0].tolist() == [True, False]
        assert lm.losses[0, 0] == 0.2
        assert lm.mask[1].tolist() == [False, True]

    def test_labels_missing_row_is_fully_masked(self, tmp_path):
        prompts = make_prompts(3, 2)
        pool = make_pool([1.0])
        path = tmp_path / "labels.csv"
        path.write_text("prompt_id,llm00\np0000,0.5\np0002,0.25\n")
        lm = load_labels(path, prompts, pool)
        assert lm.mask[:, 0].tolist() == [True, False, True]

    def test_labels_unknown_ids_and_duplicates_fail(self, tmp_path):
        prompts = make_prompts(2, 2)
        pool = make_pool([1.0])
        path = tmp_path / "labels.csv"
        path.write_text("prompt_id,llm00\nghost,0.5\n")
        with pytest.raises(ConsistencyError):
            load_labels(path, prompts, pool)
        path.write_text("prompt_id,llm99\np0000,0.5\n")
        with pytest.raises(ConsistencyError):
            load_labels(path, prompts, pool)
        path.write_text("prompt_id,llm00\np0000,0.5\np0000,0.5\n")
        with pytest.raises(ConsistencyError):
            load_labels(path, prompts, pool)

    def test_labels_bad_cells_report_position(self, tmp_path):
        prompts = make_prompts(1, 2)
        pool = make_pool([1.0])
        path = tmp_path / "labels.csv"
        path.write_text("prompt_id,llm00\np0000,huh\n")
        with pytest.raises(ParseError, match="labels.csv:2"):
            load_labels(path, prompts, pool)
        path.write_text("prompt_id,llm00\np0000,1.5\n")
        with pytest.raises(ValidationError, match="1.5"):
            load_labels(path, prompts, pool)

    def test_prompts_parse_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "prompts.jsonl"
        path.write_text('{"id": "a", "embedding": [1.0]}\nnot json\n')
        with pytest.raises(ParseError, match=":2"):
            load_prompts(path)
        path.write_text('{"id": "a", "embedding": [1.0]}\n{"id": "a", "embedding": [2.0]}\n')
        with pytest.raises(ConsistencyError):
            load_prompts(path)
        path.write_text('{"id": "a", "embedding": [1.0]}\n{"id": "b", "embedding": [1.0, 2.0]}\n')
        with pytest.raises(ConsistencyError):
            load_prompts(path)

    def test_pool_round_trip_and_errors(self, tmp_path):
        pool = make_pool([0.1, 7.25])
        save_pool(pool, tmp_path / "pool.csv")
        assert load_pool(tmp_path / "pool.csv") == pool
        (tmp_path / "dup.csv").write_text("llm_id,cost\nm,1\nm,2\n")
        with pytest.raises(ConsistencyError):
            load_pool(tmp_path / "dup.csv")
        (tmp_path / "neg.csv").write_text("llm_id,cost\nm,-1\n")
        with pytest.raises(ValidationError):
            load_pool(tmp_path / "neg.csv")

    def test_pairwise_file(self, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text(
            "prompt_id,llm_a,llm_b,outcome\np0,m0,m1,a_wins\np1,m1,m0,tie\n"
        )
        records = load_pairwise(path)
        assert len(records) == 2
        assert records[1].outcome == "tie"
        path.write_text("prompt_id,llm_a,llm_b,outcome\np0,m0,m1,whatever\n")
        with pytest.raises(ParseError, match=":2"):
            load_pairwise(path)
        path.write_text("prompt_id,llm_a,llm_b,outcome\n")
        assert load_pairwise(path) == []


class TestSplits:
    def test_sizes_use_floors(self):
        s = make_split(10, 3, (0.6, 0.1, 0.3), 0.66, seed=1)
        assert (len(s.train_idx), len(s.val_idx), len(s.test_idx)) == (6, 1, 3)
        # test LLM count floors to 1, so 2 of 3 train
        assert len(s.train_llms) == 2 and len(s.test_llms) == 1

    def test_llm_test_count_floor(self):
        s = make_split(50, 10, (0.5, 0.2, 0.2), 0.7, seed=0)
        assert len(s.test_llms) == 3 and len(s.train_llms) == 7

    def test_leftover_prompts_are_dropped(self):
        s = make_split(7, 2, (0.5, 0.25, 0.25), 0.5, seed=2)
        used = set(s.train_idx) | set(s.val_idx) | set(s.test_idx)
        assert (len(s.train_idx), len(s.val_idx), len(s.test_idx)) == (3, 1, 1)
        assert len(used) == 5

    def test_same_seed_same_split(self):
        a = make_split(40, 5, (0.6, 0.2, 0.2), 0.6, seed=9)
        b = make_split(40, 5, (0.6, 0.2, 0.2), 0.6, seed=9)
        assert a == b

    def test_seeds_give_distinct_splits(self):
        seen = set()
        for seed in range(100):
            s = make_split(30, 4, (0.5, 0.2, 0.3), 0.5, seed=seed)
            seen.add((tuple(s.train_idx), tuple(s.train_llms)))
        assert len(seen) > 90

    def test_index_arrays_are_sorted_and_disjoint(self):
        s = make_split(25, 6, (0.4, 0.3, 0.3), 0.5, seed=4)
        for arr in (s.train_idx, s.val_idx, s.test_idx, s.train_llms, s.test_llms):
            assert np.array_equal(arr, np.sort(arr))
        assert not (set(s.train_idx) & set(s.val_idx))
        assert not (set(s.train_idx) & set(s.test_idx))

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            make_split(10, 3, (0.6, 0.5, 0.3), 0.5, seed=0)
        with pytest.raises(ValueError):
            make_split(10, 3, (0.6, 0.2), 0.5, seed=0)
        with pytest.raises(ValueError):
            make_split(10, 3, (0.6, 0.2, 0.2), 1.0, seed=0)
        with pytest.raises(ValueError):
            make_split(2, 3, (0.6, 0.2, 0.2), 0.5, seed=0)


class TestRestrict:
    def test_composition(self):
        labels = make_labels(np.arange(24).reshape(6, 4) / 24.0)
        once = restrict(labels, [0, 2, 4, 5], [1, 3])
        twice = restrict(once, [1, 3], [0])
        direct = restrict(labels, [2, 5], [1])
        assert twice == direct

    def test_empty_prompt_selection(self):
        labels = make_labels(np.zeros((3, 2)))
        sub = restrict(labels, [], [0, 1])
        assert sub.n_prompts == 0 and sub.n_llms == 2

    def test_out_of_range_rejected(self):
        labels = make_labels(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            restrict(labels, [3], [0])
        with pytest.raises(ValueError):
            restrict(labels, [0], [2])
