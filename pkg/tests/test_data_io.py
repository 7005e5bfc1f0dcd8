import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from t2tbio.data_io import (
    load_config,
    read_conll_ner,
    read_qa_json,
    read_task_examples,
    read_tsv_pairs,
    write_task_examples,
)
from t2tbio.errors import ConfigError, DataFormatError, T2TBioError
from t2tbio.task_codec import EntitySpan, TaskExample


class TestConllReader:
    def test_fixture_parses(self, fixtures_dir):
        sentences = read_conll_ner(fixtures_dir / "ner_synthetic.conll")
        assert len(sentences) == 6
        words, spans = sentences[0]
        assert words[0] == "Lupus"
        assert spans == [EntitySpan(0, 0, "Disease")]

    def test_multiword_span(self, fixtures_dir):
        sentences = read_conll_ner(fixtures_dir / "ner_synthetic.conll")
        words, spans = sentences[1]
        assert spans == [EntitySpan(6, 7, "Disease")]
        assert words[6:8] == ["rheumatoid", "arthritis"]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.conll"
        path.write_text("", encoding="utf-8")
        assert read_conll_ner(path) == []

    def test_orphan_i_tag_healed(self, tmp_path):
        path = tmp_path / "heal.conll"
        path.write_text("word\tI-Disease\nnext\tO\n", encoding="utf-8")
        diags = {}
        sentences = read_conll_ner(path, diagnostics=diags)
        assert sentences[0][1] == [EntitySpan(0, 0, "Disease")]
        assert diags["healed_i_tags"] == 1

    def test_i_tag_type_switch_healed(self, tmp_path):
        path = tmp_path / "heal2.conll"
        path.write_text("a\tB-Gene\nb\tI-Disease\n", encoding="utf-8")
        diags = {}
        sentences = read_conll_ner(path, diagnostics=diags)
        assert sentences[0][1] == [EntitySpan(0, 0, "Gene"), EntitySpan(1, 1, "Disease")]
        assert diags["healed_i_tags"] == 1

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.conll"
        path.write_text("good\tO\nonlyonetoken\n", encoding="utf-8")
        with pytest.raises(DataFormatError) as exc:
            read_conll_ner(path)
        assert exc.value.line == 2

    def test_bad_tag_rejected(self, tmp_path):
        path = tmp_path / "bad2.conll"
        path.write_text("word\tB-\n", encoding="utf-8")
        with pytest.raises(DataFormatError, match="malformed BIO tag"):
            read_conll_ner(path)


class TestTsvReader:
    def test_fixture_parses(self, fixtures_dir):
        records = read_tsv_pairs(fixtures_dir / "re_synthetic.tsv", ["sentence", "label"])
        assert len(records) == 8
        assert records[0]["label"] == "CPR:4"

    def test_two_line_fixture(self, tmp_path):
        path = tmp_path / "two.tsv"
        path.write_text("a\tx\nb\ty\n", encoding="utf-8")
        records = read_tsv_pairs(path, ["text", "label"])
        assert records == [{"text": "a", "label": "x"}, {"text": "b", "label": "y"}]

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("a\tb\nc\n", encoding="utf-8")
        with pytest.raises(DataFormatError) as exc:
            read_tsv_pairs(path, ["x", "y"])
        assert exc.value.line == 2

    def test_quoted_tabs_split_anyway(self, tmp_path):
        path = tmp_path / "q.tsv"
        path.write_text('"a\tb"\tc\n', encoding="utf-8")
        records = read_tsv_pairs(path, ["one", "two", "three"])
        assert records == [{"one": '"a', "two": 'b"', "three": "c"}]


class TestQaReader:
    def test_fixture_parses(self, fixtures_dir):
        questions = read_qa_json(fixtures_dir / "qa_synthetic.json")
        assert len(questions) == 3
        q = questions[0]
        assert len(q.snippets) == 3  # dict-style snippet accepted
        assert "PKA" in q.gold_answers
        assert questions[1].gold_answers == ("the inhibitor",)  # nested list flattened
        assert questions[2].gold_answers == ("cell cycle arrest",)  # bare string

    def test_zero_snippet_question_skipped(self, tmp_path):
        path = tmp_path / "qa.json"
        path.write_text(
            json.dumps(
                {
                    "questions": [
                        {"id": "a", "body": "q1", "snippets": [], "exact_answer": ["x"]},
                        {"id": "b", "body": "q2", "snippets": ["s"], "exact_answer": ["y"]},
                    ]
                }
            ),
            encoding="utf-8",
        )
        diags = {}
        questions = read_qa_json(path, diagnostics=diags)
        assert len(questions) == 1
        assert diags["skipped_no_snippets"] == 1

    def test_duplicate_ids_merge_snippets(self, tmp_path):
        path = tmp_path / "qa.json"
        path.write_text(
            json.dumps(
                {
                    "questions": [
                        {"id": "a", "body": "q", "snippets": ["s1"], "exact_answer": ["x"]},
                        {"id": "a", "body": "q", "snippets": ["s2", "s1"], "exact_answer": ["y"]},
                    ]
                }
            ),
            encoding="utf-8",
        )
        questions = read_qa_json(path)
        assert len(questions) == 1
        assert questions[0].snippets == ("s1", "s2")
        assert questions[0].gold_answers == ("x", "y")

    def test_bad_json_is_structured_error(self, tmp_path):
        path = tmp_path / "qa.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(DataFormatError, match="bad JSON"):
            read_qa_json(path)


class TestTaskExamples:
    def test_round_trip(self, tmp_path):
        examples = [
            TaskExample("t", "t: hello", "world", {"kind": "re", "label": "x"}),
            TaskExample("t", "t: bye", "moon", {}),
        ]
        path = tmp_path / "ex.jsonl"
        write_task_examples(path, examples)
        assert read_task_examples(path) == examples

    def test_prefix_enforced(self, tmp_path):
        path = tmp_path / "ex.jsonl"
        path.write_text(
            json.dumps({"task": "t", "input": "wrong", "target": "x", "gold": {}}) + "\n",
            encoding="utf-8",
        )
        with pytest.raises(DataFormatError, match="task prefix"):
            read_task_examples(path)


def minimal_config(tmp_path, **overrides):
    payload = {
        "seed": 1,
        "out_dir": str(tmp_path / "out"),
        "vocab_path": "vocab.txt",
        "model": {"vocab_size": 64, "d_model": 16, "n_heads": 2, "d_ff": 32, "max_seq_len": 32},
        "train": {"num_steps": 2, "input_len": 16, "target_len": 16},
    }
    payload.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestRunConfig:
    def test_minimal_loads(self, tmp_path):
        cfg = load_config(minimal_config(tmp_path))
        assert cfg.seed == 1
        assert cfg.model.d_model == 16
        assert cfg.train.num_steps == 2

    def test_unknown_key_named(self, tmp_path):
        path = minimal_config(tmp_path, banana=1)
        with pytest.raises(ConfigError, match="banana"):
            load_config(path)

    def test_unknown_model_key_named(self, tmp_path):
        path = minimal_config(
            tmp_path,
            model={"vocab_size": 64, "d_model": 16, "n_heads": 2, "d_ff": 32, "warp": 9},
        )
        with pytest.raises(ConfigError, match="warp"):
            load_config(path)

    def test_cross_field_validation(self, tmp_path):
        path = minimal_config(
            tmp_path,
            train={"num_steps": 1, "input_len": 16, "target_len": 99},
        )
        with pytest.raises(ConfigError, match="target_len"):
            load_config(path)

    def test_env_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("T2TBIO_OUT_DIR", "/elsewhere")
        monkeypatch.setenv("T2TBIO_SEED", "77")
        cfg = load_config(minimal_config(tmp_path))
        assert cfg.out_dir == "/elsewhere"
        assert cfg.seed == 77

    def test_mixture_entries(self, tmp_path):
        path = minimal_config(
            tmp_path,
            mixture=[{"task": "a", "path": "a.jsonl"}, {"task": "b", "path": "b.jsonl", "weight": 2.0}],
        )
        cfg = load_config(path)
        assert cfg.mixture[1].weight == 2.0


def test_fixture_coverage_for_every_task_family(fixtures_dir):
    # pretraining corpus plus one fixture per supervised task family
    for name in (
        "pretrain_corpus.txt",
        "ner_synthetic.conll",
        "re_synthetic.tsv",
        "nli_synthetic.tsv",
        "doc_synthetic.tsv",
        "qa_synthetic.json",
    ):
        assert (fixtures_dir / name).is_file(), f"missing fixture {name}"
    assert len(read_conll_ner(fixtures_dir / "ner_synthetic.conll")) > 0
    assert len(read_tsv_pairs(fixtures_dir / "re_synthetic.tsv", ["sentence", "label"])) > 0
    assert len(read_tsv_pairs(fixtures_dir / "nli_synthetic.tsv", ["premise", "hypothesis", "label"])) > 0
    assert len(read_tsv_pairs(fixtures_dir / "doc_synthetic.tsv", ["text", "labels"])) > 0
    assert len(read_qa_json(fixtures_dir / "qa_synthetic.json")) > 0


@given(st.binary(max_size=300))
def test_readers_total_over_random_bytes(tmp_path_factory, data):
    tmp = tmp_path_factory.mktemp("fuzz")
    path = tmp / "blob"
    path.write_bytes(data)
    for reader in (
        lambda p: read_conll_ner(p),
        lambda p: read_tsv_pairs(p, ["a", "b"]),
        lambda p: read_qa_json(p),
        lambda p: read_task_examples(p),
    ):
        try:
            reader(path)
        except T2TBioError:
            pass
