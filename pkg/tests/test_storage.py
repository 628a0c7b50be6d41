import os

import numpy as np
import pytest

from models.dataset import EmbeddingTable, QueryInstance
from models.errors import DimensionMismatchError, MissingFileError, ValidationError
from models.knowledge_graph import Direction, Entity, Graph, Side
from models.params import AdamState, ParamTensors
from modules.input_module import InputParser
from modules.storage_module import Checkpoint, StorageManager


def test_bundle_round_trip(tiny_bundle, tmp_path):
    written = StorageManager.save_bundle(tiny_bundle, str(tmp_path))
    assert os.path.join(str(tmp_path), "splits.tsv") in written
    assert StorageManager.load_bundle(str(tmp_path)) == tiny_bundle


def test_text_embeddings_keep_exact_values(tmp_path):
    table = EmbeddingTable(3, [5, 2], np.array([[0.1, 1 / 3, -2.5], [1e-17, 4.0, 7.25]]))
    path = str(tmp_path / "tcm.emb.txt")
    StorageManager.save_embeddings(table, path)
    assert StorageManager.load_embeddings(path) == table


def test_binary_embeddings_bad_magic(tmp_path):
    path = tmp_path / "bad.emb"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(ValidationError):
        StorageManager.load_embeddings(str(path))


def test_text_embedding_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        InputParser.parse_embedding_text(["dim 3\n", "1 0.5 0.5\n"])


def test_parse_errors_name_line():
    with pytest.raises(ValidationError, match=":3:"):
        InputParser.parse_pairs(["0\t100\n", "# комментарий\n", "1 101\n"], "anchors.tsv")


def test_missing_directory():
    with pytest.raises(MissingFileError):
        StorageManager.load_bundle("/nonexistent/qcea-data")


def test_checkpoint_round_trip(tmp_path):
    params = ParamTensors({"W": np.arange(6.0).reshape(2, 3), "alpha": np.array([0.25])})
    adam = AdamState.for_params(params, lr=0.01)
    adam.step = 7
    adam.first_moment["W"] += 1.5
    checkpoint = Checkpoint("qcea", {"model": {"dim": 2}}, params, adam, {"best_epoch": 3})
    path = str(tmp_path / "model.ckpt")
    StorageManager.save_checkpoint(path, checkpoint)

    loaded = StorageManager.load_checkpoint(path)
    assert loaded.method == "qcea"
    assert loaded.config == {"model": {"dim": 2}}
    assert loaded.meta == {"best_epoch": 3}
    assert loaded.params == params
    assert loaded.adam.step == 7
    assert loaded.adam.lr == pytest.approx(0.01)
    np.testing.assert_array_equal(loaded.adam.first_moment["W"], np.full((2, 3), 1.5))


def test_digests_are_stable(tmp_path):
    (tmp_path / "a.txt").write_text("abc")
    first = StorageManager.directory_digests(str(tmp_path))
    assert first == StorageManager.directory_digests(str(tmp_path))
    assert list(first) == ["a.txt"]


@pytest.mark.parametrize("lines", [
    ["dim 2\n", "1 0.5 abc\n"],
    ["dim x\n", "1 0.5 0.5\n"],
    ["dim 0\n"],
    ["dim 2\n", "id 0.5 0.5\n"],
])
def test_malformed_text_embeddings(lines):
    with pytest.raises(ValidationError, match="emb.txt"):
        InputParser.parse_embedding_text(lines, "tcm.emb.txt")


def test_non_utf8_file_is_validation_error(tmp_path):
    path = tmp_path / "tcm.emb.txt"
    path.write_bytes(b"dim 1\n1 \xff\xfe\n")
    with pytest.raises(ValidationError) as info:
        StorageManager.load_embeddings(str(path))
    assert info.value.one_line().startswith("error=validation ")


def test_truncated_binary_embeddings(tmp_path):
    path = tmp_path / "short.emb"
    path.write_bytes(b"QCEAEMB1" + b"\x01\x00")
    with pytest.raises(ValidationError):
        StorageManager.load_embeddings(str(path))


def test_corrupted_checkpoint_header(tmp_path):
    params = ParamTensors({"W": np.ones((2, 2))})
    path = str(tmp_path / "model.ckpt")
    StorageManager.save_checkpoint(path, Checkpoint("qcea", {}, params))
    payload = bytearray((tmp_path / "model.ckpt").read_bytes())
    payload[22] ^= 0xFF
    (tmp_path / "model.ckpt").write_bytes(bytes(payload))
    with pytest.raises(ValidationError):
        StorageManager.load_checkpoint(path)


def test_malformed_jsonl_names_line(tmp_path):
    path = tmp_path / "train_log.jsonl"
    path.write_text('{"epoch": 1}\n{"epoch": \n', encoding="utf-8")
    with pytest.raises(ValidationError, match=":2:"):
        StorageManager.read_jsonl(str(path))


@pytest.mark.parametrize("type_tag, name, description", [
    ("symptom", "имя\tс табуляцией", "описание"),
    ("symptom", "имя", "первая строка\nвторая"),
    ("symptom", "имя", "возврат\rкаретки"),
    ("two words", "имя", "описание"),
])
def test_graph_fields_with_separators_are_rejected(type_tag, name, description):
    graph = Graph(Side.TCM, [Entity(0, Side.TCM, type_tag, name, description)])
    with pytest.raises(ValidationError, match="сущность 0"):
        StorageManager.format_graph(graph)


def test_graph_text_keeps_spaces_and_tabs_in_description():
    graph = Graph(Side.WM, [Entity(7, Side.WM, "disease", "сахарный диабет", "a\tb c")], [])
    parsed = InputParser.parse_graph(StorageManager.format_graph(graph).splitlines(keepends=True))
    assert parsed.entities[0].name == "сахарный диабет"
    assert parsed.entities[0].description == "a\tb c"


@pytest.mark.parametrize("description", ["жар\tи озноб", "жар\nозноб"])
def test_query_descriptions_with_separators_are_rejected(description):
    query = QueryInstance(3, 0, Direction.TCM_TO_WM, description)
    with pytest.raises(ValidationError, match="запрос 3"):
        StorageManager.format_queries([query])
