import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graphagg.errors import FormatError, ParseError
from graphagg.fileio import (
    Trial,
    load_checkpoint,
    parse_trials,
    read_embedding_store,
    read_feature_file,
    read_scores,
    save_checkpoint,
    write_embedding_store,
    write_feature_file,
    write_scores,
)

any_finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


class TestFeatureFile:
    def test_round_trip(self, tmp_path):
        x = np.random.default_rng(0).standard_normal((5, 3))
        write_feature_file(tmp_path / "u.gaff", x)
        assert read_feature_file(tmp_path / "u.gaff").node_features.tobytes() == x.tobytes()

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=any_finite))
    def test_round_trip_any_finite(self, tmp_path_factory, x):
        path = tmp_path_factory.mktemp("f") / "x.gaff"
        write_feature_file(path, x)
        assert read_feature_file(path).node_features.tobytes() == x.tobytes()

    def test_layout(self, tmp_path):
        write_feature_file(tmp_path / "u.gaff", np.array([[1.0, 2.0]]))
        raw = (tmp_path / "u.gaff").read_bytes()
        assert raw[:4] == b"GAFF"
        assert raw[4:16] == (1).to_bytes(4, "little") + (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
        assert raw[16:] == np.array([1.0, 2.0], dtype="<f8").tobytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad"
        p.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(FormatError, match="magic"):
            read_feature_file(p)

    def test_bad_version(self, tmp_path):
        p = tmp_path / "v"
        write_feature_file(p, np.ones((1, 1)))
        raw = bytearray(p.read_bytes())
        raw[4] = 9
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_feature_file(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "t"
        write_feature_file(p, np.ones((3, 2)))
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError, match="truncated"):
            read_feature_file(p)

    def test_no_temp_files_left(self, tmp_path):
        write_feature_file(tmp_path / "u.gaff", np.ones((2, 2)))
        assert [q.name for q in tmp_path.iterdir()] == ["u.gaff"]


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        params = {"gat0.W.0": rng.standard_normal((3, 2)), "pool0.p": rng.standard_normal((2, 1)), "é": np.ones((1, 1))}
        save_checkpoint(tmp_path / "c", params)
        back = load_checkpoint(tmp_path / "c")
        assert list(back) == list(params)
        for k in params:
            assert back[k].tobytes() == params[k].tobytes()

    def test_layout(self, tmp_path):
        save_checkpoint(tmp_path / "c", {"w": np.array([[2.0]])})
        raw = (tmp_path / "c").read_bytes()
        assert raw[:4] == b"GAGG"
        assert raw[8:12] == (1).to_bytes(4, "little") and raw[12:13] == b"w"
        assert raw[13:21] == (1).to_bytes(4, "little") * 2 and raw[21:] == np.float64(2.0).tobytes()

    def test_truncated_block(self, tmp_path):
        save_checkpoint(tmp_path / "c", {"w": np.ones((2, 2))})
        (tmp_path / "c").write_bytes((tmp_path / "c").read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "c")


class TestEmbeddingStore:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        store = {f"utt{i}": rng.standard_normal(4) for i in range(5)}
        write_embedding_store(tmp_path / "s", store)
        back = read_embedding_store(tmp_path / "s")
        assert list(back) == list(store)
        assert all(back[k].tobytes() == store[k].tobytes() for k in store)

    def test_mixed_width(self, tmp_path):
        with pytest.raises(ValueError):
            write_embedding_store(tmp_path / "s", {"a": np.ones(2), "b": np.ones(3)})


class TestTrials:
    def test_parse(self, tmp_path):
        p = tmp_path / "trials.txt"
        p.write_text("1 utt_a utt_b\n0 utt_a utt_c\n\n")
        assert parse_trials(p) == [Trial(True, "utt_a", "utt_b"), Trial(False, "utt_a", "utt_c")]

    def test_invalid_label_reports_line(self, tmp_path):
        p = tmp_path / "trials.txt"
        p.write_text("1 a b\n2 a b\n")
        with pytest.raises(ParseError) as info:
            parse_trials(p)
        assert info.value.lineno == 2

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "trials.txt"
        p.write_text("1 a\n")
        with pytest.raises(ParseError, match="3 fields"):
            parse_trials(p)

    def test_scores_round_trip(self, tmp_path):
        write_scores(tmp_path / "s", [("a", "b", 0.1234567), ("a", "c", -0.5)])
        assert (tmp_path / "s").read_text() == "a b 0.123457\na c -0.500000\n"
        assert read_scores(tmp_path / "s") == {("a", "b"): 0.123457, ("a", "c"): -0.5}
