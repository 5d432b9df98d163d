import json

import pytest

from src.datasources import WorkloadFile, config_section, deserialize_workload, load_config, serialize_workload
from src.errors import ConfigurationError, WorkloadIOError
from src.utility import config_hash, header_comment, read_csv, write_csv

from conftest import chain_sample


class TestWorkloadFile:
    def test_save_load(self, tmp_path):
        samples = [chain_sample("train", 0), chain_sample("test", 4, times=(1.25, 0.125))]
        path = tmp_path / "w.jsonl"
        WorkloadFile(str(path)).save(samples)
        loaded = WorkloadFile(str(path)).load()
        assert loaded.samples == samples
        assert loaded.query_ids == [0, 1]

    def test_serialization_is_stable(self):
        samples = [chain_sample()]
        assert serialize_workload(samples) == serialize_workload(deserialize_workload(serialize_workload(samples)))

    @pytest.mark.slow
    def test_generated_workload_round_trip(self, stock_workload):
        stream = serialize_workload(stock_workload)
        assert len(stream.splitlines()) == 1000
        assert deserialize_workload(stream) == list(stock_workload)

    def test_empty_stream(self):
        assert serialize_workload([]) == b""
        assert deserialize_workload(b"") == []

    def test_missing_file_carries_path(self, tmp_path):
        path = str(tmp_path / "absent.jsonl")
        with pytest.raises(WorkloadIOError) as err:
            WorkloadFile(path).load()
        assert err.value.path == path

    def test_unsupported_version(self, tmp_path):
        record = json.loads(serialize_workload([chain_sample()]))
        record["format_version"] = 99
        path = tmp_path / "w.jsonl"
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(WorkloadIOError) as err:
            WorkloadFile(str(path)).load()
        assert err.value.path == str(path)

    def test_malformed_line(self):
        with pytest.raises(WorkloadIOError):
            deserialize_workload(b"{not json\n")


class TestConfig:
    def test_none_is_empty(self):
        assert load_config(None) == {}

    def test_sections(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"model": {"hidden": 8}}))
        config = load_config(str(path))
        assert config_section(config, "model") == {"hidden": 8}
        assert config_section(config, "generator") == {}

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigurationError):
            load_config(str(path))

    def test_hash_ignores_key_order(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert len(config_hash(None)) == 12


class TestCsv:
    def test_header_and_values(self, tmp_path):
        path = tmp_path / "r.csv"
        write_csv(str(path), ("a", "b", "c"), [(1, 0.1, True), (2, float("nan"), False)], seed=4, config={"x": 1})
        lines = path.read_text().splitlines()
        assert lines[0] == header_comment(4, {"x": 1})
        assert lines[0].startswith("# format_version=1 seed=4 config_hash=")
        assert lines[1:] == ["a,b,c", "1,0.1,true", "2,nan,false"]
        assert read_csv(str(path))[0] == {"a": "1", "b": "0.1", "c": "true"}
