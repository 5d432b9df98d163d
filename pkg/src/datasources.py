"""reads and writes workload files and configuration documents"""
import json
import logging
from typing import Any, Dict, Iterable, List, Optional

from .errors import ConfigurationError, WorkloadIOError
from .models import Workload, WorkloadSample
from .utility import FORMAT_VERSION, atomic_write_text

logger = logging.getLogger(__name__)


def serialize_workload(samples: Iterable[WorkloadSample]) -> bytes:
    """encode samples as newline delimited json, one sample per line

    every line carries `format_version`; an empty sequence encodes to an empty stream

    Args:
        samples: samples to encode, order is preserved

    Returns:
        utf-8 bytes
    """
    lines = []
    for sample in samples:
        record = {"format_version": FORMAT_VERSION, **sample.to_dict()}
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


def deserialize_workload(stream: bytes) -> List[WorkloadSample]:
    """decode a stream written by serialize_workload

    Raises:
        WorkloadIOError on malformed lines or an unsupported format version
    """
    samples = []
    for lineno, line in enumerate(stream.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise WorkloadIOError(f"<line {lineno}>", f"invalid json: {e}") from e
        version = record.get("format_version")
        if version != FORMAT_VERSION:
            raise WorkloadIOError(f"<line {lineno}>", f"unsupported format_version {version!r}")
        try:
            samples.append(WorkloadSample.from_dict(record))
        except (KeyError, TypeError, ValueError) as e:
            raise WorkloadIOError(f"<line {lineno}>", f"malformed sample: {e!r}") from e
    return samples


class WorkloadFile:
    """WorkloadFile represents a workload stored on disk

    Usage:
        >>> WorkloadFile("out/workload.jsonl").save(workload)
        >>> workload = WorkloadFile("out/workload.jsonl").load()
    """

    def __init__(self, path: str) -> None:
        self.path = path

    def save(self, samples: Iterable[WorkloadSample]) -> None:
        """write the samples atomically

        Raises:
            WorkloadIOError with the path when the write fails
        """
        samples = list(samples)
        try:
            atomic_write_text(self.path, serialize_workload(samples).decode("utf-8"))
        except OSError as e:
            raise WorkloadIOError(self.path, f"write failed: {e.strerror or e}") from e
        logger.info("Saved %d samples to %s", len(samples), self.path)

    def load(self) -> Workload:
        try:
            with open(self.path, "rb") as f:
                raw = f.read()
        except OSError as e:
            raise WorkloadIOError(self.path, f"read failed: {e.strerror or e}") from e
        try:
            samples = deserialize_workload(raw)
        except WorkloadIOError as e:
            raise WorkloadIOError(self.path, e.reason) from e
        logger.info("Loaded %d samples from %s", len(samples), self.path)
        return Workload(samples)


def load_config(path: Optional[str]) -> Dict[str, Any]:
    """load a json configuration document, None gives an empty configuration

    Raises:
        ConfigurationError when the file is unreadable or not a json object
    """
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"{path}: cannot read config ({e.strerror or e})") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid json ({e})") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a json object")
    return data


def config_section(config: Dict[str, Any], name: str) -> Dict[str, Any]:
    """return a named section of a configuration document (empty when absent)"""
    section = config.get(name, {})
    if not isinstance(section, dict):
        raise ConfigurationError(f"config section {name!r} must be an object")
    return section
