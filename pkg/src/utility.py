"""timing, seeding and report writing helpers shared across the workbench"""
import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from time import perf_counter
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

FORMAT_VERSION = 1
THREADS_ENV = "ROQ_LAB_THREADS"


class LapTimer:
    """LapTimer times and counts loop iterations with the monotonic performance clock

    Usage:
        >>> timer = LapTimer()
        >>> for query in queries:
        ...     run(query)
        ...     timer.lap()
        >>> print(timer.info())
    """

    def __init__(self) -> None:
        self.n = 0
        """laps since reset"""
        self.t00 = 0.0
        """reset time"""
        self.t0 = 0.0
        """start of the current lap"""
        self.d0 = 0.0
        """duration of the last lap"""
        self.reset()

    def reset(self) -> None:
        """zero the lap count and restart the clock"""
        self.n = 0
        t = perf_counter()
        self.t00 = t
        self.t0 = t

    def lap(self) -> float:
        """close the current lap and open the next

        Returns:
            duration of the closed lap in seconds
        """
        self.n += 1
        t = perf_counter()
        self.d0 = t - self.t0
        self.t0 = t
        return self.d0

    @property
    def last(self) -> float:
        return self.d0

    @property
    def last_ms(self) -> float:
        return self.d0 * 1000.0

    @property
    def avg(self) -> float:
        """mean lap duration since reset"""
        return (self.t0 - self.t00)/self.n if self.n else 0.0

    @property
    def rate(self) -> float:
        """laps per second since reset"""
        return 1/self.avg if self.avg else 0.0

    def info(self) -> str:
        return f"{self.n} laps, last {self.last_ms:.1f}ms, avg {self.avg * 1000.0:.1f}ms, {self.rate:.1f}/s"


def derive_seed(master: int, *index: int) -> int:
    """mix a master seed with indices into an independent child seed

    Usage:
        >>> query_seed = derive_seed(seed, query_idx)
        >>> plan_seed = derive_seed(seed, query_idx, plan_idx)

    Returns:
        non-negative 32 bit seed
    """
    seq = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(i) for i in index))
    return int(seq.generate_state(1)[0])


def worker_count() -> int:
    """number of worker threads allowed by ROQ_LAB_THREADS (0 or unset means one per cpu)"""
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        requested = int(raw)
    except ValueError:
        requested = 0
    if requested <= 0:
        return os.cpu_count() or 1
    return requested


def config_hash(config: Optional[Dict[str, Any]]) -> str:
    """short stable hash of a configuration dictionary"""
    canonical = json.dumps(config or {}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def header_comment(seed: Optional[int], config: Optional[Dict[str, Any]]) -> str:
    """leading comment line written to every csv report"""
    return f"# format_version={FORMAT_VERSION} seed={seed} config_hash={config_hash(config)}"


def atomic_write_text(path: str, text: str) -> None:
    """write text to path through a temporary file and a rename

    the destination directory is created when missing
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_value(value: Any) -> str:
    """csv cell formatting: floats use repr so files regenerate bit identically"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              seed: Optional[int] = None, config: Optional[Dict[str, Any]] = None) -> None:
    """atomically write a csv report preceded by the reproducibility comment line

    Args:
        path: output file
        columns: header names
        rows: row values aligned with columns
        seed: seed recorded in the comment line
        config: configuration hashed into the comment line
    """
    lines: List[str] = [header_comment(seed, config), ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: str) -> List[Dict[str, str]]:
    """read a report written by write_csv, skipping comment lines"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))
