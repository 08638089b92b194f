"""CSV output with a manifest trailer, and the per-run manifest file."""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

ARTIFACT = "hesaw"


def artifact_version() -> str:
    from importlib.metadata import PackageNotFoundError, version
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return format(float(x), ".12g")


def write_csv(path, columns: Mapping[str, Sequence], scenario_hash: str,
              comments: Optional[Sequence[str]] = None) -> Path:
    """Write equal-length columns with a header and a trailing manifest comment.

    Leading ``comments`` lines go above the header, each prefixed by ``#``.
    """
    path = Path(path)
    names = list(columns)
    cols = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n] for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) != 1:
        raise ValueError(f"columns differ in length: {dict(zip(names, map(len, cols)))}")
    lines = [f"# {c}" for c in (comments or [])]
    lines.append(",".join(names))
    for row in zip(*cols):
        lines.append(",".join(_fmt(v) for v in row))
    lines.append(f"# manifest scenario_hash={scenario_hash} artifact={ARTIFACT} "
                 f"version={artifact_version()}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> Dict[str, np.ndarray]:
    """Numeric columns of a file written by :func:`write_csv`."""
    rows = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = rows[0].split(",")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]]).reshape(-1, len(header))
    return {h: data[:, j] for j, h in enumerate(header)}


def manifest_hash(path) -> Optional[str]:
    for line in reversed(Path(path).read_text().splitlines()):
        if line.startswith("# manifest "):
            for tok in line.split()[2:]:
                if tok.startswith("scenario_hash="):
                    return tok.split("=", 1)[1]
    return None


@dataclass
class RunManifest:
    """Record of one CLI run.  ``wall_time_s`` is the only non-reproducible field."""

    scenario_hash: str
    command: str
    version: str = field(default_factory=artifact_version)
    outputs: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / f"manifest_{self.command}.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
