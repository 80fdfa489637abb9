"""
CSV and manifest writers.

Tables go through pandas with a fixed float format so that reruns give
byte-identical files. Every command also writes manifest.json: the command
line, resolved configuration, seed table, versions and SHA-256 checksums of
the files it produced.
"""
import hashlib
import json
import logging
import os
import platform
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy

from constrained_chain import __version__
from constrained_chain.sweep import RealisationTask

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
MANIFEST_NAME = "manifest.json"

# dataclass field -> CSV column
_COLUMN_NAMES = {
    "mu_over_n": "mu_over_N",
    "n_sites": "N",
    "mean_sector_dim": "mean_D_H",
    "mean_mc_over_n": "mean_mc_over_N",
    "mean_mc_over_dh": "mean_mc_over_DH",
    "lls_weighted_mc_over_dh": "lls_weighted_mc_over_DH",
}


def points_to_frame(points: Iterable[Any]) -> pd.DataFrame:
    """One row per result dataclass, with CSV column names."""
    rows = [asdict(p) if is_dataclass(p) else dict(p) for p in points]
    return pd.DataFrame(rows).rename(columns=_COLUMN_NAMES)


def write_frame(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_frame(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def seed_table(tasks: Sequence[RealisationTask]) -> List[Dict[str, Any]]:
    """(realisation_index, mu, N, seed) for every realisation of a sweep."""
    return [
        {
            "realisation_index": t.realisation_index,
            "mu": t.mu,
            "mu_over_N": t.mu_over_n,
            "N": t.n_sites,
            "seed": t.settings.seed,
        }
        for t in tasks
    ]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    command: List[str]
    config: Dict[str, Any]
    seed: int
    seeds: List[Dict[str, Any]] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)
    started_at: str = field(default_factory=_utc_now)
    finished_at: Optional[str] = None
    outputs: Dict[str, str] = field(default_factory=dict)

    def add_output(self, path: str) -> str:
        self.outputs[os.path.basename(path)] = sha256_file(path)
        return path

    def to_json(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "seeds": self.seeds,
            "extra": self.extra,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "outputs": self.outputs,
            "version": {
                "constrained_chain": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
            },
        }

    def write(self, directory: str) -> str:
        self.finished_at = _utc_now()
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_json(), handle, indent=2, sort_keys=True, default=_json_default)
            handle.write("\n")
        logger.info(f"Wrote manifest with {len(self.outputs)} checksums to {path}")
        return path


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def read_manifest(path: str) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
