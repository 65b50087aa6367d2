"""Run artifacts: trajectory CSV, snapshot binaries, reports, and manifests.

Everything written here is byte-deterministic for a fixed input, except the
manifest timestamps (the manifest lists checksums of the data artifacts, so
reproducibility is checked against those).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import time
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path

import numpy as np

from .flow import Trajectory
from .spectral import Field, Grid

SCHEMA_LINE = "#schema=1"
CSV_COLUMNS = ("t", "l2", "l2p4d_x", "h1", "linf", "lowfreq_l2", "N_of_t")
SNAPSHOT_MAGIC = b"HLF1"
TOOL_VERSION = "0.1.0"


def _fmt(x: float) -> str:
    return repr(float(x))


def trajectory_csv(traj: Trajectory) -> str:
    lines = [SCHEMA_LINE, ",".join(CSV_COLUMNS)]
    for r in traj.records:
        lines.append(
            ",".join(_fmt(v) for v in (r.t, r.l2, r.l2p4d, r.h1, r.linf, r.lowfreq_l2, r.n_of_t))
        )
    return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    path.write_text(trajectory_csv(traj))


def read_trajectory_csv(path: Path) -> dict[str, np.ndarray]:
    lines = path.read_text().splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise ValueError(f"{path} is not a schema=1 trajectory CSV")
    names = lines[1].split(",")
    rows = [[float(tok) for tok in line.split(",")] for line in lines[2:] if line]
    data = np.array(rows) if rows else np.empty((0, len(names)))
    return {name: data[:, i] for i, name in enumerate(names)}


def write_snapshot(field: Field, t: float, path: Path) -> None:
    """Flat binary: 32-byte header (magic, u32 d, f64 L, u32 M, f64 t,
    little-endian tag "LE", pad) followed by the complex coefficients."""
    g = field.grid
    header = struct.pack("<4sIdId2s2x", SNAPSHOT_MAGIC, g.d, g.L, g.M, t, b"LE")
    assert len(header) == 32
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.coefficients, dtype="<c16").tobytes())


def read_snapshot(path: Path) -> tuple[Field, float]:
    blob = path.read_bytes()
    magic, d, L, M, t, tag = struct.unpack("<4sIdId2s2x", blob[:32])
    if magic != SNAPSHOT_MAGIC or tag != b"LE":
        raise ValueError(f"{path} is not a heatlab snapshot")
    coeffs = np.frombuffer(blob[32:], dtype="<c16").reshape((M,) * d)
    return Field(Grid(d, L, M), coeffs), t


@dataclass
class Verdict:
    criterion_id: str
    passed: bool
    observed: float
    bound: float
    detail: str = ""


@dataclass
class MemberResult:
    seed: int
    ratios: dict[str, float] = field(default_factory=dict)
    fits: dict[str, float] = field(default_factory=dict)


@dataclass
class ExperimentReport:
    config_digest: str
    experiment: str
    per_member: list[MemberResult] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: Path,
    config_digest: str,
    command: str,
    started_at: float,
    summary: dict,
    exit_code: int,
) -> Path:
    """Write the run manifest atomically (temp file + rename), last."""
    artifacts = []
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts.append(
                {
                    "path": str(p.relative_to(out_dir)),
                    "sha256": sha256_file(p),
                    "bytes": p.stat().st_size,
                }
            )
    manifest = {
        "format": "heatlab-manifest-1",
        "tool_version": TOOL_VERSION,
        "config_digest": config_digest,
        "command": command,
        "started_at": started_at,
        "finished_at": time.time(),
        "artifacts": artifacts,
        "summary": _plain(summary),
        "exit_code": exit_code,
    }
    target = out_dir / "manifest.json"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target
