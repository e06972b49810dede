"""Correspondence and ground-truth files.

Correspondence file::

    # partmatch correspondences
    mesh_x <checksum>
    mesh_y <checksum>
    level <int>
    status <status>
    objective <float>
    records <n>
    <x_id> <y_id> <x_tag> <y_tag> <pairing>
    ...

Ids are extended-element ids. Ground truth is one X vertex id per line,
line ``i`` giving the image of Y vertex ``i``; ``-1`` marks vertices that
are not evaluated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import Mesh
from .product import TAG_NAMES

MAGIC = "# partmatch correspondences"


class CorrespondenceFormatError(ValueError):
    pass


@dataclass
class CorrespondenceFile:
    records: list
    mesh_x: str = ""
    mesh_y: str = ""
    level: int = 0
    status: str = "optimal"
    objective: float = float("nan")
    extra: dict = field(default_factory=dict)

    def check_meshes(self, meshX: Mesh, meshY: Mesh) -> None:
        if self.mesh_x and self.mesh_x != meshX.checksum():
            raise CorrespondenceFormatError("X mesh checksum does not match the correspondence file")
        if self.mesh_y and self.mesh_y != meshY.checksum():
            raise CorrespondenceFormatError("Y mesh checksum does not match the correspondence file")


def save_correspondences(path, cf: CorrespondenceFile) -> None:
    lines = [MAGIC, f"mesh_x {cf.mesh_x}", f"mesh_y {cf.mesh_y}", f"level {cf.level}",
             f"status {cf.status}", f"objective {float(cf.objective)!r}",
             f"records {len(cf.records)}"]
    for r in cf.records:
        lines.append(f"{r['x_id']} {r['y_id']} {r['x_tag']} {r['y_tag']} {r['pairing']}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_correspondences(path) -> CorrespondenceFile:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise CorrespondenceFormatError("not a text file") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise CorrespondenceFormatError("missing correspondence header")
    head = {}
    i = 1
    while i < len(lines) and not lines[i][:1].isdigit():
        key, _, val = lines[i].partition(" ")
        head[key] = val.strip()
        i += 1
        if key == "records":
            break
    try:
        n = int(head["records"])
        recs = []
        for ln in lines[i:i + n]:
            x, y, xt, yt, p = ln.split()
            if xt not in TAG_NAMES or yt not in TAG_NAMES:
                raise CorrespondenceFormatError(f"bad tag in line {ln!r}")
            recs.append({"x_id": int(x), "y_id": int(y), "x_tag": xt, "y_tag": yt,
                         "pairing": int(p)})
        if len(recs) != n:
            raise CorrespondenceFormatError("record count does not match the header")
        return CorrespondenceFile(recs, head.get("mesh_x", ""), head.get("mesh_y", ""),
                                  int(head.get("level", 0)), head.get("status", ""),
                                  float(head.get("objective", "nan")))
    except (KeyError, ValueError) as exc:
        if isinstance(exc, CorrespondenceFormatError):
            raise
        raise CorrespondenceFormatError(f"malformed correspondence file: {exc}") from exc


def save_ground_truth(path, gt) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in gt))


def load_ground_truth(path) -> np.ndarray:
    try:
        vals = [int(s) for s in Path(path).read_text().split()]
    except ValueError as exc:
        raise CorrespondenceFormatError(f"malformed ground-truth file: {exc}") from exc
    return np.array(vals, dtype=np.int64)
