"""Files on disk: canonical JSON, CSV tables, SVG plots, datasets and run manifests.

Everything written here is a deterministic function of its inputs, so
rerunning a command with the same manifest reproduces its outputs byte for
byte.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .synthetic import Scene, scene_from_dict, scene_to_dict

MANIFEST = "manifest.json"
CONVENTIONS = ("center", "top-left")


class DatasetError(ValueError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(canonical_json(obj), encoding="utf-8")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(v) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> tuple[list, list]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    artifacts: dict = field(default_factory=dict)   # relative path -> sha256
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "seed": self.seed,
                "artifacts": dict(sorted(self.artifacts.items())),
                "tool_version": self.tool_version}

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(d["command"], d["config"], d.get("seed"), dict(d.get("artifacts", {})),
                   d.get("tool_version", __version__))

    def record(self, out_dir) -> None:
        """Hash every file in ``out_dir`` except the manifest itself."""
        root = Path(out_dir)
        self.artifacts = {
            p.relative_to(root).as_posix(): sha256_file(p)
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != MANIFEST
        }

    def write(self, out_dir) -> Path:
        self.record(out_dir)
        path = Path(out_dir) / MANIFEST
        write_json(path, self.to_dict())
        return path

    def same_run(self, other: "RunManifest") -> bool:
        return (self.command, self.config, self.seed, self.tool_version) == \
            (other.command, other.config, other.seed, other.tool_version)


def read_manifest(out_dir) -> RunManifest:
    return RunManifest.from_dict(read_json(Path(out_dir) / MANIFEST))


def verify_manifest(out_dir) -> list:
    """Artifacts whose hash no longer matches the manifest."""
    m = read_manifest(out_dir)
    root = Path(out_dir)
    return [rel for rel, h in m.artifacts.items()
            if not (root / rel).is_file() or sha256_file(root / rel) != h]


def scene_filename(i: int) -> str:
    return f"scene_{i:05d}.json"


def save_scene(scene: Scene, path) -> None:
    write_json(path, scene_to_dict(scene))


def load_scene(path) -> Scene:
    try:
        return scene_from_dict(read_json(path))
    except (KeyError, TypeError) as e:
        raise DatasetError(f"{path}: malformed scene ({e})") from e


def save_dataset(scenes: Sequence[Scene], out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, scene in enumerate(scenes):
        name = scene_filename(i)
        save_scene(scene, out / name)
        names.append(name)
    return names


def load_dataset(path) -> list:
    """Scenes of a dataset directory (in file-name order) or of a single scene file."""
    p = Path(path)
    if p.is_file():
        return [load_scene(p)]
    if not p.is_dir():
        raise FileNotFoundError(f"no dataset at {p}")
    files = sorted(f for f in p.glob("*.json") if f.name != MANIFEST)
    if not files:
        raise DatasetError(f"{p} holds no scene files")
    return [load_scene(f) for f in files]


def convert_coords(points, width: float, height: float, to: str = "top-left") -> np.ndarray:
    """Switch 2D points between center-relative and top-left pixel origins."""
    if to not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    half = np.array([width / 2.0, height / 2.0])
    pts = np.asarray(points, dtype=float)
    return pts + half if to == "top-left" else pts - half


# ---------------------------------------------------------------------------
# plots

SVG_W, SVG_H, PAD = 480, 320, 48
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _series_items(series) -> list:
    if isinstance(series, dict):
        items = list(series.items())
    else:
        items = [("y", series)]
    out = []
    for name, pts in items:
        arr = np.asarray(pts, dtype=float).reshape(-1, 2)
        out.append((str(name), arr))
    if not out or any(len(a) == 0 for _, a in out):
        raise ValueError("plot series must be non-empty")
    return out


def _ticks(lo, hi):
    return [lo + (hi - lo) * i / 4 for i in range(5)]


def _svg(items, xlabel, ylabel, title) -> str:
    xs = np.concatenate([a[:, 0] for _, a in items])
    ys = np.concatenate([a[:, 1] for _, a in items])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(x):
        return PAD + (x - x0) / (x1 - x0) * (SVG_W - 2 * PAD)

    def py(y):
        return SVG_H - PAD - (y - y0) / (y1 - y0) * (SVG_H - 2 * PAD)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" '
        f'viewBox="0 0 {SVG_W} {SVG_H}">',
        f'<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>',
        f'<text x="{SVG_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{PAD}" y1="{SVG_H - PAD}" x2="{SVG_W - PAD}" y2="{SVG_H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{SVG_H - PAD}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        lines.append(f'<text x="{px(t):.2f}" y="{SVG_H - PAD + 16}" text-anchor="middle" '
                     f'font-size="10">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        lines.append(f'<text x="{PAD - 4}" y="{py(t) + 3:.2f}" text-anchor="end" '
                     f'font-size="10">{t:.4g}</text>')
    lines.append(f'<text x="{SVG_W / 2:.1f}" y="{SVG_H - 8}" text-anchor="middle" '
                 f'font-size="12">{xlabel}</text>')
    lines.append(f'<text x="12" y="{SVG_H / 2:.1f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 12 {SVG_H / 2:.1f})">{ylabel}</text>')
    for k, (name, arr) in enumerate(items):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in arr)
        lines.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        for x, y in arr:
            lines.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" fill="{color}"/>')
        lines.append(f'<text x="{SVG_W - PAD}" y="{PAD + 14 * k}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{name}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def emit_plot(series, path, xlabel: str = "x", ylabel: str = "y", title: str = "") -> tuple:
    """Write ``<path>.csv`` and ``<path>.svg``; returns both paths.

    ``series`` maps a name to (x, y) pairs, or is a bare list of pairs. The
    CSV has columns ``series, <xlabel>, <ylabel>``; the SVG is drawn from
    exactly those values.
    """
    items = _series_items(series)
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    rows = [(name, float(x), float(y)) for name, arr in items for x, y in arr]
    write_csv(csv_path, ["series", xlabel, ylabel], rows)
    # draw from the CSV text so the plot cannot disagree with it
    _, parsed = read_csv(csv_path)
    redrawn = {}
    for name, x, y in parsed:
        redrawn.setdefault(name, []).append((float(x), float(y)))
    svg_items = [(n, np.asarray(p)) for n, p in redrawn.items()]
    svg_path.write_text(_svg(svg_items, xlabel, ylabel, title), encoding="utf-8")
    return csv_path, svg_path


def threads() -> int:
    """Worker cap from ``CLIFF_GEOM_THREADS`` (default 1)."""
    raw = os.environ.get("CLIFF_GEOM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as e:
        raise ValueError(f"CLIFF_GEOM_THREADS must be an integer, got {raw!r}") from e
    if n < 1:
        raise ValueError("CLIFF_GEOM_THREADS must be >= 1")
    return n


def parallel_map(fn, items: Sequence) -> list:
    """``[fn(x) for x in items]``, spread over processes when allowed; order kept."""
    n = min(threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
