"""File exports: metric traces, belief maps, PGM renders, summaries.

Every file starts with the resolved config as ``# key=value`` comment lines
(after the ``P2`` magic for PGM), which :func:`config.config_from_header`
reads back.
"""

from __future__ import annotations

from pathlib import Path

from .config import SimConfig, config_header
from .engine import TRACE_HEADER, BatchResult, MetricsRecord, RunResult
from .stigmergy import table_from_csv, table_to_csv
from .world import GridWorld

UNVISITED = 255
MAX_SHADE = 254


def trace_csv(trace: list[MetricsRecord], config: SimConfig) -> str:
    rows = [TRACE_HEADER] + [rec.row() for rec in trace]
    return config_header(config) + "\n".join(rows) + "\n"


def belief_csv(table: dict, config: SimConfig) -> str:
    return config_header(config) + table_to_csv(table)


def world_csv(world: GridWorld, config: SimConfig) -> str:
    return config_header(config) + world.to_csv()


def summary_text(result: RunResult) -> str:
    final = result.final
    failed = sorted((r.id, r.failed_at) for r in result.robots if not r.active)
    lines = [
        f"final_active_robots={final.active_robots}",
        f"final_explored_cells={final.explored_cells}",
        f"mean_bytes_per_robot={sum(rec.bytes_per_robot for rec in result.trace) / len(result.trace)!r}",
        f"world_sha256={result.world_digest}",
        "failures=" + ";".join(f"{rid}@{t}" for rid, t in failed),
    ]
    return config_header(result.config) + "\n".join(lines) + "\n"


def aggregate_csv(result: BatchResult) -> str:
    return config_header(result.config) + "\n".join(result.aggregate_rows()) + "\n"


def render_pgm(table: dict, width: int, height: int, world: GridWorld | None = None,
               config: SimConfig | None = None) -> str:
    """Grayscale P2 image, one pixel per cell, north up.

    Unvisited cells are white; visited cells go from black (0 radiation) to
    254 (radiation >= 1). With ``world``, obstacles are drawn black and
    sources at 254.
    """
    pixels = [[UNVISITED] * width for _ in range(height)]
    for (x, y), entry in table.items():
        if 0 <= x < width and 0 <= y < height:
            level = min(max(float(entry.value), 0.0), 1.0)
            pixels[y][x] = round(MAX_SHADE * level)
    if world is not None:
        for x, y in world.obstacles:
            pixels[y][x] = 0
        for src in world.sources:
            pixels[src.position.y][src.position.x] = MAX_SHADE
    header = "P2\n" + (config_header(config) if config is not None else "")
    body = [f"{width} {height}", "255"]
    body += [" ".join(str(v) for v in pixels[row]) for row in reversed(range(height))]
    return header + "\n".join(body) + "\n"


def read_belief(path: str | Path) -> dict:
    return table_from_csv(Path(path).read_text())


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
