"""``naeq`` command line: run a scenario config or sweep it over a grid.

Exit codes: 0 success, 2 invalid config or parameters, 3 solver failure.
Set ``NAEQ_LOG`` (DEBUG, INFO, WARNING) for verbosity.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import click

from . import __version__
from .config import ScenarioConfig, load, sweep_points
from .errors import ConfigError, InvalidParameters, NaeqError
from .microfound import PRNG
from .runner import Table, TaskOutput, run_point, run_task

log = logging.getLogger("naeq")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
PRESETS = ("table1", "fig1", "fig-merger", "appendixB", "microfound-c1", "microfound-c2",
           "dynamics-replacement")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def write_table(path: Path, table: Table) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([fmt(row.get(c)) for c in table.columns])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(out_dir: Path, output: TaskOutput, cfg: ScenarioConfig, started: str) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for name, table in output.tables.items():
        path = out_dir / name
        write_table(path, table)
        files.append({"path": name, "rows": len(table.rows), "sha256": _sha256(path)})
    for name, doc in output.documents.items():
        path = out_dir / name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n")
        files.append({"path": name, "sha256": _sha256(path)})
    manifest = {
        "config_sha256": cfg.sha256,
        "version": __version__,
        "task": cfg.task,
        "seed": cfg.seed,
        "prng": PRNG,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "outputs": files,
        "warnings": output.warnings,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return str(obj)


def sweep_output(cfg: ScenarioConfig) -> TaskOutput:
    points = sweep_points(cfg.raw)
    if cfg.workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_point, points))
    else:
        results = [run_point(p) for p in points]
    grid_cols = list(points[0]["_grid"])
    rows, value_cols = [], []
    for point, (summary, status) in zip(points, results):
        for row in summary:
            for k in row:
                if k not in value_cols and k not in grid_cols:
                    value_cols.append(k)
            rows.append({**point["_grid"], **row, "status": status})
    cols = grid_cols + value_cols + ["status"]
    out = TaskOutput({"sweep.csv": Table(cols, rows)})
    for name, chosen in cfg.raw["sweep"].get("outputs", {}).items():
        missing = [c for c in chosen if c not in cols]
        if missing:
            raise ConfigError(f"unknown output columns {missing}", field=f"sweep.outputs.{name}")
        out.tables[name] = Table(grid_cols + list(chosen) + ["status"], rows)
    failed = sum(1 for _, status in results if status != "ok")
    if failed:
        out.warnings.append(f"{failed} of {len(points)} sweep points failed")
    return out


def execute(config_path: str, out: str | None, seed: int | None, workers: int | None,
            expect_sweep: bool | None) -> int:
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    try:
        cfg = load(_resolve(config_path), seed=seed, output=out, workers=workers)
        if expect_sweep is True and cfg.task != "sweep":
            raise ConfigError("sweep needs a config with task 'sweep'", field="task")
        log.info("task %s, config %s", cfg.task, cfg.sha256[:12])
        output = sweep_output(cfg) if cfg.task == "sweep" else run_task(cfg.raw)
        manifest = write_outputs(Path(cfg.output), output, cfg, started)
    except (ConfigError, InvalidParameters) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    except NaeqError as exc:
        click.echo(f"solver error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_SOLVER
    for w in manifest["warnings"]:
        log.warning(w)
    click.echo(f"wrote {len(manifest['outputs'])} files to {cfg.output}")
    return EXIT_OK


def _resolve(path: str) -> str:
    """Config path, or the shipped preset of that name."""
    if Path(path).exists() or path not in PRESETS:
        return path
    return str(resources.files("naeq") / "presets" / f"{path}.json")


def _options(fn):
    fn = click.option("--workers", type=int, default=None, help="Concurrent sweep points.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the config seed.")(fn)
    fn = click.option("--out", "out", type=str, default=None, help="Output directory.")(fn)
    return click.argument("config")(fn)


@click.group()
@click.version_option(__version__, prog_name="naeq")
def main():
    """Biased-analytics equilibria: solve, audit, simulate and sweep scenarios."""
    level = getattr(logging, os.environ.get("NAEQ_LOG", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_options
def run(config, out, seed, workers):
    """Run CONFIG (a JSON file or a preset name)."""
    sys.exit(execute(config, out, seed, workers, None))


@main.command()
@_options
def sweep(config, out, seed, workers):
    """Run a sweep config over its parameter grid."""
    sys.exit(execute(config, out, seed, workers, True))


@main.command()
def presets():
    """List shipped preset configs."""
    for name in PRESETS:
        click.echo(name)
