"""Command-line front end: ``run``, ``batch``, ``compare`` and ``render``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .config import CONTROLLERS, PRESETS, ConfigError, SimConfig, config_from_header, config_header, parse_config
from .engine import BatchResult, InvariantError, batch, named_stream, run
from .world import generate_world

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4


def _config_from_args(args: argparse.Namespace) -> SimConfig:
    overrides: dict = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in (("seed", "seed"), ("robots", "n_robots"), ("steps", "steps"),
                      ("controller", "controller")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return parse_config(args.config, preset=args.preset, overrides=overrides)


def _echo(config: SimConfig) -> None:
    sys.stdout.write(config_header(config))


def cmd_run(config: SimConfig, out: Path) -> int:
    result = run(config)
    io.write_text(out / "trace.csv", io.trace_csv(result.trace, config))
    io.write_text(out / "belief_r.csv", io.belief_csv(result.r_table, config))
    io.write_text(out / "belief_e.csv", io.belief_csv(result.e_table, config))
    io.write_text(out / "belief.pgm", io.render_pgm(result.r_table, config.width, config.height,
                                                     config=config))
    io.write_text(out / "world.csv", io.world_csv(result.world, config))
    io.write_text(out / "summary.txt", io.summary_text(result))
    final = result.final
    print(f"{config.controller}: seed={config.seed} active_robots={final.active_robots} "
          f"explored_cells={final.explored_cells}")
    return EXIT_OK


def _runs_csv(result: BatchResult) -> str:
    rows = ["seed,active_robots,explored_cells,mean_bytes_per_robot,world_sha256"]
    for r in result.runs:
        mean_bytes = sum(rec.bytes_per_robot for rec in r.trace) / len(r.trace)
        rows.append(f"{r.seed},{r.final.active_robots},{r.final.explored_cells},{mean_bytes!r},"
                    f"{r.world_digest}")
    return config_header(result.config) + "\n".join(rows) + "\n"


def cmd_batch(config: SimConfig, n_runs: int, out: Path, jobs: int = 1) -> BatchResult:
    result = batch(config, n_runs, jobs=jobs)
    io.write_text(out / f"aggregate_{config.controller}.csv", io.aggregate_csv(result))
    io.write_text(out / f"runs_{config.controller}.csv", _runs_csv(result))
    finals = result.final_values("active_robots"), result.final_values("explored_cells")
    print(f"{config.controller}: runs={n_runs} mean_active={finals[0].mean():.3f} "
          f"mean_explored={finals[1].mean():.3f}")
    return result


def cmd_compare(config: SimConfig, n_runs: int, controllers: list[str], out: Path,
                jobs: int = 1) -> dict[str, BatchResult]:
    results = {c: batch(config.replace(controller=c), n_runs, jobs=jobs) for c in controllers}
    digests = {c: [r.world_digest for r in res.runs] for c, res in results.items()}
    reference = digests[controllers[0]]
    for c, d in digests.items():
        if d != reference:
            raise InvariantError(f"paired seeds produced different worlds for {c}")

    for c, res in results.items():
        io.write_text(out / f"aggregate_{c}.csv", io.aggregate_csv(res))
    world_rows = ["seed,controller,world_sha256"]
    for c, res in results.items():
        world_rows += [f"{r.seed},{c},{r.world_digest}" for r in res.runs]
    io.write_text(out / "worlds.csv", config_header(config) + "\n".join(world_rows) + "\n")

    table = ["controller,mean_active_robots,mean_explored_cells,mean_bytes_per_robot_tick"]
    for c, res in results.items():
        table.append(
            f"{c},{float(res.final_values('active_robots').mean())!r},"
            f"{float(res.final_values('explored_cells').mean())!r},"
            f"{float(res.mean['bytes_per_robot'].mean())!r}"
        )
    io.write_text(out / "comparison.csv", config_header(config) + "\n".join(table) + "\n")

    print(f"{'controller':<10} {'active':>8} {'explored':>9} {'bytes/tick':>11}")
    for row in table[1:]:
        c, active, explored, nbytes = row.split(",")
        print(f"{c:<10} {float(active):8.2f} {float(explored):9.1f} {float(nbytes):11.1f}")
    return results


def cmd_render(belief: Path, out: Path, overlay: bool = False) -> None:
    text = belief.read_text()
    try:
        table = io.table_from_csv(text)
    except ValueError as exc:
        raise ConfigError(f"{belief}: {exc}") from None
    try:
        config = config_from_header(text)
    except ConfigError:
        config = None
    if config is not None:
        width, height = config.width, config.height
    else:
        width = max((x for x, _ in table), default=0) + 1
        height = max((y for _, y in table), default=0) + 1
    world = None
    if overlay and config is not None:
        world = generate_world(config, named_stream(config.seed, "world"))
    io.write_text(out, io.render_pgm(table, width, height, world=world, config=config))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dora-sim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=False):
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--robots", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--controller", choices=CONTROLLERS)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")
        p.add_argument("--out", type=Path, default=Path("out"))
        if runs:
            p.add_argument("--runs", type=int, default=50)
            p.add_argument("--jobs", type=int, default=1)

    common(sub.add_parser("run", help="single run with full exports"))
    common(sub.add_parser("batch", help="repeat one controller over consecutive seeds"), runs=True)
    compare = sub.add_parser("compare", help="paired-seed comparison of controllers")
    common(compare, runs=True)
    compare.add_argument("--controllers", default=",".join(CONTROLLERS))
    render = sub.add_parser("render", help="belief CSV to PGM")
    render.add_argument("belief", type=Path)
    render.add_argument("--out", type=Path, default=Path("belief.pgm"))
    render.add_argument("--overlay", action="store_true", help="draw sources and obstacles")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "render":
            cmd_render(args.belief, args.out, args.overlay)
            return EXIT_OK
        config = _config_from_args(args)
        _echo(config)
        if args.command == "run":
            return cmd_run(config, args.out)
        if args.runs < 1:
            raise ConfigError("--runs must be >= 1")
        if args.command == "batch":
            cmd_batch(config, args.runs, args.out, args.jobs)
        else:
            controllers = [c.strip() for c in args.controllers.split(",") if c.strip()]
            unknown = [c for c in controllers if c not in CONTROLLERS]
            if unknown or not controllers:
                raise ConfigError(f"unknown controllers: {unknown}")
            cmd_compare(config, args.runs, controllers, args.out, args.jobs)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
