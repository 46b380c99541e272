"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 degenerate alignment or unmatchable
evaluation, 3 external-service failure.

Settings resolve as command-line flag > environment variable > ``--config``
JSON file > built-in default. Service endpoints are read only from flags or
the environment.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from crowdmap import io as fileio
from crowdmap.align import AlignmentConfig
from crowdmap.errors import CrowdmapError, EvaluationError, InputError, ServiceError
from crowdmap.evaluate import positional_error
from crowdmap.identify import CategoryTable
from crowdmap.pipeline import build_map, ingest
from crowdmap.relatedness import PROVIDERS, RelatednessOptions
from crowdmap.render import render_svg
from crowdmap.simulate import CONDITIONS, SimConfig, grid_from_lists, preset_grid, sweep
from crowdmap.trajectory import StationaryParams

log = logging.getLogger("crowdmap")

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_SERVICE = 0, 1, 2, 3
LABELING_ENV = "LABELING_ENDPOINT"
EMBEDDING_ENV = "EMBEDDING_ENDPOINT"
TIMEOUT_ENV = "CROWDMAP_HTTP_TIMEOUT"
ENV_KEYS = {
    "labeling_endpoint": LABELING_ENV,
    "embedding_endpoint": EMBEDDING_ENV,
    "timeout": TIMEOUT_ENV,
}
ENDPOINT_KEYS = {"labeling_endpoint", "embedding_endpoint"}

DEFAULTS = {
    "speed_threshold": 0.2,
    "window": 3.0,
    "timeout": 10.0,
    "provider": "exact-id",
    "tau": 0.5,
    "sparsify_below": 0.1,
    "learning_rate": 0.05,
    "max_iters": 10_000,
    "rel_tol": 1e-8,
    "restarts": 8,
    "restart_translation_scale": 5.0,
    "seed": 0,
    "link_threshold": 0.5,
    "n": "30",
    "p": "0",
    "sigma": "0.5",
    "condition": "few",
    "records": "3",
    "seeds": 5,
}


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 2 is reserved for degenerate problems
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


class Settings:
    """Flag > environment > config file > default lookup over parsed args."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        section = config.get(args.command, {}) if isinstance(config.get(args.command), dict) else {}
        self.config = {**{k: v for k, v in config.items() if not isinstance(v, dict)}, **section}

    def __call__(self, name: str, cast=None):
        value = getattr(self.args, name, None)
        if value is None and name in ENV_KEYS:
            value = os.environ.get(ENV_KEYS[name]) or None
        if value is None and name not in ENDPOINT_KEYS:
            value = self.config.get(name)
        if value is None:
            value = DEFAULTS.get(name)
        if value is not None and cast is not None:
            try:
                value = cast(value)
            except (TypeError, ValueError) as exc:
                raise InputError(f"bad value for {name}: {value!r}") from exc
        return value


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return data


def _bool_setting(value) -> bool:
    if isinstance(value, str):
        return value.lower() in ("1", "true", "yes", "on")
    return bool(value)


def _write_text(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# --- commands ----------------------------------------------------------------


def cmd_ingest(args, settings: Settings) -> int:
    recordings = fileio.read_recordings(args.recordings)
    table = CategoryTable.load(args.categories) if args.categories else None
    endpoint = settings("labeling_endpoint")
    observations = ingest(
        recordings,
        table,
        endpoint=endpoint,
        categories=args.category or None,
        params=StationaryParams(settings("speed_threshold", float), settings("window", float)),
        timeout=settings("timeout", float),
    )
    unlabeled = sum(not o.labeled for o in observations)
    if args.out in (None, "-"):
        for o in observations:
            sys.stdout.write(json.dumps(fileio.observation_to_json(o)) + "\n")
    else:
        fileio.write_observations(observations, args.out)
    print(f"{len(observations)} observations from {len(recordings)} recordings; "
          f"{unlabeled} without a label", file=sys.stderr)
    return EXIT_OK


def cmd_align(args, settings: Settings) -> int:
    observations = fileio.read_observations(args.observations)
    if not observations:
        raise InputError(f"{args.observations}: no observations")
    options = RelatednessOptions(
        exclude_same_recording=not _bool_setting(settings("keep_same_recording") or False),
        sparsify_below=settings("sparsify_below", float),
        drop_duplicate_labels=_bool_setting(settings("drop_duplicates") or False),
        tau=settings("tau", float),
    )
    config = AlignmentConfig(
        learning_rate=settings("learning_rate", float),
        max_iters=settings("max_iters", int),
        rel_tol=settings("rel_tol", float),
        restarts=settings("restarts", int),
        restart_translation_scale=settings("restart_translation_scale", float),
        seed=settings("seed", int),
    )
    provider = settings("provider")
    if provider not in PROVIDERS:
        raise InputError(f"unknown provider {provider!r}; choose from {', '.join(PROVIDERS)}")
    built = build_map(
        observations,
        provider,
        options,
        config,
        settings("link_threshold", float),
        endpoint=settings("embedding_endpoint"),
        timeout=settings("timeout", float),
    )
    result = built.result
    if result.degenerate:
        print("alignment is degenerate: no relatedness links observations across recordings; "
              "check labels or lower --sparsify-below", file=sys.stderr)
        return EXIT_DEGENERATE
    if args.transforms_out:
        payload = fileio.transforms_to_json(result, built.recording_ids)
        Path(args.transforms_out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.map_out:
        fileio.write_map(built.landmark_map, args.map_out)
    print(f"objective: {result.objective:.6g}")
    print(f"iterations: {result.iterations} (restart {result.restart_index}"
          f"{'' if result.converged else ', not converged'})")
    print(f"clusters: {len(built.landmark_map.clusters)}")
    return EXIT_OK


def cmd_eval(args, settings: Settings) -> int:
    landmark_map = fileio.read_map(args.map)
    truth = fileio.read_ground_truth(args.truth)
    report = positional_error(landmark_map, truth)
    print(f"positional error: {report.positional_error:.4f} m")
    print(f"coverage: {report.coverage} / {len(set(truth.ids))}")
    print(f"matched pairs: {report.matched_pairs}")
    print(f"clusters: {report.cluster_count}")
    print(f"scale: {report.scale:.6f}")
    if args.json_out:
        _write_text(json.dumps(report.as_dict(), indent=2) + "\n", args.json_out)
    return EXIT_OK


def _split(value, cast):
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [v for v in str(value).split(",") if v.strip()]
    try:
        return [cast(v.strip() if isinstance(v, str) else v) for v in items]
    except ValueError as exc:
        raise InputError(f"bad list value {value!r}") from exc


def _drop_options(value) -> list[bool]:
    if value in (None, False, "off"):
        return [False]
    if value in (True, "on"):
        return [True]
    if value == "both":
        return [False, True]
    raise InputError(f"--drop-duplicates must be on, off or both, got {value!r}")


def _run_sweep(grid, args, settings: Settings) -> int:
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    result = sweep(grid, settings("seeds", int), jobs=jobs, record_runtime=not args.no_runtime)
    _write_text(result.to_csv(), args.out)
    if args.out not in (None, "-"):
        out = Path(args.out)
        out.with_name(out.stem + "_means.csv").write_text(result.means_csv(), encoding="utf-8")
    failed = sum(r.status != "ok" for r in result.rows)
    if failed:
        print(f"{failed} of {len(result.rows)} cells failed", file=sys.stderr)
    return EXIT_OK


def _list_grid(args, settings: Settings) -> list[SimConfig]:
    conditions = _split(settings("condition"), str)
    bad = [c for c in conditions if c not in CONDITIONS]
    if bad:
        raise InputError(f"unknown condition(s) {bad}; choose from {', '.join(CONDITIONS)}")
    return grid_from_lists(
        n=_split(settings("n"), int),
        p=_split(settings("p"), float),
        sigma=_split(settings("sigma"), float),
        condition=conditions,
        records=_split(settings("records"), int),
        drop=_drop_options(settings("drop_duplicates")),
        seed=settings("seed", int),
    )


def cmd_simulate(args, settings: Settings) -> int:
    grid = _list_grid(args, settings)
    if len(grid) != 1:
        raise UsageError("simulate takes single values; use 'sweep' for lists")
    return _run_sweep(grid, args, settings)


def cmd_sweep(args, settings: Settings) -> int:
    if args.preset:
        explicit = [f for f in ("n", "p", "sigma", "condition", "records") if getattr(args, f) is not None]
        if explicit or args.drop_duplicates is not None:
            raise UsageError("--preset fixes the grid; drop the explicit grid flags")
        grid = preset_grid(args.preset)
    else:
        grid = _list_grid(args, settings)
    return _run_sweep(grid, args, settings)


def cmd_render(args, settings: Settings) -> int:
    landmark_map = fileio.read_map(args.map)
    truth = fileio.read_ground_truth(args.truth) if args.truth else None
    _write_text(render_svg(landmark_map, truth), args.out)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def _add_sim_flags(p: argparse.ArgumentParser, lists: bool) -> None:
    kind = "comma-separated list" if lists else "value"
    p.add_argument("--n", help=f"landmark count ({kind}; default 30)")
    p.add_argument("--p", help=f"duplication ratio ({kind}; default 0)")
    p.add_argument("--sigma", help=f"noise std in meters ({kind}; default 0.5)")
    p.add_argument("--condition", help=f"few, many, mixed or all ({kind}; default few)")
    p.add_argument("--records", help=f"records per experiment ({kind}; default 3)")
    p.add_argument("--drop-duplicates", nargs="?", const="on", choices=["on", "off", "both"],
                   help="ignore duplicated IDs during alignment")
    p.add_argument("--seeds", type=int, help="seeds per configuration (default 5)")
    p.add_argument("--seed", type=int, help="first seed (default 0)")
    p.add_argument("--jobs", type=int, help="worker processes (default: all processors)")
    p.add_argument("--no-runtime", action="store_true",
                   help="leave runtime_s empty so the CSV is byte-reproducible")
    p.add_argument("--out", help="CSV path (default stdout); a *_means.csv is written beside it")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crowdmap", description="Collective semantic landmark mapping.")
    parser.add_argument("--config", help="JSON file with default settings")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="recordings JSONL -> observations JSONL")
    p.add_argument("recordings")
    p.add_argument("--categories", help="JSON category table {label: [keywords]}")
    p.add_argument("--category", action="append", help="category offered to the labeling service")
    p.add_argument("--labeling-endpoint", dest="labeling_endpoint")
    p.add_argument("--timeout", type=float)
    p.add_argument("--speed-threshold", dest="speed_threshold", type=float)
    p.add_argument("--window", type=float)
    p.add_argument("--out", help="observations JSONL (default stdout)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("align", help="observations -> transforms + landmark map")
    p.add_argument("observations")
    p.add_argument("--provider", choices=PROVIDERS)
    p.add_argument("--embedding-endpoint", dest="embedding_endpoint")
    p.add_argument("--timeout", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--sparsify-below", dest="sparsify_below", type=float)
    p.add_argument("--keep-same-recording", dest="keep_same_recording", action="store_const", const=True)
    p.add_argument("--drop-duplicates", dest="drop_duplicates", action="store_const", const=True)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--restarts", type=int)
    p.add_argument("--restart-translation-scale", dest="restart_translation_scale", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--link-threshold", dest="link_threshold", type=float)
    p.add_argument("--transforms-out", dest="transforms_out")
    p.add_argument("--map-out", dest="map_out")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="score a map against ground truth")
    p.add_argument("map")
    p.add_argument("truth")
    p.add_argument("--json-out", dest="json_out", help="write the JSON report here ('-' for stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="one synthetic configuration over several seeds")
    _add_sim_flags(p, lists=False)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="grid of synthetic configurations")
    p.add_argument("--preset", choices=["fig7a", "fig7b", "fig7c"])
    _add_sim_flags(p, lists=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="landmark map -> SVG")
    p.add_argument("map")
    p.add_argument("--truth", help="ground-truth JSON to overlay")
    p.add_argument("--out", help="SVG path (default stdout)")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        settings = Settings(args, _load_config(args.config))
        return args.func(args, settings)
    except ServiceError as exc:
        print(f"error: external service failed: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (CrowdmapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
