"""Synthetic crowd-mapping experiments.

A square area holds ``N`` landmarks; a fraction ``p`` of them reuse the ID of
another landmark. Each simulated recording visits a random subset, perturbs
the positions with Gaussian noise, and expresses them in a scrambled frame
whose origin is the first visited landmark. The recordings then go through
the same relatedness / alignment / aggregation / evaluation path as real data.

Randomness is split into named streams keyed by ``(seed, stream, index)``.
Environment layout, per-record sampling and per-record noise are therefore
shared across configurations that differ only in ``sigma``, ``p``, or the
number of records, and results never depend on execution order.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from crowdmap.align import AlignmentConfig
from crowdmap.errors import EvaluationError, GenerationError, InputError
from crowdmap.evaluate import GroundTruth, positional_error
from crowdmap.geometry import Observation, Point2, Recording, RigidTransform2, rotation_matrix
from crowdmap.pipeline import build_map
from crowdmap.relatedness import RelatednessOptions

log = logging.getLogger(__name__)

CONDITIONS = ("few", "many", "mixed", "all")
FEW_RANGE = (3, 6)
MANY_RANGE = (12, 15)
MAX_PLACEMENT_ATTEMPTS = 10_000
BASE_TIME = 1_700_000_000.0  # synthetic epoch for record timestamps
_STREAMS = {"environment": 1, "record": 2}


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    return np.random.default_rng([seed % 2**63, _STREAMS[name], *index])


@dataclass(frozen=True)
class SimConfig:
    n_landmarks: int = 30
    duplication_ratio: float = 0.0
    noise_sigma: float = 0.5
    condition: str = "few"
    num_records: int = 3
    seed: int = 0
    area_side: float = 10.0
    min_separation: float = 1.0
    drop_duplicates_in_alignment: bool = False

    def __post_init__(self) -> None:
        if self.n_landmarks < 1:
            raise InputError("n_landmarks must be at least 1")
        if not 0.0 <= self.duplication_ratio < 1.0:
            raise InputError("duplication_ratio must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise InputError("noise_sigma must be non-negative")
        if self.condition not in CONDITIONS:
            raise InputError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.num_records < 1:
            raise InputError("num_records must be at least 1")
        if self.area_side <= 0 or self.min_separation < 0:
            raise InputError("area_side must be positive and min_separation non-negative")

    @property
    def n_unique(self) -> int:
        return max(1, math.floor((1.0 - self.duplication_ratio) * self.n_landmarks))


@dataclass(frozen=True)
class SimEnvironment:
    landmarks: tuple[tuple[str, Point2], ...]
    n_unique: int

    @property
    def ids(self) -> list[str]:
        return [lid for lid, _ in self.landmarks]

    @property
    def xy(self) -> np.ndarray:
        return np.array([p.as_array() for _, p in self.landmarks]).reshape(-1, 2)

    def duplicated_ids(self) -> set[str]:
        ids = self.ids
        return {lid for lid in ids if ids.count(lid) > 1}

    def ground_truth(self) -> GroundTruth:
        return GroundTruth(self.landmarks)


def landmark_id(k: int, n: int) -> str:
    return f"ID-{k:0{max(2, len(str(n - 1)))}d}"


def generate_environment(config: SimConfig, rng: np.random.Generator | None = None) -> SimEnvironment:
    if rng is None:
        rng = stream(config.seed, "environment")
    n = config.n_landmarks
    placed: list[np.ndarray] = []
    attempts = 0
    while len(placed) < n:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise GenerationError(
                f"placed only {len(placed)} of {n} landmarks with separation "
                f"{config.min_separation} m in a {config.area_side} m square; "
                "use a larger area or a smaller separation"
            )
        attempts += 1
        candidate = rng.uniform(0.0, config.area_side, 2)
        if all(np.linalg.norm(candidate - q) >= config.min_separation for q in placed):
            placed.append(candidate)

    n_unique = config.n_unique
    ids = [landmark_id(k, n) for k in range(n_unique)]
    ids += [ids[int(k)] for k in rng.integers(0, n_unique, n - n_unique)]
    landmarks = tuple((lid, Point2.from_array(xy)) for lid, xy in zip(ids, placed))
    return SimEnvironment(landmarks, n_unique)


def many_count(num_records: int) -> int:
    """Number of many-sized records under the mixed condition (10%, at least one)."""
    return max(1, math.floor(0.1 * num_records + 0.5))


def sample_record_size(
    condition: str,
    record_index: int,
    num_records: int,
    rng: np.random.Generator,
    n_landmarks: int = 30,
) -> int:
    if condition == "all":
        return n_landmarks
    if condition == "few":
        lo, hi = FEW_RANGE
    elif condition == "many":
        lo, hi = MANY_RANGE
    elif condition == "mixed":
        lo, hi = MANY_RANGE if record_index < many_count(num_records) else FEW_RANGE
    else:
        raise InputError(f"unknown condition {condition!r}")
    return int(rng.integers(lo, hi + 1))


@dataclass(frozen=True)
class SimRecord:
    recording: Recording
    landmark_indices: tuple[int, ...]
    # maps true environment coordinates into the record's frame (noise aside)
    frame: RigidTransform2


def synthesize(
    env: SimEnvironment,
    k: int,
    sigma: float,
    rng: np.random.Generator,
    recording_id: str = "rec-00",
) -> SimRecord:
    n = len(env.landmarks)
    if k > n:
        raise InputError(f"cannot visit {k} landmarks out of {n}")
    if k < 1:
        raise InputError("a record must visit at least one landmark")
    visit = rng.choice(n, size=k, replace=False)
    noise = rng.standard_normal((k, 2))
    theta = rng.uniform(-math.pi, math.pi)

    R = rotation_matrix(theta)
    noisy = env.xy[visit] + sigma * noise
    rotated = noisy @ R.T
    origin = rotated[0].copy()
    local = rotated - origin

    truth_origin = env.xy[visit[0]] @ R.T
    frame = RigidTransform2(theta, float(-truth_origin[0]), float(-truth_origin[1]))
    ids = env.ids
    observations = tuple(
        Observation(
            recording_id=recording_id,
            obs_index=m,
            label=ids[idx],
            position=Point2.from_array(local[m]),
            note=f"visited {ids[idx]}",
            timestamp=BASE_TIME + 60.0 * m,
        )
        for m, idx in enumerate(visit)
    )
    return SimRecord(Recording(recording_id, observations), tuple(int(v) for v in visit), frame)


def synthesize_record(env: SimEnvironment, k: int, sigma: float, rng: np.random.Generator,
                      recording_id: str = "rec-00") -> Recording:
    return synthesize(env, k, sigma, rng, recording_id).recording


def synthesize_records(config: SimConfig, env: SimEnvironment) -> list[SimRecord]:
    records = []
    n = len(env.landmarks)
    for r in range(config.num_records):
        rng = stream(config.seed, "record", r)
        k = min(n, sample_record_size(config.condition, r, config.num_records, rng, n))
        records.append(synthesize(env, k, config.noise_sigma, rng, f"rec-{r:03d}"))
    return records


@dataclass(frozen=True)
class ExperimentResult:
    positional_error: float
    coverage: int
    objective: float
    iterations: int
    degenerate: bool
    cluster_count: int
    matched_pairs: int
    diagnostics: dict = field(default_factory=dict)


def run_experiment(config: SimConfig, align_config: AlignmentConfig | None = None) -> ExperimentResult:
    """One full pipeline pass on synthetic data; deterministic given ``config.seed``."""
    env = generate_environment(config)
    records = synthesize_records(config, env)
    observations = [o for rec in records for o in rec.recording.observations]

    drop = config.drop_duplicates_in_alignment
    if align_config is None:
        align_config = AlignmentConfig(seed=config.seed)
    built = build_map(
        observations,
        "exact-id",
        RelatednessOptions(drop_duplicate_labels=drop),
        align_config,
        flagged_labels=sorted(env.duplicated_ids()) if drop else (),
    )
    result, landmark_map = built.result, built.landmark_map
    diagnostics = {"restart_index": result.restart_index, "converged": result.converged}
    try:
        report = positional_error(landmark_map, env.ground_truth())
        error, cover, matched = report.positional_error, report.coverage, report.matched_pairs
    except EvaluationError as exc:
        diagnostics["evaluation"] = str(exc)
        error, matched = float("nan"), 0
        cover = len({c.label for c in landmark_map.clusters} & set(env.ids))
    if result.degenerate:
        diagnostics["alignment"] = "degenerate: no cross-recording relatedness"
    return ExperimentResult(
        positional_error=error,
        coverage=cover,
        objective=result.objective,
        iterations=result.iterations,
        degenerate=result.degenerate,
        cluster_count=len(landmark_map.clusters),
        matched_pairs=matched,
        diagnostics=diagnostics,
    )


# --- sweeps -----------------------------------------------------------------

CSV_COLUMNS = (
    "condition", "n_landmarks", "p", "sigma", "num_records", "seed", "drop_duplicates",
    "positional_error_m", "coverage", "objective", "runtime_s", "status",
)
MEANS_COLUMNS = (
    "condition", "n_landmarks", "p", "sigma", "num_records", "drop_duplicates", "seeds",
    "mean_positional_error_m", "mean_coverage", "mean_objective", "mean_runtime_s",
)


@dataclass(frozen=True)
class SweepRow:
    config: SimConfig
    seed: int
    positional_error: float
    coverage: float
    objective: float
    runtime: float | None
    status: str = "ok"

    def csv_fields(self) -> list[str]:
        c = self.config
        return [
            c.condition, str(c.n_landmarks), _fmt(c.duplication_ratio), _fmt(c.noise_sigma),
            str(c.num_records), str(self.seed), str(int(c.drop_duplicates_in_alignment)),
            _fmt(self.positional_error), _fmt(self.coverage), _fmt(self.objective),
            "" if self.runtime is None else f"{self.runtime:.4f}", self.status,
        ]


def _fmt(value: float) -> str:
    if isinstance(value, int):
        return str(value)
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return repr(float(value))


def _config_key(c: SimConfig) -> tuple:
    return (c.condition, c.n_landmarks, c.duplication_ratio, c.noise_sigma, c.num_records,
            c.drop_duplicates_in_alignment)


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def means(self) -> list[dict]:
        grouped: dict[tuple, list[SweepRow]] = {}
        for row in self.rows:
            grouped.setdefault(_config_key(row.config), []).append(row)
        out = []
        for key, rows in grouped.items():
            ok = [r for r in rows if r.status == "ok"]

            def avg(values):
                values = [v for v in values if v is not None and not math.isnan(v)]
                return float(np.mean(values)) if values else float("nan")

            runtimes = [r.runtime for r in ok if r.runtime is not None]
            out.append({
                "condition": key[0], "n_landmarks": key[1], "p": key[2], "sigma": key[3],
                "num_records": key[4], "drop_duplicates": key[5], "seeds": len(ok),
                "mean_positional_error_m": avg([r.positional_error for r in ok]),
                "mean_coverage": avg([r.coverage for r in ok]),
                "mean_objective": avg([r.objective for r in ok]),
                "mean_runtime_s": avg(runtimes) if runtimes else None,
            })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(row.csv_fields())
        return buf.getvalue()

    def means_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(MEANS_COLUMNS)
        for m in self.means():
            writer.writerow([
                m["condition"], m["n_landmarks"], _fmt(m["p"]), _fmt(m["sigma"]), m["num_records"],
                int(m["drop_duplicates"]), m["seeds"], _fmt(m["mean_positional_error_m"]),
                _fmt(m["mean_coverage"]), _fmt(m["mean_objective"]),
                "" if m["mean_runtime_s"] is None else f"{m['mean_runtime_s']:.4f}",
            ])
        return buf.getvalue()


def _run_cell(args: tuple[SimConfig, bool]) -> SweepRow:
    config, timed = args
    start = time.perf_counter()
    try:
        result = run_experiment(config)
    except Exception as exc:  # a failed cell must not abort the sweep
        log.warning("sweep cell %s failed: %s", config, exc)
        return SweepRow(config, config.seed, float("nan"), float("nan"), float("nan"),
                        None, f"failed: {type(exc).__name__}: {exc}")
    runtime = time.perf_counter() - start if timed else None
    return SweepRow(config, config.seed, result.positional_error, result.coverage,
                    result.objective, runtime)


def expand_grid(grid: Sequence[SimConfig], seeds_per_config: int = 5) -> list[SimConfig]:
    if not grid:
        raise InputError("sweep grid must be non-empty")
    if seeds_per_config < 1:
        raise InputError("seeds_per_config must be at least 1")
    return [replace(c, seed=c.seed + s) for c in grid for s in range(seeds_per_config)]


def sweep(
    grid: Sequence[SimConfig],
    seeds_per_config: int = 5,
    jobs: int | None = 1,
    record_runtime: bool = True,
) -> SweepResult:
    """Run every (config, seed) cell. Row order is fixed regardless of ``jobs``.

    ``jobs=None`` uses every available processor. Cell seeds are
    ``config.seed + 0 .. seeds_per_config - 1``.
    """
    cells = [(c, record_runtime) for c in expand_grid(grid, seeds_per_config)]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(cells) == 1:
        rows = [_run_cell(cell) for cell in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells, chunksize=1))
    return SweepResult(tuple(rows))


def preset_grid(name: str, n_landmarks: int = 30) -> list[SimConfig]:
    """Configuration grids for the three published simulation figures."""
    conditions = ("few", "many", "mixed")
    if name == "fig7a":
        return [SimConfig(n_landmarks=n_landmarks, noise_sigma=0.5, condition=c, num_records=r)
                for c in conditions for r in (3, 6, 9, 12, 15)]
    if name == "fig7b":
        return [SimConfig(n_landmarks=n_landmarks, noise_sigma=s, condition=c, num_records=15)
                for c in conditions for s in (0.1, 0.5, 1.0)]
    if name == "fig7c":
        return [SimConfig(n_landmarks=n_landmarks, duplication_ratio=p, noise_sigma=0.5,
                          condition=c, num_records=15, drop_duplicates_in_alignment=d)
                for c in conditions for d in (False, True) for p in (0.0, 0.05, 0.1)]
    raise InputError(f"unknown preset {name!r}; choose fig7a, fig7b or fig7c")


def grid_from_lists(
    n: Iterable[int], p: Iterable[float], sigma: Iterable[float], condition: Iterable[str],
    records: Iterable[int], drop: Iterable[bool], seed: int = 0,
) -> list[SimConfig]:
    return [
        SimConfig(n_landmarks=nn, duplication_ratio=pp, noise_sigma=ss, condition=cc,
                  num_records=rr, seed=seed, drop_duplicates_in_alignment=dd)
        for cc in condition for nn in n for pp in p for ss in sigma for rr in records for dd in drop
    ]


def config_summary(config: SimConfig) -> dict:
    return asdict(config)
