"""Align per-recording coordinate frames by minimizing a relatedness-weighted spread.

Each recording ``k`` gets a rigid transform ``(theta_k, t_k)`` and every
observation ``i`` in it lands at ``q_i = R(theta_k) p_i + t_k`` in the shared
frame. The objective is::

    L = sum_{i != j} S_ij * |q_i - q_j|^2

summed over ordered pairs, i.e. twice the sum over unordered pairs. The first
recording is pinned to the identity; that fixes the global rigid motion the
objective is blind to and defines the shared frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from crowdmap.errors import InputError
from crowdmap.geometry import Observation, Positions, RigidTransform2, ordered_recording_ids
from crowdmap.relatedness import RelatednessMatrix

STEP_FLOOR = 1e-12
MAX_STEP = 1.0


@dataclass(frozen=True)
class AlignmentConfig:
    learning_rate: float = 0.05
    max_iters: int = 10_000
    rel_tol: float = 1e-8
    restarts: int = 8
    restart_translation_scale: float = 5.0
    seed: int = 0
    # objective values at or below this count as exact coincidence (m^2)
    abs_tol: float = 1e-20
    # restarts whose objectives agree to this relative tolerance are tied
    tie_rtol: float = 1e-6

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")
        if not self.rel_tol > 0:
            raise InputError("rel_tol must be positive")
        if self.restarts < 1:
            raise InputError("restarts must be at least 1")
        if self.max_iters < 0:
            raise InputError("max_iters must be non-negative")


@dataclass(frozen=True)
class AlignmentResult:
    transforms: dict[str, RigidTransform2]
    objective: float
    iterations: int
    restart_index: int
    degenerate: bool = False
    converged: bool = True
    history: tuple[float, ...] = ()
    restart_objectives: tuple[float, ...] = ()


@dataclass(frozen=True)
class AlignmentProblem:
    observations: tuple[Observation, ...]
    relatedness: RelatednessMatrix
    recording_ids: tuple[str, ...] = ()
    _pos: Positions = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        obs = tuple(self.observations)
        object.__setattr__(self, "observations", obs)
        rids = tuple(self.recording_ids) or ordered_recording_ids(obs)
        object.__setattr__(self, "recording_ids", rids)
        if len(set(rids)) != len(rids):
            raise InputError("recording_ids must be distinct")
        if self.relatedness.n != len(obs):
            raise InputError(
                f"relatedness is {self.relatedness.n}x{self.relatedness.n} "
                f"but there are {len(obs)} observations"
            )
        known = set(rids)
        for o in obs:
            if o.recording_id not in known:
                raise InputError(f"observation recording {o.recording_id!r} not in recording_ids")
        object.__setattr__(self, "_pos", Positions.from_observations(obs, rids))

    @classmethod
    def from_observations(cls, observations, relatedness, recording_ids=None) -> AlignmentProblem:
        return cls(tuple(observations), relatedness, tuple(recording_ids or ()))

    @property
    def n_recordings(self) -> int:
        return len(self.recording_ids)

    def kernel(self) -> _Kernel:
        i, j, w = self.relatedness.pairs()
        return _Kernel(self._pos.xy, self._pos.rec, self.n_recordings, i, j, w)

    def params_from(self, transforms: Mapping[str, RigidTransform2]) -> np.ndarray:
        missing = [rid for rid in self.recording_ids if rid not in transforms]
        if missing:
            raise InputError(f"no transform for recordings {missing}")
        return np.array(
            [[transforms[r].theta, transforms[r].tx, transforms[r].ty] for r in self.recording_ids],
            dtype=float,
        ).reshape(-1, 3)

    def has_cross_relatedness(self) -> bool:
        i, j, _ = self.relatedness.pairs()
        rec = self._pos.rec
        return bool(np.any(rec[i] != rec[j]))


class _Kernel:
    """Vectorized objective/gradient over the nonzero pairs.

    ``params`` is an ``(R, 3)`` array of ``(theta, tx, ty)`` per recording.
    """

    def __init__(self, xy, rec, n_rec, i, j, w):
        self.xy = np.asarray(xy, dtype=float)
        self.rec = np.asarray(rec, dtype=np.intp)
        self.n = len(self.xy)
        self.n_rec = n_rec
        self.i = np.asarray(i, dtype=np.intp)
        self.j = np.asarray(j, dtype=np.intp)
        self.w = np.asarray(w, dtype=float)

    def rotated(self, params: np.ndarray) -> np.ndarray:
        theta = params[self.rec, 0]
        c, s = np.cos(theta), np.sin(theta)
        x, y = self.xy[:, 0], self.xy[:, 1]
        return np.column_stack((c * x - s * y, s * x + c * y))

    def positions(self, params: np.ndarray) -> np.ndarray:
        return self.rotated(params) + params[self.rec, 1:]

    def value(self, params: np.ndarray) -> float:
        if len(self.w) == 0:
            return 0.0
        q = self.positions(params)
        d = q[self.i] - q[self.j]
        return 2.0 * float(np.dot(self.w, np.einsum("ij,ij->i", d, d)))

    def value_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        grad = np.zeros((self.n_rec, 3))
        if len(self.w) == 0:
            return 0.0, grad
        rp = self.rotated(params)
        q = rp + params[self.rec, 1:]
        d = q[self.i] - q[self.j]
        value = 2.0 * float(np.dot(self.w, np.einsum("ij,ij->i", d, d)))

        # dL/dq per observation: each unordered pair contributes 4 w d to q_i and -4 w d to q_j
        f = 4.0 * self.w[:, None] * d
        gq = np.empty((self.n, 2))
        for axis in range(2):
            gq[:, axis] = np.bincount(self.i, f[:, axis], self.n) - np.bincount(
                self.j, f[:, axis], self.n
            )
        # dq/dtheta = R'(theta) p = perp(R p)
        g_theta = -gq[:, 0] * rp[:, 1] + gq[:, 1] * rp[:, 0]
        grad[:, 0] = np.bincount(self.rec, g_theta, self.n_rec)
        grad[:, 1] = np.bincount(self.rec, gq[:, 0], self.n_rec)
        grad[:, 2] = np.bincount(self.rec, gq[:, 1], self.n_rec)
        return value, grad


def _as_transforms(recording_ids, params) -> dict[str, RigidTransform2]:
    return {
        rid: RigidTransform2(float(p[0]), float(p[1]), float(p[2]))
        for rid, p in zip(recording_ids, params)
    }


def objective(problem: AlignmentProblem, transforms: Mapping[str, RigidTransform2]) -> float:
    return problem.kernel().value(problem.params_from(transforms))


def gradient(
    problem: AlignmentProblem, transforms: Mapping[str, RigidTransform2]
) -> dict[str, np.ndarray]:
    """Per-recording ``[dL/dtheta, dL/dtx, dL/dty]``, gauge recording included."""
    _, grad = problem.kernel().value_and_grad(problem.params_from(transforms))
    return {rid: grad[k].copy() for k, rid in enumerate(problem.recording_ids)}


def _centering(kernel: _Kernel) -> tuple[np.ndarray, np.ndarray]:
    """Per-recording pivots and diagonal scaling for the descent.

    Rotating each recording about the relatedness-weighted centroid of its
    observations decouples theta from translation at first order; the scale
    is the Gauss-Newton diagonal in that parameterization. It depends only on
    distances inside each recording, so it is constant during the descent.
    """
    cross = kernel.rec[kernel.i] != kernel.rec[kernel.j]
    i, j, w = kernel.i[cross], kernel.j[cross], kernel.w[cross]
    weight = np.bincount(i, w, kernel.n) + np.bincount(j, w, kernel.n)
    total = np.bincount(kernel.rec, weight, kernel.n_rec)
    counts = np.bincount(kernel.rec, minlength=kernel.n_rec).astype(float)

    pivots = np.zeros((kernel.n_rec, 2))
    for axis in range(2):
        wsum = np.bincount(kernel.rec, weight * kernel.xy[:, axis], kernel.n_rec)
        plain = np.bincount(kernel.rec, kernel.xy[:, axis], kernel.n_rec)
        pivots[:, axis] = np.where(total > 0, wsum / np.where(total > 0, total, 1.0),
                                   plain / np.maximum(counts, 1.0))

    centered = kernel.xy - pivots[kernel.rec]
    spread = np.bincount(kernel.rec, weight * np.einsum("ij,ij->i", centered, centered), kernel.n_rec)
    scale = np.ones((kernel.n_rec, 3))
    scale[:, 0] = np.where(spread > 0, 4.0 * spread, 1.0)
    scale[:, 1] = scale[:, 2] = np.where(total > 0, 4.0 * total, 1.0)
    return pivots, scale


def _descend(kernel: _Kernel, x0: np.ndarray, scale: np.ndarray, config: AlignmentConfig):
    """Scaled gradient descent with halving line search. Row 0 (gauge) stays fixed."""
    x = x0.copy()
    value, grad = kernel.value_and_grad(x)
    history = [value]
    step = config.learning_rate
    max_step = max(MAX_STEP, config.learning_rate)
    converged = value <= config.abs_tol
    iterations = 0
    while not converged and iterations < config.max_iters:
        grad[0] = 0.0
        direction = grad / scale
        if not np.any(direction):
            converged = True
            break
        while True:
            trial = x - step * direction
            trial_value = kernel.value(trial)
            if trial_value <= value:
                break
            step *= 0.5
            if step < STEP_FLOOR:
                break
        if step < STEP_FLOOR:
            # no descent possible at machine precision
            converged = True
            break
        iterations += 1
        change = value - trial_value
        x = trial
        value, grad = kernel.value_and_grad(x)
        history.append(value)
        if value <= config.abs_tol or change <= config.rel_tol * abs(history[-2]):
            converged = True
        step = min(2.0 * step, max_step)
    return x, value, iterations, converged, tuple(history)


def _to_centered(params: np.ndarray, pivots: np.ndarray) -> np.ndarray:
    # q = R p + t = R (p - c) + (t + R c)
    out = params.copy()
    c, s = np.cos(params[:, 0]), np.sin(params[:, 0])
    out[:, 1] += c * pivots[:, 0] - s * pivots[:, 1]
    out[:, 2] += s * pivots[:, 0] + c * pivots[:, 1]
    return out


def _from_centered(params: np.ndarray, pivots: np.ndarray) -> np.ndarray:
    out = params.copy()
    c, s = np.cos(params[:, 0]), np.sin(params[:, 0])
    out[:, 1] -= c * pivots[:, 0] - s * pivots[:, 1]
    out[:, 2] -= s * pivots[:, 0] + c * pivots[:, 1]
    return out


def restart_rng(seed: int, restart_index: int) -> np.random.Generator:
    return np.random.default_rng([seed % 2**63, restart_index])


def initial_params(n_rec: int, restart_index: int, config: AlignmentConfig) -> np.ndarray:
    params = np.zeros((n_rec, 3))
    if restart_index == 0 or n_rec < 2:
        return params
    rng = restart_rng(config.seed, restart_index)
    m = n_rec - 1
    params[1:, 0] = rng.uniform(-math.pi, math.pi, m)
    scale = config.restart_translation_scale
    params[1:, 1:] = rng.uniform(-scale, scale, (m, 2))
    return params


@dataclass(frozen=True)
class RestartRun:
    value: float
    iterations: int
    converged: bool
    history: tuple[float, ...]
    transforms: dict[str, RigidTransform2]


def _prepare(kernel: _Kernel):
    pivots, scale = _centering(kernel)
    centered = _Kernel(kernel.xy - pivots[kernel.rec], kernel.rec, kernel.n_rec, kernel.i, kernel.j, kernel.w)
    return pivots, scale, centered


def run_restart(
    problem: AlignmentProblem, config: AlignmentConfig, restart_index: int, prepared=None
) -> RestartRun:
    """One descent from the start point of ``restart_index``."""
    kernel = problem.kernel()
    pivots, scale, centered = prepared if prepared is not None else _prepare(kernel)
    start = _to_centered(initial_params(problem.n_recordings, restart_index, config), pivots)
    x, _, iterations, converged, history = _descend(centered, start, scale, config)
    params = _from_centered(x, pivots)
    params[0] = 0.0
    transforms = _as_transforms(problem.recording_ids, params)
    # re-evaluate after theta wrapping so the reported value matches objective()
    value = kernel.value(problem.params_from(transforms))
    return RestartRun(value, iterations, converged, history, transforms)


def optimize(problem: AlignmentProblem, config: AlignmentConfig = AlignmentConfig()) -> AlignmentResult:
    """Minimize the alignment objective over all non-gauge recordings.

    Every restart runs to convergence; the lowest final objective wins, and
    objectives within ``config.tie_rtol`` of the best count as ties resolved
    toward the lowest restart index.
    """
    n_rec = problem.n_recordings
    if n_rec == 0:
        raise InputError("alignment needs at least one recording")
    kernel = problem.kernel()
    identity = np.zeros((n_rec, 3))

    if n_rec == 1 or not problem.has_cross_relatedness():
        value = kernel.value(identity)
        return AlignmentResult(
            transforms=_as_transforms(problem.recording_ids, identity),
            objective=value,
            iterations=0,
            restart_index=0,
            degenerate=n_rec > 1,
            history=(value,),
            restart_objectives=(value,),
        )

    prepared = _prepare(kernel)
    runs = [run_restart(problem, config, r, prepared) for r in range(config.restarts)]

    values = [run.value for run in runs]
    best = min(values)
    tol = config.tie_rtol * max(best, config.abs_tol)
    winner = next(r for r, v in enumerate(values) if v - best <= tol)
    run = runs[winner]
    return AlignmentResult(
        transforms=run.transforms,
        objective=run.value,
        iterations=run.iterations,
        restart_index=winner,
        degenerate=False,
        converged=run.converged,
        history=run.history,
        restart_objectives=tuple(values),
    )


def shared_frame_positions(
    observations: Sequence[Observation], transforms: Mapping[str, RigidTransform2]
) -> np.ndarray:
    """``(n, 2)`` array of every observation mapped into the shared frame."""
    out = np.empty((len(observations), 2))
    for k, o in enumerate(observations):
        T = transforms.get(o.recording_id)
        if T is None:
            raise InputError(f"no transform for recording {o.recording_id!r}")
        out[k] = T.apply_array(o.position.as_array())
    return out
