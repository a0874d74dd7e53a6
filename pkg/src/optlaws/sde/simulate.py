"""Euler-Maruyama simulation of the SGD and Adam diffusions.

The step size equals the rescaling parameter eta0, which makes one EM step
of the SDE coincide exactly with one update of the discrete optimizer:

    SGD   x <- x - eta0*eta_k*(grad f(x) + z),           z ~ N(0, Sigma)
    Adam  x <- x - eta0*eta_k * m / sqrt(v + eps)
          m <- (1 - c1*eta0*eta_k) m + c1*eta0*eta_k*(grad f(x) + z)
          v <- (1 - c2*eta0*eta_k) v + c2*eta0*eta_k * diag(Sigma)

i.e. the Adam averaging constants are beta1 = 1 - c1hat*eta_k and
beta2 = 1 - c2hat*eta_k with c1hat = c1*eta0, c2hat = c2*eta0, and the
momentum noise coefficient c1' = sqrt(c1*c1hat) of the SDE scales the same
Gaussian increments.

Each path owns a counter-based Philox stream derived from
(seed, path index), so ensembles are reproducible and independent of how
paths are grouped into blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..schedule import Schedule
from .noise import NoiseModel
from .objectives import Objective

__all__ = [
    "SdeConfig",
    "StatSummary",
    "SimulationReport",
    "SimulationDiverged",
    "simulate",
    "path_rng",
]

DEFAULT_BLOCK_BYTES = 64 * 2**20


class SimulationDiverged(RuntimeError):
    """A path produced non-finite values; shrink eta0."""

    def __init__(self, path_index: int):
        super().__init__(
            f"diverged path: path {path_index} produced non-finite values "
            "(reduce eta0 or the peak rate)"
        )
        self.path_index = path_index


@dataclass(frozen=True)
class SdeConfig:
    """Simulation parameters.

    ``eta0`` is both the SDE rescaling parameter and the EM step; the
    horizon defaults to the schedule's full span.  The Adam drift constants
    c1, c2 translate to averaging factors via c1hat = c1*eta0 and
    c2hat = c2*eta0, and the momentum diffusion uses
    c1' = sqrt(c1*c1hat) = c1*sqrt(eta0).
    """

    schedule: Schedule
    eta0: float
    n_paths: int
    seed: int = 0
    algorithm: str = "sgd"  # "sgd" | "adam"
    horizon: Optional[float] = None
    c1: float = 1.0
    c2: float = 1.0
    eps: float = 1e-8
    trap_eps: tuple[float, ...] = ()
    x0: Optional[np.ndarray] = None
    track_mean_momentum: bool = False
    record_traces: bool = False

    def __post_init__(self):
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "adam" and self.eps <= 0:
            raise ValueError("adam needs eps > 0")
        for e in self.trap_eps:
            if e <= 0:
                raise ValueError(f"trapping radius must be positive, got {e}")
        T = self.schedule.S if self.horizon is None else self.horizon
        if not 0 < T <= self.schedule.S:
            raise ValueError(f"horizon must lie in (0, S={self.schedule.S}], got {T}")

    @property
    def T(self) -> float:
        return self.schedule.S if self.horizon is None else self.horizon

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.eta0)))

    @property
    def c1_hat(self) -> float:
        return self.c1 * self.eta0

    @property
    def c2_hat(self) -> float:
        return self.c2 * self.eta0

    @property
    def c1_prime(self) -> float:
        return math.sqrt(self.c1 * self.c1_hat)


@dataclass(frozen=True)
class StatSummary:
    mean: float
    std_err: float
    n: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_err": self.std_err, "n": self.n}


@dataclass
class SimulationReport:
    """Ensemble statistics of one simulation run."""

    algorithm: str
    n_paths: int
    n_steps: int
    eta0: float
    seed: int
    eta_weight: float  # discrete approximation of the area integral of eta
    stats: dict
    trapping: dict
    v_min: Optional[float] = None
    max_abs_coordinate: float = 0.0
    mean_momentum: Optional[dict] = None
    traces: Optional[list] = None

    def as_dict(self) -> dict:
        out = {
            "algorithm": self.algorithm,
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "eta0": self.eta0,
            "seed": self.seed,
            "eta_weight": self.eta_weight,
            "stats": {k: v.as_dict() for k, v in self.stats.items()},
            "trapping": {
                str(eps): summ.as_dict() for eps, summ in self.trapping.items()
            },
            "max_abs_coordinate": self.max_abs_coordinate,
        }
        if self.v_min is not None:
            out["v_min"] = self.v_min
        return out


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream for one path, derived from (seed, path index)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(path_index,))
    return np.random.Generator(np.random.Philox(ss))


def _summary(samples: np.ndarray) -> StatSummary:
    n = samples.size
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return StatSummary(mean, se, n)


def simulate(
    objective: Objective,
    noise: NoiseModel,
    config: SdeConfig,
    x_star: Optional[np.ndarray] = None,
    block_size: Optional[int] = None,
) -> SimulationReport:
    """Run the ensemble and collect the eta-weighted time averages.

    Reports the weighted averages of ||grad f||^2 (and ||m||^2 for Adam)
    matching the convergence-bound quantities, plus the empirical
    frequency of ||X_T - x*||^2 <= eps for each requested trapping radius.
    Raises :class:`SimulationDiverged` naming the first offending path when
    eta0 is too large for the landscape.
    """
    dim = objective.dim
    if noise.dim != dim:
        raise ValueError(f"noise dim {noise.dim} != objective dim {dim}")
    n_steps = config.n_steps
    n_paths = config.n_paths
    ts = np.minimum(np.arange(n_steps) * config.eta0, config.schedule.S)
    etas = np.array([config.schedule.value(t) for t in ts])
    weight = float(np.sum(etas))

    if x_star is None:
        x_star = objective.x_star if objective.x_star is not None else np.zeros(dim)
    x_star = np.asarray(x_star, dtype=float)
    x0 = x_star if config.x0 is None else np.asarray(config.x0, dtype=float)

    if block_size is None:
        per_path = max(n_steps * dim * 8, 1)
        block_size = max(1, min(n_paths, DEFAULT_BLOCK_BYTES // per_path))

    adam = config.algorithm == "adam"
    diag_sigma = np.diag(noise.Sigma_g).copy()
    root = noise.root

    wgrad = np.empty(n_paths)
    wmom = np.empty(n_paths) if adam else None
    final_sq = np.empty(n_paths)
    final_val = np.empty(n_paths)
    max_abs = 0.0
    v_min = math.inf if adam else None
    msum = np.zeros((n_steps, dim)) if (adam and config.track_mean_momentum) else None
    msumsq = np.zeros((n_steps, dim)) if msum is not None else None
    traces = [] if config.record_traces else None

    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, n_paths, block_size):
            stop = min(start + block_size, n_paths)
            B = stop - start
            xi = np.empty((B, n_steps, dim))
            for j in range(B):
                xi[j] = path_rng(config.seed, start + j).standard_normal((n_steps, dim))
            z = xi.reshape(-1, dim) @ root
            z = z.reshape(B, n_steps, dim)

            x = np.tile(x0, (B, 1))
            wg = np.zeros(B)
            if adam:
                m = np.zeros((B, dim))
                v = np.zeros((B, dim))
                wm = np.zeros(B)
            if traces is not None:
                block_trace = np.empty((B, n_steps + 1, 2))

            for k in range(n_steps):
                eta_k = etas[k]
                g = objective.gradient(x)
                wg += eta_k * np.sum(g * g, axis=1)
                if traces is not None:
                    block_trace[:, k, 0] = np.linalg.norm(x, axis=1)
                    block_trace[:, k, 1] = np.linalg.norm(g, axis=1)
                if adam:
                    wm += eta_k * np.sum(m * m, axis=1)
                    if msum is not None:
                        msum[k] += m.sum(axis=0)
                        msumsq[k] += (m * m).sum(axis=0)
                    step = config.eta0 * eta_k
                    x = x - step * m / np.sqrt(v + config.eps)
                    m = m - config.c1 * step * (m - g) + (
                        config.c1_prime * eta_k * math.sqrt(config.eta0)
                    ) * z[:, k, :]
                    v = v - config.c2 * step * (v - diag_sigma)
                    vm = float(v.min()) if v.size else 0.0
                    if vm < v_min:
                        v_min = vm
                else:
                    x = x - config.eta0 * eta_k * (g + z[:, k, :])
                ma = float(np.max(np.abs(x)))
                if ma > max_abs:
                    max_abs = ma

            if traces is not None:
                gT = objective.gradient(x)
                block_trace[:, n_steps, 0] = np.linalg.norm(x, axis=1)
                block_trace[:, n_steps, 1] = np.linalg.norm(gT, axis=1)
                traces.append(block_trace)

            bad = ~np.isfinite(x).all(axis=1) | ~np.isfinite(wg)
            if adam:
                bad |= ~np.isfinite(m).all(axis=1) | ~np.isfinite(v).all(axis=1)
            if bad.any():
                raise SimulationDiverged(start + int(np.argmax(bad)))

            diff = x - x_star
            final_sq[start:stop] = np.sum(diff * diff, axis=1)
            final_val[start:stop] = objective.value(x)
            wgrad[start:stop] = wg / weight if weight > 0 else 0.0
            if adam:
                wmom[start:stop] = wm / weight if weight > 0 else 0.0

    stats = {
        "weighted_avg_grad_sq": _summary(wgrad),
        "final_value": _summary(final_val),
        "final_sq_dist": _summary(final_sq),
    }
    if adam:
        stats["weighted_avg_momentum_sq"] = _summary(wmom)

    trapping = {}
    for eps in config.trap_eps:
        hits = final_sq <= eps
        freq = float(np.mean(hits))
        se = math.sqrt(freq * (1.0 - freq) / n_paths) if n_paths > 1 else 0.0
        trapping[eps] = StatSummary(freq, se, n_paths)

    mean_m = None
    if msum is not None:
        mm = msum / n_paths
        var = msumsq / n_paths - mm * mm
        se_norm = np.sqrt(np.sum(np.clip(var, 0.0, None), axis=1) / n_paths)
        mean_m = {
            "t": ts,
            "norm": np.linalg.norm(mm, axis=1),
            "std_err": se_norm,
        }

    flat_traces = None
    if traces is not None:
        t_grid = np.append(ts, min(n_steps * config.eta0, config.schedule.S))
        flat_traces = []
        offset = 0
        for block_trace in traces:
            for j in range(block_trace.shape[0]):
                flat_traces.append((offset + j, t_grid, block_trace[j]))
            offset += block_trace.shape[0]

    return SimulationReport(
        algorithm=config.algorithm,
        n_paths=n_paths,
        n_steps=n_steps,
        eta0=config.eta0,
        seed=config.seed,
        eta_weight=weight * config.eta0,
        stats=stats,
        trapping=trapping,
        v_min=v_min,
        max_abs_coordinate=max_abs,
        mean_momentum=mean_m,
        traces=flat_traces,
    )
