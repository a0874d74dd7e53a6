"""Shared helpers and independent oracles for the test suite.

The quadrature oracle here only touches ``Schedule.value`` and
``Schedule.derivative`` (plus scipy's adaptive Gauss-Kronrod rule), never
the closed-form ``integral`` path it is used to check.
"""

from __future__ import annotations

import io

import numpy as np
from scipy.integrate import quad

from optlaws import RunRecord, compute_features, default_markers
from optlaws.law import REFERENCE_COEFFICIENTS
from optlaws.schedule import Schedule, build_general_schedule, warmup_cosine_schedule

LR_SCALE = 1.5e-2


def quad_oracle(schedule: Schedule, u: float, v: float, functional: str) -> float:
    """Adaptive quadrature of the pointwise functional, split per segment."""
    if functional == "eta":
        f = schedule.value
    elif functional == "eta_sq":
        f = lambda t: schedule.value(t) ** 2
    elif functional == "deta_sq":
        f = lambda t: schedule.derivative(t) ** 2
    else:
        raise ValueError(functional)
    total = 0.0
    for seg in schedule.segments:
        lo, hi = max(u, seg.t0), min(v, seg.t1)
        if lo < hi:
            val, _ = quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
            total += val
    return total


def random_four_phase(rng: np.random.Generator) -> Schedule:
    """Random warmup/decay/plateau/cooldown schedule (degenerate phases allowed)."""
    S = float(rng.uniform(1.0, 60.0))
    a1, a2, a3 = np.sort(rng.uniform(0.0, S, size=3))
    if rng.random() < 0.3:  # collapse some phases to exercise degenerate drops
        a2 = a1
    h1 = float(rng.uniform(0.05, 1.0))
    h2 = float(rng.uniform(0.05, 1.0)) if a2 > a1 else h1
    return build_general_schedule(h1, h2, a1, a2, a3, S)


def random_schedule(rng: np.random.Generator) -> Schedule:
    """Four-phase or warmup-cosine schedule, at random."""
    if rng.random() < 0.3:
        S = float(rng.uniform(1.0, 60.0))
        a = float(rng.uniform(0.01 * S, 0.8 * S))
        return warmup_cosine_schedule(float(rng.uniform(0.05, 1.0)), a, S)
    return random_four_phase(rng)


def planted_log_loss(record: RunRecord, c=REFERENCE_COEFFICIENTS) -> float:
    """Log loss a record would have under the planted coefficient vector."""
    schedule = record.normalized_schedule()
    f = compute_features(schedule, default_markers(schedule), record.N)
    return float(np.dot(c, f.values))


def make_grid_records(
    warm_fracs,
    peak_rates,
    token_sizes,
    model_sizes,
    c=REFERENCE_COEFFICIENTS,
    noise_rel: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[RunRecord]:
    """Linear warmup/cooldown run grid with losses from the planted law.

    ``noise_rel`` adds multiplicative loss noise loss*(1 + noise_rel*xi).
    """
    records = []
    for S in token_sizes:
        for N in model_sizes:
            for fa in warm_fracs:
                for h in peak_rates:
                    a = fa * S
                    raw = h * LR_SCALE
                    probe = RunRecord.from_billions(N, S, raw, raw, a, a, a, 1.0)
                    loss = float(np.exp(planted_log_loss(probe, c)))
                    if noise_rel > 0.0:
                        loss *= 1.0 + noise_rel * float(rng.standard_normal())
                    records.append(
                        RunRecord.from_billions(N, S, raw, raw, a, a, a, loss)
                    )
    return records


def records_to_csv(records: list[RunRecord]) -> str:
    """Serialize records in the run-log CSV layout (sizes in billions)."""
    buf = io.StringIO()
    buf.write("model_B,tokens_B,eta1,eta2,a1_B,a2_B,a3_B,loss,diverged\n")
    for r in records:
        fields = [
            repr(r.N),
            repr(r.S_steps / 1e9),
            repr(r.eta1),
            repr(r.eta2),
            repr(r.a1 / 1e9),
            repr(r.a2 / 1e9),
            repr(r.a3 / 1e9),
            repr(r.final_loss),
            "1" if r.diverged else "0",
        ]
        buf.write(",".join(fields) + "\n")
    return buf.getvalue()


def fixture_corpus() -> list[RunRecord]:
    """The deterministic corpus behind tests/fixtures/synthetic_runs.csv."""
    records = make_grid_records(
        warm_fracs=(0.05, 0.15, 0.3, 0.5),
        peak_rates=(0.1, 0.3, 0.55, 0.8),
        token_sizes=(3.0, 10.0),
        model_sizes=(0.58, 4.05),
    )
    # two divergent rows: high peak, short warmup (never used in fitting)
    records.append(
        RunRecord.from_billions(0.58, 10.0, 0.9 * LR_SCALE, 0.9 * LR_SCALE,
                                0.05, 0.05, 0.05, 7.0, diverged=True)
    )
    records.append(
        RunRecord.from_billions(4.05, 3.0, 1.0 * LR_SCALE, 1.0 * LR_SCALE,
                                0.02, 0.02, 0.02, 7.0, diverged=True)
    )
    return records
