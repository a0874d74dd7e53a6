"""Closed-form convergence and escape bounds for the optimizer diffusions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..schedule import Schedule
from .noise import NoiseModel
from .objectives import Objective

__all__ = [
    "sigma0",
    "convergence_bound",
    "EscapeBounds",
    "escape_bounds",
    "anti_concentration_bound",
]


def sigma0(noise: NoiseModel, N: int, C: float = 1.0) -> float:
    """Noise amplitude sigma_g * sqrt((1 + sqrt(D/N)) + C/N^(2/3)).

    Upper bound (in expectation) on the top eigenvalue of the D-sample
    covariance estimate; C is the unspecified universal constant, exposed
    as a knob and defaulting to 1.
    """
    return noise.sigma_g * math.sqrt(
        (1.0 + math.sqrt(noise.D / N)) + C / N ** (2.0 / 3.0)
    )


def convergence_bound(
    algorithm: str,
    objective: Objective,
    noise: NoiseModel,
    schedule: Schedule,
    t: float,
    constants: dict,
) -> dict:
    """Right-hand side of the convergence bounds at time t.

    SGD returns {"gradient": ...} bounding the eta-weighted average squared
    gradient norm:

        (f(X0) - f_min)/I1 + eta0 * L * sigma0^2 * N * I2 / (2 I1),

    I1 and I2 being the area and squared-area integrals of eta on [0, t].
    Adam returns {"momentum": ..., "gradient": ...}; the momentum bound
    needs (V, eps, c1, c2, c1_prime, sigma_bar) and requires
    1 - c2/(4 c1) > 0, the gradient bound additionally (ell, M, L).

    ``constants`` supplies f0 (or x0), eta0 and the per-algorithm constants;
    f_min and L default to the objective's fields.
    """
    I1 = schedule.integral(0.0, t, "eta")
    I2 = schedule.integral(0.0, t, "eta_sq")
    if I1 <= 0:
        raise ValueError("bound needs a positive area integral on [0, t]")
    if "f0" in constants:
        f0 = constants["f0"]
    elif "x0" in constants:
        f0 = float(objective.value(np.asarray(constants["x0"], dtype=float)))
    else:
        raise ValueError("missing constants: need f0 or x0")
    f_min = constants.get("f_min", objective.f_min)
    if f_min is None:
        raise ValueError("missing constants: f_min")
    eta0 = constants["eta0"]
    N = objective.dim

    if algorithm == "sgd":
        L = constants.get("L", objective.L)
        s0 = constants.get("sigma0", sigma0(noise, N, constants.get("C", 1.0)))
        grad = (f0 - f_min) / I1 + eta0 * L * s0 * s0 * N * I2 / (2.0 * I1)
        return {"gradient": grad}
    if algorithm != "adam":
        raise ValueError(f"unknown algorithm {algorithm!r}")

    try:
        V = constants["V"]
        eps = constants["eps"]
        c1 = constants["c1"]
        c2 = constants["c2"]
        sigma_bar = constants["sigma_bar"]
    except KeyError as missing:
        raise ValueError(f"missing constants: {missing.args[0]}") from None
    c1_prime = constants.get("c1_prime", c1 * math.sqrt(eta0))
    kappa = 1.0 - c2 / (4.0 * c1)
    if kappa <= 0:
        raise ValueError(f"need 1 - c2/(4 c1) > 0, got c1={c1}, c2={c2}")
    m0 = np.asarray(constants.get("m0", np.zeros(N)), dtype=float)
    v0 = np.asarray(constants.get("v0", np.zeros(N)), dtype=float)
    sqv = math.sqrt(V + eps)
    phi1_0 = f0 + float(np.sum(m0 * m0 / np.sqrt(v0 + eps))) / (2.0 * c1)
    momentum = sqv * (phi1_0 - f_min) / (kappa * I1) + (
        (c1_prime ** 2) / (2.0 * c1)
    ) * sigma_bar * sqv * I2 / (kappa * math.sqrt(eps) * I1)

    out = {"momentum": momentum}
    if "M" in constants:
        ell = constants.get("ell", objective.ell)
        L = constants.get("L", objective.L)
        if ell is None:
            raise ValueError("missing constants: ell")
        M = constants["M"]
        g0 = objective.gradient(np.asarray(constants["x0"], dtype=float)) if "x0" in constants else None
        cross = 0.0
        if g0 is not None and np.any(m0):
            cross = float(np.sum(g0 * m0 / np.sqrt(v0 + eps))) / c1
        head = 2.0 * sqv * (
            f0 - cross - f_min + ell * M * math.sqrt(N) / (c1 * math.sqrt(eps))
        ) / I1
        factor = 2.0 * L * sqv / (c1 * eps) + (
            1.0 + sigma_bar ** 2 / eps ** 2
        ) * c2 ** 2 * (V + eps) / (2.0 * c1 ** 2 * eps)
        out["gradient"] = head + factor * momentum
    return out


@dataclass(frozen=True)
class EscapeBounds:
    """Escape/trapping probabilities for a Gaussian iterate with covariance P."""

    escape_lower: float
    trapped_upper: float
    vacuous: bool
    asymptotic_order: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "escape_lower": self.escape_lower,
            "trapped_upper": self.trapped_upper,
            "vacuous": self.vacuous,
            "asymptotic_order": self.asymptotic_order,
        }


def anti_concentration_bound(eps: float, trace: float) -> float:
    """sqrt(e * eps / trace): upper bound on P[||x - mu||^2 <= eps]."""
    if trace <= 0:
        raise ValueError("trace must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return math.sqrt(math.e * eps / trace)


def escape_bounds(
    P: np.ndarray,
    eps: float,
    schedule: Optional[Schedule] = None,
    noise: Optional[NoiseModel] = None,
) -> EscapeBounds:
    """Escape lower bound and trapping upper bound from the covariance trace.

    trapped_upper = sqrt(e*eps/Tr P) clipped to [0, 1] (flagged vacuous past
    eps = Tr P / e); escape_lower is its complement.  When a schedule with
    eta(0) = eta_max, eta(T) = 0 and a noise model are supplied, the
    asymptotic order sqrt(eps * integral(eta'^2) / (eta_max^4 Tr Sigma_g))
    is reported as well (constant suppressed).
    """
    tr = float(np.trace(np.asarray(P)))
    if tr <= 0:
        raise ValueError(f"Tr(P) must be positive, got {tr}")
    raw = anti_concentration_bound(eps, tr)
    vacuous = raw > 1.0
    trapped = min(raw, 1.0)
    order = None
    if schedule is not None and noise is not None:
        h = schedule.eta_max
        tr_sg = noise.trace
        if h > 0 and tr_sg > 0:
            energy = schedule.integral(0.0, schedule.S, "deta_sq")
            order = math.sqrt(eps * energy / (h ** 4 * tr_sg))
    return EscapeBounds(
        escape_lower=1.0 - trapped,
        trapped_upper=trapped,
        vacuous=vacuous,
        asymptotic_order=order,
    )
