"""Piecewise learning-rate schedules with exact integral functionals.

A schedule is an ordered list of contiguous segments on [0, S].  Times are
normalized token counts (billions of tokens) and rates are normalized
learning rates (raw LR divided by the ``lr_scale`` of the normalizer, so
that every supported configuration lands in (0, 1]).

Three functionals of a schedule drive everything downstream:

    eta      ->  integral of eta(t)
    eta_sq   ->  integral of eta(t)^2
    deta_sq  ->  integral of eta'(t)^2

All three have closed forms per segment kind (polynomial for linear
segments, trigonometric antiderivatives for cosine segments), so integrals
over arbitrary sub-intervals are exact up to float rounding.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass

__all__ = [
    "Segment",
    "Schedule",
    "ScheduleError",
    "FUNCTIONALS",
    "build_general_schedule",
    "warmup_cosine_schedule",
    "warmup_const_cooldown_schedule",
]

SEGMENT_KINDS = ("linear", "constant", "cosine")
FUNCTIONALS = ("eta", "eta_sq", "deta_sq")


class ScheduleError(ValueError):
    """Invalid schedule construction or out-of-domain query."""


@dataclass(frozen=True)
class Segment:
    """One piece of a schedule on [t0, t1].

    ``linear`` interpolates eta0 -> eta1, ``constant`` requires
    eta0 == eta1, and ``cosine`` follows half a cosine period,

        eta(t) = eta1 + (eta0 - eta1)/2 * (cos(pi*(t - t0)/(t1 - t0)) + 1),

    which is the usual cosine cooldown shape when eta1 = 0.
    """

    kind: str
    t0: float
    t1: float
    eta0: float
    eta1: float

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ScheduleError(f"unknown segment kind {self.kind!r}")
        if not self.t0 < self.t1:
            raise ScheduleError(f"segment needs t0 < t1, got [{self.t0}, {self.t1}]")
        if self.eta0 < 0 or self.eta1 < 0:
            raise ScheduleError("segment rates must be nonnegative")
        if self.kind == "constant" and self.eta0 != self.eta1:
            raise ScheduleError("constant segment requires eta0 == eta1")

    @property
    def length(self) -> float:
        return self.t1 - self.t0

    @property
    def slope(self) -> float:
        """Slope of a linear segment (0 for constant)."""
        if self.kind == "cosine":
            raise ScheduleError("cosine segment has no constant slope")
        return (self.eta1 - self.eta0) / self.length

    def value(self, t: float) -> float:
        if self.kind == "constant":
            return self.eta0
        if self.kind == "linear":
            return self.eta0 + (self.eta1 - self.eta0) * (t - self.t0) / self.length
        theta = math.pi * (t - self.t0) / self.length
        return self.eta1 + 0.5 * (self.eta0 - self.eta1) * (math.cos(theta) + 1.0)

    def derivative(self, t: float) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "linear":
            return self.slope
        theta = math.pi * (t - self.t0) / self.length
        return -0.5 * (self.eta0 - self.eta1) * math.pi / self.length * math.sin(theta)

    def max_value(self, u: float, v: float) -> float:
        """Max of eta on [u, v] within the segment (all kinds are monotone)."""
        return max(self.value(u), self.value(v))

    def integral(self, u: float, v: float, functional: str) -> float:
        """Exact integral of the functional over [u, v] within [t0, t1]."""
        if functional not in FUNCTIONALS:
            raise ScheduleError(f"unknown functional {functional!r}")
        if self.kind == "constant":
            if functional == "eta":
                return self.eta0 * (v - u)
            if functional == "eta_sq":
                return self.eta0 ** 2 * (v - u)
            return 0.0
        if self.kind == "linear":
            m = self.slope
            if functional == "deta_sq":
                return m * m * (v - u)
            tu, tv = u - self.t0, v - self.t0
            e0 = self.eta0
            if functional == "eta":
                anti = lambda tau: e0 * tau + 0.5 * m * tau * tau
            else:
                anti = lambda tau: e0 * e0 * tau + e0 * m * tau * tau + m * m * tau ** 3 / 3.0
            return anti(tv) - anti(tu)
        # cosine: eta = c + A*cos(theta), theta = pi*(t - t0)/length
        ell = self.length
        amp = 0.5 * (self.eta0 - self.eta1)
        c = self.eta1 + amp
        thu = math.pi * (u - self.t0) / ell
        thv = math.pi * (v - self.t0) / ell
        if functional == "eta":
            return c * (v - u) + amp * ell / math.pi * (math.sin(thv) - math.sin(thu))
        if functional == "eta_sq":
            # integral of cos^2 in t: (ell/pi) * [theta/2 + sin(2 theta)/4]
            sq = lambda th: 0.5 * th + 0.25 * math.sin(2.0 * th)
            return (
                c * c * (v - u)
                + 2.0 * c * amp * ell / math.pi * (math.sin(thv) - math.sin(thu))
                + amp * amp * ell / math.pi * (sq(thv) - sq(thu))
            )
        # deta_sq: eta' = -(A pi / ell) sin(theta)
        sn = lambda th: 0.5 * th - 0.25 * math.sin(2.0 * th)
        return amp * amp * math.pi / ell * (sn(thv) - sn(thu))


@dataclass(frozen=True)
class Schedule:
    """Immutable piecewise schedule on [0, S] with phase markers (a1, a2, a3).

    Segments must be contiguous, cover [0, S] exactly, and agree at joints
    (eta is continuous).  All operations are pure.
    """

    segments: tuple[Segment, ...]
    S: float
    markers: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "markers", tuple(float(a) for a in self.markers))
        segs = self.segments
        if not segs:
            raise ScheduleError("schedule needs at least one segment")
        if segs[0].t0 != 0.0:
            raise ScheduleError("first segment must start at t = 0")
        if segs[-1].t1 != self.S:
            raise ScheduleError(f"last segment must end at S = {self.S}")
        for left, right in zip(segs, segs[1:]):
            if left.t1 != right.t0:
                raise ScheduleError(
                    f"segments not contiguous at t = {left.t1} vs {right.t0}"
                )
            if left.eta1 != right.eta0:
                raise ScheduleError(
                    f"eta discontinuous at t = {left.t1}: {left.eta1} vs {right.eta0}"
                )
        a1, a2, a3 = self.markers
        if not (0.0 <= a1 <= a2 <= a3 <= self.S):
            raise ScheduleError(f"markers must satisfy 0 <= a1 <= a2 <= a3 <= S, got {self.markers}")
        object.__setattr__(self, "_bounds", tuple(s.t0 for s in segs))

    def _segment_at(self, t: float) -> Segment:
        """Segment owning t, taking the right-hand piece at interior joints."""
        if not 0.0 <= t <= self.S:
            raise ScheduleError(f"t = {t} outside schedule domain [0, {self.S}]")
        i = bisect_right(self._bounds, t) - 1
        if i >= len(self.segments):
            i = len(self.segments) - 1
        return self.segments[i]

    def value(self, t: float) -> float:
        return self._segment_at(t).value(t)

    def derivative(self, t: float) -> float:
        """d eta/dt at t; at a joint this is the right-hand limit."""
        return self._segment_at(t).derivative(t)

    @property
    def eta_max(self) -> float:
        """Supremum of eta over [0, S]."""
        return max(s.max_value(s.t0, s.t1) for s in self.segments)

    def max_rate(self, u: float, v: float) -> float:
        """Supremum of eta over [u, v]."""
        if not (0.0 <= u <= v <= self.S):
            raise ScheduleError(f"interval [{u}, {v}] outside [0, {self.S}]")
        if u == v:
            return self.value(u)
        best = 0.0
        for seg in self.segments:
            lo, hi = max(u, seg.t0), min(v, seg.t1)
            if lo < hi:
                best = max(best, seg.max_value(lo, hi))
        return best

    def integral(self, u: float, v: float, functional: str) -> float:
        """Exact integral of eta, eta^2 or (eta')^2 over [u, v].

        Partial segments are split; the result is additive over adjacent
        intervals up to float rounding.
        """
        if not (0.0 <= u <= v <= self.S):
            raise ScheduleError(
                f"integration bounds [{u}, {v}] outside schedule domain [0, {self.S}]"
            )
        total = 0.0
        for seg in self.segments:
            lo, hi = max(u, seg.t0), min(v, seg.t1)
            if lo < hi:
                total += seg.integral(lo, hi, functional)
        return total

    def scaled(self, k: float) -> "Schedule":
        """Schedule with all rates multiplied by k > 0."""
        if k <= 0:
            raise ScheduleError("scale factor must be positive")
        segs = tuple(
            Segment(s.kind, s.t0, s.t1, k * s.eta0, k * s.eta1) for s in self.segments
        )
        return Schedule(segs, self.S, self.markers)

    def to_json(self) -> str:
        payload = {
            "S": self.S,
            "markers": list(self.markers),
            "segments": [
                {"kind": s.kind, "t0": s.t0, "t1": s.t1, "eta0": s.eta0, "eta1": s.eta1}
                for s in self.segments
            ],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Schedule":
        payload = json.loads(text)
        segs = tuple(
            Segment(d["kind"], d["t0"], d["t1"], d["eta0"], d["eta1"])
            for d in payload["segments"]
        )
        return cls(segs, payload["S"], tuple(payload["markers"]))


def build_general_schedule(
    eta1: float, eta2: float, a1: float, a2: float, a3: float, S: float
) -> Schedule:
    """Four-phase schedule: warmup, decay, plateau, cooldown.

    Linear 0 -> eta1 on [0, a1], linear eta1 -> eta2 on [a1, a2], constant
    eta2 on [a2, a3], linear eta2 -> 0 on [a3, S].  Zero-length phases are
    dropped.  Markers are (a1, a2, a3).
    """
    if S <= 0:
        raise ScheduleError(f"S must be positive, got {S}")
    if not (0.0 <= a1 <= a2 <= a3 <= S):
        raise ScheduleError(f"markers must satisfy 0 <= a1 <= a2 <= a3 <= S, got {(a1, a2, a3)}")
    if eta1 < 0 or eta2 < 0:
        raise ScheduleError("rates must be nonnegative")
    pieces = [
        ("linear", 0.0, a1, 0.0, eta1),
        ("linear", a1, a2, eta1, eta2),
        ("constant", a2, a3, eta2, eta2),
        ("linear", a3, S, eta2, 0.0),
    ]
    segs = tuple(Segment(*p) for p in pieces if p[2] > p[1])
    return Schedule(segs, S, (a1, a2, a3))


def warmup_cosine_schedule(eta_max: float, a: float, S: float) -> Schedule:
    """Linear warmup 0 -> eta_max over [0, a], cosine decay to 0 over [a, S].

    Markers are (a, a, a): warmup end, cooldown start and plateau collapse
    to the single split point of this family.
    """
    if S <= 0 or not 0.0 <= a <= S:
        raise ScheduleError(f"need 0 <= a <= S with S > 0, got a={a}, S={S}")
    if eta_max < 0:
        raise ScheduleError("rates must be nonnegative")
    segs = []
    if a > 0:
        segs.append(Segment("linear", 0.0, a, 0.0, eta_max))
    if a < S:
        segs.append(Segment("cosine", a, S, eta_max, 0.0))
    return Schedule(tuple(segs), S, (a, a, a))


def warmup_const_cooldown_schedule(
    eta_max: float, a: float, a_c: float, S: float
) -> Schedule:
    """Linear warmup to eta_max on [0, a], constant on [a, a_c], linear to 0 on [a_c, S]."""
    return build_general_schedule(eta_max, eta_max, a, a, a_c, S)
