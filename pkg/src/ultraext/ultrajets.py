"""Whitney jets on a compact set and their class certificates.

A jet stores prescribed derivative values at finitely many base points of
the set.  Taylor polynomials and Whitney remainders are exact in the
stored data; the certificate search fits the smallest geometric growth
(C, rho) against a weight matrix row so that both the value bound

    |F^alpha(a)| <= C rho^alpha V_alpha

and the remainder bound

    |(R_a^k F)^alpha(b)| <= C rho^(k+1) alpha! v_(k+1) |b - a|^(k+1-alpha)

hold on everything stored.  Whether the needed rate is stable as the
truncation order grows is a trend verdict, never a guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ._fitting import BOUNDED, GROWING, INCONCLUSIVE, range_trend
from .errors import InconclusiveTrend, NotInClass, OrderOverflow
from .matrix_calculus import WeightMatrix
from .whitney_geometry import CompactSet1D, distance_grid

# Candidate growth rates: quarter-octave steps from 1 up to 2^10.
RHO_GRID = tuple(2.0 ** (i / 4.0) for i in range(41))


@dataclass(frozen=True)
class TaylorPolynomial:
    """Polynomial recorded by its derivative values at the center.

    Evaluates sum_m derivs[m] (y - center)^m / m! with the factorials
    folded into the Horner factors.  Differentiation shifts the stored
    values instead of multiplying coefficients, so the alpha-th
    derivative at the center reproduces derivs[alpha] bit-exactly.
    """

    center: float
    derivs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.derivs) == 0:
            raise ValueError("need at least one derivative value")
        if not all(math.isfinite(c) for c in self.derivs):
            raise ValueError("derivative values must be finite")

    @property
    def degree(self) -> int:
        return len(self.derivs) - 1

    @property
    def coeffs(self) -> tuple[float, ...]:
        """Monomial coefficients in powers of (y - center)."""
        return tuple(d / math.factorial(m) for m, d in enumerate(self.derivs))

    def __call__(self, y):
        ys = np.asarray(y, dtype=float)
        scalar = ys.ndim == 0
        dy = np.atleast_1d(ys) - self.center
        acc = np.full_like(dy, self.derivs[-1])
        for m in range(self.degree - 1, -1, -1):
            acc = self.derivs[m] + acc * dy / (m + 1.0)
        return float(acc[0]) if scalar else acc

    def derivative(self, alpha: int = 1) -> "TaylorPolynomial":
        if alpha < 0:
            raise ValueError("derivative order must be nonnegative")
        cur = self.derivs[alpha:] or (0.0,)
        return TaylorPolynomial(self.center, cur)


@dataclass(frozen=True)
class UltraJet:
    """Prescribed derivatives F^alpha(a) at finitely many points of E.

    rows[i][alpha] is the value of order alpha at base_points[i]; all
    rows share the truncation order.  Base points are exact float keys
    and must lie in the set.
    """

    e: CompactSet1D
    base_points: tuple[float, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        pts = tuple(float(a) for a in self.base_points)
        if len(pts) == 0:
            raise ValueError("jet needs at least one base point")
        if list(pts) != sorted(set(pts)):
            raise ValueError("base points must be strictly increasing")
        rows = tuple(tuple(float(v) for v in r) for r in self.rows)
        if len(rows) != len(pts):
            raise ValueError("need exactly one value row per base point")
        if len({len(r) for r in rows}) != 1 or len(rows[0]) == 0:
            raise ValueError("value rows must share a common positive length")
        for r in rows:
            if not all(math.isfinite(v) for v in r):
                raise ValueError("jet values must be finite")
        d = distance_grid(self.e, np.asarray(pts))
        if np.any(d != 0.0):
            raise ValueError("every base point must lie in the set")
        object.__setattr__(self, "base_points", pts)
        object.__setattr__(self, "rows", rows)

    @property
    def alpha_max(self) -> int:
        return len(self.rows[0]) - 1

    def _index(self, a: float) -> int:
        try:
            return self.base_points.index(float(a))
        except ValueError:
            raise ValueError(f"base point {a} is not stored") from None

    def value(self, a: float, alpha: int) -> float:
        if not 0 <= alpha <= self.alpha_max:
            raise OrderOverflow(f"order {alpha} exceeds stored order {self.alpha_max}")
        return self.rows[self._index(a)][alpha]

    def row(self, a: float) -> np.ndarray:
        return np.asarray(self.rows[self._index(a)])

    def scaled(self, c: float) -> "UltraJet":
        return replace(
            self, rows=tuple(tuple(c * v for v in r) for r in self.rows)
        )

    @property
    def is_zero(self) -> bool:
        return all(v == 0.0 for r in self.rows for v in r)

    @classmethod
    def from_function(
        cls,
        e: CompactSet1D,
        points: Sequence[float],
        alpha_max: int,
        fn: Callable[[float, int], float],
    ) -> "UltraJet":
        pts = sorted(float(a) for a in points)
        rows = tuple(
            tuple(float(fn(a, alpha)) for alpha in range(alpha_max + 1)) for a in pts
        )
        return cls(e, tuple(pts), rows)

    def to_json(self) -> dict:
        values = [
            [a, alpha, self.rows[i][alpha]]
            for i, a in enumerate(self.base_points)
            for alpha in range(self.alpha_max + 1)
        ]
        return {
            "e": [[a, b] for a, b in self.e.components],
            "alpha_max": self.alpha_max,
            "values": values,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "UltraJet":
        e = CompactSet1D(tuple((float(a), float(b)) for a, b in doc["e"]))
        alpha_max = int(doc["alpha_max"])
        table: dict[float, dict[int, float]] = {}
        for a, alpha, v in doc["values"]:
            table.setdefault(float(a), {})[int(alpha)] = float(v)
        pts = sorted(table)
        rows = []
        for a in pts:
            row = table[a]
            if sorted(row) != list(range(alpha_max + 1)):
                raise ValueError(f"base point {a} is missing orders up to {alpha_max}")
            rows.append(tuple(row[alpha] for alpha in range(alpha_max + 1)))
        return cls(e, tuple(pts), tuple(rows))


def polynomial_jet(
    e: CompactSet1D, points: Sequence[float], coeffs: Sequence[float], alpha_max: int
) -> UltraJet:
    """Jet of the polynomial sum_m coeffs[m] y^m, exact derivatives."""
    cur = [float(c) for c in coeffs] or [0.0]
    rows_by_order = []
    for _ in range(alpha_max + 1):
        rows_by_order.append(list(cur))
        cur = [m * c for m, c in enumerate(cur)][1:] or [0.0]

    def deriv(a: float, alpha: int) -> float:
        acc = 0.0
        for c in reversed(rows_by_order[alpha]):
            acc = acc * a + c
        return acc

    return UltraJet.from_function(e, points, alpha_max, deriv)


def taylor_poly(jet: UltraJet, a: float, p: int) -> TaylorPolynomial:
    """Taylor polynomial of the jet at a stored base point, degree p."""
    if not 0 <= p <= jet.alpha_max:
        raise OrderOverflow(f"degree {p} exceeds stored order {jet.alpha_max}")
    i = jet._index(a)
    return TaylorPolynomial(float(a), jet.rows[i][: p + 1])


def remainder(jet: UltraJet, a: float, b: float, k: int, alpha: int) -> float:
    """Whitney remainder F^alpha(b) - (T_a^k F)^(alpha)(b).

    Linear in the jet and identically zero on jets of polynomials of
    degree at most k.
    """
    if not 0 <= alpha <= k <= jet.alpha_max - 1:
        raise OrderOverflow(
            f"need 0 <= alpha <= k <= {jet.alpha_max - 1}, got alpha={alpha}, k={k}"
        )
    predicted = taylor_poly(jet, a, k).derivative(alpha)(float(b))
    return jet.value(b, alpha) - predicted


@dataclass(frozen=True)
class JetCertificate:
    """Fitted growth certificate for one weight-matrix row.

    value_margin and remainder_margin are the smallest right/left ratios
    of the two bound families under the fitted constants (at least one of
    them touches 1); rate_trend records the truncation-stability verdict
    behind the acceptance.
    """

    c: float
    rho: float
    xi: float
    value_margin: float
    remainder_margin: float
    rate_trend: str

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise ValueError("certificate constant must be positive")
        if not self.rho >= 1.0:
            raise ValueError("certificate growth rate must be at least 1")


def _constraints(jet: UltraJet, matrix: WeightMatrix, xi: float):
    """(power, log need, linear lhs, log rest, family) rows, fixed order."""
    log_full = matrix.full_log_row(xi)
    log_div = matrix.row_log(xi)
    rows = []
    for alpha in range(jet.alpha_max + 1):
        lhs = max(abs(r[alpha]) for r in jet.rows)
        if lhs == 0.0:
            continue
        rest = float(log_full[alpha])
        rows.append((alpha, math.log(lhs) - rest, lhs, rest, "value"))
    for ia, a in enumerate(jet.base_points):
        for ib, b in enumerate(jet.base_points):
            if ia == ib:
                continue
            gap = math.log(abs(b - a))
            for k in range(jet.alpha_max):
                for alpha in range(k + 1):
                    lhs = abs(remainder(jet, a, b, k, alpha))
                    if lhs == 0.0:
                        continue
                    rest = (
                        math.lgamma(alpha + 1.0)
                        + float(log_div[k + 1])
                        + (k + 1 - alpha) * gap
                    )
                    rows.append((k + 1, math.log(lhs) - rest, lhs, rest, "remainder"))
    return rows


def _rate_profile(rows, alpha_max: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Needed log rate per truncation order, with the steepest chord.

    rates[K] is the steepest chord slope of the per-power log needs over
    powers <= K, floored at zero so the snapped rho never drops below 1.
    """
    prof = np.full(alpha_max + 1, -np.inf)
    for power, need, _, _, _ in rows:
        prof[power] = max(prof[power], need)
    rates = np.zeros(alpha_max + 1)
    witness = (0, 0)
    running = 0.0
    for top in range(1, alpha_max + 1):
        if np.isfinite(prof[top]):
            for low in range(top):
                if not np.isfinite(prof[low]):
                    continue
                slope = (prof[top] - prof[low]) / (top - low)
                if slope > running:
                    running = slope
                    witness = (low, top)
        rates[top] = running
    return rates, witness


def certify(
    jet: UltraJet,
    matrix: WeightMatrix,
    *,
    xi: float | None = None,
    rho_grid: Sequence[float] = RHO_GRID,
    growth_tol: float = 1.05,
) -> JetCertificate:
    """Fit (C, rho) for the smallest stored row that accepts the jet.

    rho is snapped up to the geometric grid from the steepest chord of
    the per-order log needs (scaling the jet cancels in every chord, so
    rho is scaling-invariant); C is the exact maximum of the linear
    constraint ratios at that rho.  A row accepts when the needed rate is
    stable in the truncation order; rows are tried in ascending xi and
    the first acceptance wins.  Raises NotInClass with the steepest-chord
    witness when the rate grows with truncation on every row.
    """
    if matrix.order < jet.alpha_max:
        raise OrderOverflow(
            f"matrix rows stop at order {matrix.order}, jet needs {jet.alpha_max}"
        )
    candidates = matrix.xi_values if xi is None else (float(xi),)
    grid = sorted(float(g) for g in rho_grid)
    if not grid or grid[0] != 1.0:
        raise ValueError("rho grid must start at 1")
    failures = []
    for x in candidates:
        rows = _constraints(jet, matrix, x)
        if not rows:
            return JetCertificate(1.0, 1.0, x, math.inf, math.inf, BOUNDED)
        rates, witness = _rate_profile(rows, jet.alpha_max)
        needed = float(rates[-1])
        if len(rates) >= 9:
            profile = np.exp(rates[1:] - rates.max())
            trend, growth = range_trend(profile, growth_tol=growth_tol)
        else:
            # Too short a range to judge stability; accept and say so.
            trend, growth = INCONCLUSIVE, 1.0
        accept = trend == BOUNDED or len(rates) < 9
        snapped = next((g for g in grid if math.log(g) >= needed - 1e-12), None)
        if snapped is None:
            accept = False
            trend = GROWING
        if not accept:
            failures.append((x, trend, growth, witness, needed))
            continue
        log_rho = math.log(snapped)
        best_c = 0.0
        margins = {"value": math.inf, "remainder": math.inf}
        for power, _, lhs, rest, family in rows:
            ratio = lhs / math.exp(rest + power * log_rho)
            if ratio > best_c:
                best_c = ratio
        for power, _, lhs, rest, family in rows:
            margin = best_c * math.exp(rest + power * log_rho) / lhs
            margins[family] = min(margins[family], margin)
        return JetCertificate(
            best_c, snapped, x, margins["value"], margins["remainder"], trend
        )
    worst = failures[-1]
    detail = (
        f"needed growth rate e^{worst[4]:.3f} per order keeps rising with the "
        f"truncation (trend {worst[1]}, last-window growth {worst[2]:.3f}); "
        f"steepest chord between orders {worst[3][0]} and {worst[3][1]} at xi={worst[0]}"
    )
    if any(f[1] == GROWING for f in failures):
        raise NotInClass(detail)
    raise InconclusiveTrend(detail)
