"""Bump splines by box convolution and the normalized cover partition.

Everything in this module is an exact piecewise polynomial.  Bumps arise
from convolving an interval indicator with box kernels, so derivatives
and extrema come from the piece coefficients, never from numerical
differencing.  The normalized family phi_i = psi_i / sum_j psi_j is
piecewise rational; its derivatives are evaluated with the reciprocal
and product rules against the same exact piece data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly

from ._fitting import BOUNDED, INCONCLUSIVE, range_trend
from .errors import DegenerateSupport, UncoveredPoint
from .seq_calculus import WeightSequence, log_h_function
from .whitney_geometry import WhitneyCover, covered_sample_grid, distance_grid

# Bump margins are this fraction of the interval side.  Supports then
# reach exactly to the expanded intervals of a 9/8 cover, which is the
# smallest expansion the margin rule tolerates.
MARGIN_FRACTION = 1.0 / 16.0
_MIN_EXPANSION = 1.0 + 2.0 * MARGIN_FRACTION


def _eval_local(coeffs: Sequence[float], t: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * t + c
    return float(acc)


def _taylor_shift(coeffs: np.ndarray, shift: float) -> np.ndarray:
    """Coefficients of P(y + shift) from those of P(y)."""
    out = np.array(coeffs, dtype=float)
    n = out.size
    for i in range(n):
        for j in range(n - 2, i - 1, -1):
            out[j] += shift * out[j + 1]
    return out


def _real_roots_in(coeffs: np.ndarray, lo: float, hi: float) -> list[float]:
    """Real roots of the coefficient polynomial clipped to [lo, hi]."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size < 2:
        return []
    c = c / np.max(np.abs(c))
    roots = np.roots(c[::-1])
    span = hi - lo
    out = []
    for r in roots:
        if abs(r.imag) <= 1e-9 * (1.0 + abs(r.real)):
            t = float(r.real)
            if lo - 1e-12 * span <= t <= hi + 1e-12 * span:
                out.append(min(max(t, lo), hi))
    return out


@dataclass(frozen=True)
class PiecewisePolynomial:
    """Compactly supported piecewise polynomial in local power basis.

    Piece j covers [breakpoints[j], breakpoints[j+1]) and evaluates
    sum_m pieces[j][m] * (x - breakpoints[j])**m; the function is zero
    outside the breakpoint span.  The rightmost breakpoint belongs to
    the last piece so closed supports evaluate cleanly.
    """

    breakpoints: tuple[float, ...]
    pieces: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.size < 2:
            raise ValueError("need at least two breakpoints")
        if not np.all(np.isfinite(bp)):
            raise ValueError("breakpoints must be finite")
        if not np.all(np.diff(bp) > 0.0):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.pieces) != bp.size - 1:
            raise ValueError("need exactly one coefficient row per piece")
        deg = 0
        for row in self.pieces:
            if len(row) == 0:
                raise ValueError("empty coefficient row")
            if not all(math.isfinite(c) for c in row):
                raise ValueError("coefficients must be finite")
            deg = max(deg, len(row) - 1)
        coeff = np.zeros((bp.size - 1, deg + 1))
        for j, row in enumerate(self.pieces):
            coeff[j, : len(row)] = row
        object.__setattr__(self, "_bp", bp)
        object.__setattr__(self, "_coeff", coeff)

    @property
    def degree(self) -> int:
        return self._coeff.shape[1] - 1

    @property
    def support(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def piece_index(self, x: float) -> int:
        """Index of the piece whose interval holds x, -1 outside the span."""
        bp = self._bp
        if x < bp[0] or x > bp[-1]:
            return -1
        j = int(np.searchsorted(bp, x, side="right")) - 1
        return min(j, bp.size - 2)

    def __call__(self, x):
        xs = np.asarray(x, dtype=float)
        scalar = xs.ndim == 0
        xs = np.atleast_1d(xs)
        bp = self._bp
        idx = np.clip(np.searchsorted(bp, xs, side="right") - 1, 0, bp.size - 2)
        dx = xs - bp[idx]
        out = np.zeros_like(xs)
        for m in range(self.degree, -1, -1):
            out = out * dx + self._coeff[idx, m]
        out = np.where((xs >= bp[0]) & (xs <= bp[-1]), out, 0.0)
        return float(out[0]) if scalar else out

    def derivative(self) -> "PiecewisePolynomial":
        rows = []
        for row in self.pieces:
            if len(row) == 1:
                rows.append((0.0,))
            else:
                rows.append(tuple(m * c for m, c in enumerate(row))[1:])
        return PiecewisePolynomial(self.breakpoints, tuple(rows))

    def integral(self) -> float:
        """Integral over the support, exact per piece."""
        total = 0.0
        for j, row in enumerate(self.pieces):
            w = self.breakpoints[j + 1] - self.breakpoints[j]
            acc = 0.0
            for m in range(len(row) - 1, -1, -1):
                acc = acc * w + row[m] / (m + 1)
            total += acc * w
        return total

    def sup_norm(self) -> float:
        """Exact max of the absolute value, from per-piece critical points."""
        best = 0.0
        for j, row in enumerate(self.pieces):
            w = float(self.breakpoints[j + 1] - self.breakpoints[j])
            # Work on the unit piece so root finding sees tame coefficients.
            scaled = np.asarray(row, dtype=float) * w ** np.arange(len(row))
            ts = [0.0, 1.0]
            if scaled.size > 1:
                ts.extend(_real_roots_in(npoly.polyder(scaled), 0.0, 1.0))
            for t in ts:
                best = max(best, abs(_eval_local(scaled, t)))
        return best

    def to_json(self) -> dict:
        return {
            "breakpoints": [float(b) for b in self.breakpoints],
            "pieces": [[float(c) for c in row] for row in self.pieces],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PiecewisePolynomial":
        return cls(
            tuple(float(b) for b in doc["breakpoints"]),
            tuple(tuple(float(c) for c in row) for row in doc["pieces"]),
        )


def _local_coeffs(poly: PiecewisePolynomial, t: float, probe: float) -> np.ndarray | None:
    """Coefficients of poly around t, taken from the piece containing probe."""
    j = poly.piece_index(probe)
    if j < 0:
        return None
    return _taylor_shift(np.asarray(poly.pieces[j], dtype=float), t - poly.breakpoints[j])


def _merge_close(values: np.ndarray, tol: float) -> np.ndarray:
    kept = [float(values[0])]
    for v in values[1:]:
        if v - kept[-1] > tol:
            kept.append(float(v))
    return np.asarray(kept)


def _convolve_box(f: PiecewisePolynomial, width: float) -> PiecewisePolynomial:
    """Convolution with the unit-mass box of the given width."""
    if not (math.isfinite(width) and width > 0.0):
        raise ValueError("box width must be positive")
    half = 0.5 * width
    bp = f._bp
    anti = []
    acc = 0.0
    for j, row in enumerate(f.pieces):
        arow = np.zeros(len(row) + 1)
        arow[0] = acc
        for m, c in enumerate(row):
            arow[m + 1] = c / (m + 1)
        anti.append(arow)
        acc = _eval_local(arow, bp[j + 1] - bp[j])
    total = acc

    def anti_at(expand_at: float, probe: float) -> np.ndarray:
        # Expansion of the antiderivative around expand_at.  The piece is
        # chosen by the probe (a window midpoint), which is immune to the
        # ulp-level breakpoint jitter that endpoint lookups trip over.
        if probe < bp[0]:
            return np.array([0.0])
        if probe >= bp[-1]:
            return np.array([total])
        j = int(np.searchsorted(bp, probe, side="right")) - 1
        return _taylor_shift(anti[j], expand_at - bp[j])

    new_bp = np.unique(np.concatenate([bp - half, bp + half]))
    # Shifted copies of one exact breakpoint can land an ulp apart; the
    # sliver pieces they would create poison later piece lookups.
    tol = 32.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(new_bp))))
    new_bp = _merge_close(new_bp, tol)
    rows = []
    for j in range(new_bp.size - 1):
        t = float(new_bp[j])
        mid = 0.5 * (new_bp[j] + new_bp[j + 1])
        upper = anti_at(t + half, mid + half)
        lower = anti_at(t - half, mid - half)
        g = np.zeros(max(upper.size, lower.size))
        g[: upper.size] += upper
        g[: lower.size] -= lower
        rows.append(tuple(g / width))
    return PiecewisePolynomial(tuple(float(b) for b in new_bp), tuple(rows))


@dataclass(frozen=True)
class BumpSpec:
    """Core interval, margin and fold count for a box-convolution bump."""

    core: tuple[float, float]
    margin: float
    folds: int

    def __post_init__(self) -> None:
        lo, hi = (float(v) for v in self.core)
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ValueError("core must be a finite interval")
        if not (math.isfinite(self.margin) and self.margin > 0.0):
            raise DegenerateSupport(f"margin must be positive, got {self.margin}")
        if not (isinstance(self.folds, int) and self.folds >= 1):
            raise ValueError("fold count must be a positive integer")
        object.__setattr__(self, "core", (lo, hi))

    @property
    def width(self) -> float:
        """Box width per fold."""
        return self.margin / self.folds

    @property
    def support(self) -> tuple[float, float]:
        return self.core[0] - self.margin, self.core[1] + self.margin


def build_bump(spec: BumpSpec) -> PiecewisePolynomial:
    """Indicator of the half-inflated core convolved once per fold.

    The result is a spline of degree equal to the fold count, identically
    one on the core, zero outside the core inflated by the margin, and
    each derivative up to that order is bounded by (2 / width)^order.
    """
    half_margin = 0.5 * spec.margin
    out = PiecewisePolynomial(
        (spec.core[0] - half_margin, spec.core[1] + half_margin), ((1.0,),)
    )
    for _ in range(spec.folds):
        out = _convolve_box(out, spec.width)
    return out


def _derivative_values(coeffs: np.ndarray, t: float, order: int) -> np.ndarray:
    out = np.empty(order + 1)
    cur = np.asarray(coeffs, dtype=float)
    for m in range(order + 1):
        out[m] = _eval_local(cur, t)
        cur = npoly.polyder(cur) if cur.size > 1 else np.zeros(1)
    return out


@dataclass(frozen=True, eq=False)
class Partition:
    """Normalized bump family phi_i = psi_i / sum_j psi_j.

    The bump total is held as one piecewise polynomial on the common
    breakpoint refinement, and every refinement piece records the local
    coefficients of each bump alive there.  Quotient derivatives and
    extrema therefore never leave exact piece data.
    """

    folds: int
    bumps: tuple[PiecewisePolynomial, ...]
    cover: WhitneyCover | None
    breakpoints: np.ndarray
    piece_active: tuple[tuple[int, ...], ...]
    piece_coeffs: tuple[tuple[np.ndarray, ...], ...]
    piece_total: tuple[np.ndarray, ...]
    total: PiecewisePolynomial

    @classmethod
    def from_bumps(
        cls,
        bumps: Sequence[PiecewisePolynomial],
        folds: int,
        cover: WhitneyCover | None = None,
    ) -> "Partition":
        if len(bumps) == 0:
            raise ValueError("need at least one bump")
        all_bp = np.unique(np.concatenate([b._bp for b in bumps]))
        active_rows: list[tuple[int, ...]] = []
        coeff_rows: list[tuple[np.ndarray, ...]] = []
        total_rows: list[np.ndarray] = []
        for j in range(all_bp.size - 1):
            t = float(all_bp[j])
            mid = 0.5 * (all_bp[j] + all_bp[j + 1])
            act: list[int] = []
            cfs: list[np.ndarray] = []
            for i, bump in enumerate(bumps):
                c = _local_coeffs(bump, t, mid)
                if c is None:
                    continue
                act.append(i)
                cfs.append(c)
            tot = np.zeros(max((c.size for c in cfs), default=1))
            for c in cfs:
                tot[: c.size] += c
            active_rows.append(tuple(act))
            coeff_rows.append(tuple(cfs))
            total_rows.append(tot)
        total = PiecewisePolynomial(
            tuple(float(b) for b in all_bp),
            tuple(tuple(float(c) for c in row) for row in total_rows),
        )
        return cls(
            folds=int(folds),
            bumps=tuple(bumps),
            cover=cover,
            breakpoints=all_bp,
            piece_active=tuple(active_rows),
            piece_coeffs=tuple(coeff_rows),
            piece_total=tuple(total_rows),
            total=total,
        )

    def __len__(self) -> int:
        return len(self.bumps)

    def value(self, i: int, x: float) -> float:
        psi = self.bumps[i](x)
        if psi == 0.0:
            return 0.0
        return psi / self.total(x)

    def values_matrix(self, xs) -> np.ndarray:
        """phi values, one row per bump, zero where the total vanishes."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        rows = np.vstack([b(xs) for b in self.bumps])
        totals = self.total(xs)
        denom = np.where(totals > 0.0, totals, 1.0)
        out = rows / denom
        out[:, totals <= 0.0] = 0.0
        return out

    def derivatives(self, i: int, x: float, order: int) -> np.ndarray:
        """phi_i and its derivatives at x up to the requested order.

        Derivatives are taken piecewise (right-continuous at breakpoints)
        through the reciprocal and product rules on exact coefficients.
        """
        if not 0 <= order <= self.folds:
            raise ValueError("order must lie between 0 and the fold count")
        out = np.zeros(order + 1)
        bp = self.breakpoints
        if x < bp[0] or x > bp[-1]:
            return out
        j = min(int(np.searchsorted(bp, x, side="right")) - 1, bp.size - 2)
        actives = self.piece_active[j]
        if i not in actives:
            return out
        if len(actives) == 1:
            # The quotient is identically one on a single-bump piece.
            out[0] = 1.0
            return out
        dx = x - bp[j]
        psi_d = _derivative_values(self.piece_coeffs[j][actives.index(i)], dx, order)
        tot_d = _derivative_values(self.piece_total[j], dx, order)
        if tot_d[0] == 0.0:
            return out
        recip = np.zeros(order + 1)
        recip[0] = 1.0 / tot_d[0]
        for m in range(1, order + 1):
            acc = 0.0
            for r in range(1, m + 1):
                acc += math.comb(m, r) * tot_d[r] * recip[m - r]
            recip[m] = -recip[0] * acc
        for b in range(order + 1):
            out[b] = sum(
                math.comb(b, r) * psi_d[r] * recip[b - r] for r in range(b + 1)
            )
        return out

    def sup_norm(self, i: int, order: int) -> float:
        """Exact sup of |phi_i^(order)| via per-piece rational extrema.

        On a piece where phi_i = N/S^(order+1), interior candidates are
        the real roots of the next numerator in the quotient-rule chain;
        piece endpoints complete the candidate set.
        """
        if not 0 <= order <= self.folds:
            raise ValueError("order must lie between 0 and the fold count")
        best = 0.0
        bp = self.breakpoints
        for j, actives in enumerate(self.piece_active):
            if i not in actives:
                continue
            if len(actives) == 1:
                best = max(best, 1.0 if order == 0 else 0.0)
                continue
            w = float(bp[j + 1] - bp[j])
            # Unit-piece rescale keeps the chain coefficients in range.
            num = self.piece_coeffs[j][actives.index(i)]
            den = self.piece_total[j]
            num = num * w ** np.arange(num.size)
            den = den * w ** np.arange(den.size)
            dden = npoly.polyder(den) if den.size > 1 else np.zeros(1)
            chain = [num]
            for b in range(order + 1):
                nb = chain[-1]
                nb_p = npoly.polyder(nb) if nb.size > 1 else np.zeros(1)
                chain.append(
                    npoly.polysub(npoly.polymul(nb_p, den), (b + 1) * npoly.polymul(nb, dden))
                )
            ts = [0.0, 1.0] + _real_roots_in(chain[order + 1], 0.0, 1.0)
            for t in ts:
                s = _eval_local(den, t)
                if s <= 0.0:
                    continue
                value = abs(_eval_local(chain[order], t)) / s ** (order + 1)
                best = max(best, value / w**order)
        return best


def build_partition(cover: WhitneyCover, folds: int, check_points: int = 2048) -> Partition:
    """Normalized partition subordinate to the expanded cover intervals.

    Each interval gets a bump whose core is the interval and whose margin
    is a sixteenth of the side, so supports end exactly on the expanded
    intervals of a 9/8 cover.  Raises UncoveredPoint when the bump total
    fails to be positive somewhere on the covered sample grid.
    """
    if folds < 1:
        raise ValueError("fold count must be at least 1")
    if cover.expansion < _MIN_EXPANSION - 1e-12:
        raise ValueError(
            f"cover expansion {cover.expansion} leaves bump supports outside"
            " the expanded intervals; need at least 9/8"
        )
    bumps = []
    for center, side in zip(cover.centers, cover.sides):
        spec = BumpSpec(
            (float(center - 0.5 * side), float(center + 0.5 * side)),
            float(side) * MARGIN_FRACTION,
            int(folds),
        )
        bumps.append(build_bump(spec))
    partition = Partition.from_bumps(bumps, folds, cover=cover)
    xs = covered_sample_grid(cover, check_points)
    if xs.size:
        totals = partition.total(xs)
        if np.any(totals <= 0.0):
            bad = float(xs[int(np.argmin(totals))])
            raise UncoveredPoint(f"bump total vanishes at covered point x={bad}")
    return partition


@dataclass(frozen=True)
class DerivativeBoundReport:
    """Fitted envelope constants and the exact sup-norm side table.

    The verified bound reads, at every sampled x and order beta,

        |phi_i^(beta)(x)| <= fitted_m * geometric_rate**beta
                             * full_row(beta) * envelope(x).

    per_beta_m holds the raw per-order fit before the geometric factor
    is removed; m_trend judges the normalized profile.  The geometric
    freedom stands in for the non-effective choice of dominating weight
    family behind the envelope bound.
    """

    fold_count: int
    beta_max: int
    envelope_b: float
    fitted_m: float
    geometric_rate: float
    per_beta_m: tuple[float, ...]
    normalized_m: tuple[float, ...]
    m_trend: str
    clamped_envelopes: int
    sample_count: int
    sup_norms: tuple[tuple[float, ...], ...]


def check_derivative_bound(
    partition: Partition,
    weight_row: WeightSequence,
    beta_max: int,
    *,
    sample_points=None,
    envelope_b_grid: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
    sample_count: int = 256,
) -> DerivativeBoundReport:
    """Fit the constants closing the derivative envelope bound.

    At each sampled x the left side is the largest |phi_i^(beta)(x)| over
    the bumps alive there; the envelope on the right side is
    (e / h_row(b1*p*d(x) / (9*A2*B)))^(A1*B/p), evaluated through the
    log-domain h-function.  The per-order fit is reduced by its best
    geometric factor before the trend test, since the dominating weight
    family behind the bound is only determined up to such a rescale, and
    B is taken as the smallest grid member whose normalized profile is
    bounded in the order.  Exact sup norms of every phi derivative ride
    along as a side table.
    """
    cover = partition.cover
    if cover is None:
        raise ValueError("partition was built without a cover")
    folds = partition.folds
    if not 0 <= beta_max <= folds:
        raise ValueError("beta_max must lie between 0 and the fold count")
    if weight_row.order < beta_max:
        raise ValueError("weight row shorter than beta_max")
    if sample_points is None:
        xs = covered_sample_grid(cover, sample_count)
    else:
        xs = np.atleast_1d(np.asarray(sample_points, dtype=float))
    distances = distance_grid(cover.e, xs)
    if np.any(distances <= 0.0):
        raise ValueError("sample points must keep positive distance from the set")

    lhs = np.zeros((xs.size, beta_max + 1))
    for col, x in enumerate(xs):
        for i in cover.members(float(x), expanded=True):
            vals = np.abs(partition.derivatives(int(i), float(x), beta_max))
            lhs[col] = np.maximum(lhs[col], vals)
    log_w = np.array(
        [math.lgamma(b + 1.0) + weight_row.log_values[b] for b in range(beta_max + 1)]
    )
    with np.errstate(divide="ignore"):
        log_lhs = np.log(lhs)

    cst = cover.constants
    orders = np.arange(beta_max + 1, dtype=float)
    chosen = None
    for b_par in envelope_b_grid:
        log_env = np.empty(xs.size)
        clamped = 0
        for col in range(xs.size):
            arg = cst.b_1 * folds * distances[col] / (9.0 * cst.A_2 * b_par)
            log_h, argmin = log_h_function(weight_row, math.log(arg))
            if argmin == weight_row.order:
                clamped += 1
            log_env[col] = (cst.A_1 * b_par / folds) * (1.0 - log_h)
        per_beta = (log_lhs - log_w[None, :] - log_env[:, None]).max(axis=0)
        # Remove the best geometric factor; the dominating weight family
        # in the target bound is only fixed up to such a rescale.
        finite = np.isfinite(per_beta)
        if finite.sum() >= 2:
            slope = float(np.polyfit(orders[finite], per_beta[finite], 1)[0])
        else:
            slope = 0.0
        log_rate = max(slope, 0.0)
        normalized = per_beta - log_rate * orders
        if np.count_nonzero(np.isfinite(normalized)) >= 8:
            trend, _ = range_trend(np.exp(normalized - np.max(normalized[finite])))
        else:
            trend = INCONCLUSIVE
        result = (float(b_par), per_beta, normalized, log_rate, trend, clamped)
        if trend == BOUNDED:
            chosen = result
            break
        chosen = result
    envelope_b, per_beta_log, normalized_log, log_rate, m_trend, clamped = chosen
    sup_norms = tuple(
        tuple(partition.sup_norm(i, b) for b in range(beta_max + 1))
        for i in range(len(partition.bumps))
    )
    return DerivativeBoundReport(
        fold_count=folds,
        beta_max=int(beta_max),
        envelope_b=envelope_b,
        fitted_m=float(np.exp(np.max(normalized_log))),
        geometric_rate=float(np.exp(log_rate)),
        per_beta_m=tuple(float(np.exp(v)) for v in per_beta_log),
        normalized_m=tuple(float(np.exp(v)) for v in normalized_log),
        m_trend=m_trend,
        clamped_envelopes=int(clamped),
        sample_count=int(xs.size),
        sup_norms=sup_norms,
    )
