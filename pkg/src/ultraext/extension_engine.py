"""Glued extension of a certified jet off the set, with bound reports.

The extension takes the form f = sum_i phi_i T_i where the phi_i come
from the partition subordinate to the dyadic cover and T_i is a Taylor
polynomial of the jet anchored at a nearest set point of the interval
center.  The polynomial degree at distance d is driven by the counting
index of the regularized weight row at the dilated distance L*d, so the
truncation error matches the decay profile of the row's h-function.

Everything here is desk-scale: constants that the existence proofs leave
free (the threshold multiples, the doubling constant of the decay
profile, the growth bases of the final estimates) are either recorded in
the plan or fitted from samples and reported with a trend verdict, never
assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._fitting import GROWING, INCONCLUSIVE, decade_trend, range_trend
from .errors import (
    CountingIndexAtCutoff,
    MissingRow,
    OrderOverflow,
    OutsideRegion,
    PlanInvalid,
    PrecisionFloor,
)
from .matrix_calculus import WeightMatrix, interleave_matrix, sandwich_H
from .partition_of_unity import (
    BumpSpec,
    Partition,
    PiecewisePolynomial,
    build_bump,
    build_partition,
)
from .seq_calculus import WeightSequence, counting_index, log_h_function
from .ultrajets import TaylorPolynomial, UltraJet, taylor_poly
from .whitney_geometry import (
    EXPANSION,
    CompactSet1D,
    WhitneyCover,
    build_cover,
    distance_and_nearest,
    distance_grid,
)

# Threshold multiples on the dilation, in units of the certificate
# growth radius.  The two larger ones come from the telescoping and
# gluing estimates in one dimension; the first from the plain Taylor
# bound.  A plan is degenerate unless L exceeds their maximum times rho.
THRESHOLD_TAYLOR = 2.0
THRESHOLD_TELESCOPE = 12.0
THRESHOLD_GLUE = 8.0

# log of the smallest positive double; below this a decay value is an
# exact zero in float arithmetic whether or not the row is long enough.
_LOG_TINY = math.log(5e-324)
_LOG_EPS = math.log(2.0**-53)


def local_degree(row: WeightSequence, dilation: float, x: float, e: CompactSet1D) -> int:
    """Taylor degree 2*Gamma - 1 (at least 0) at the dilated distance.

    Gamma is the counting index of ``row`` at dilation * d(x).  Far from
    the set the index is 0 and the degree clamps to 0; close in, the
    degree grows like the inverse quotient scale.  CountingIndexAtCutoff
    propagates when the stored quotients cannot resolve the distance.
    """
    if not (dilation > 0.0 and math.isfinite(dilation)):
        raise ValueError("dilation must be positive and finite")
    d, _ = distance_and_nearest(e, x)
    if d == 0.0:
        raise ValueError("local degree is defined off the set only")
    gamma = counting_index(row, dilation * d)
    return max(2 * gamma - 1, 0)


@dataclass(frozen=True)
class PlanConstants:
    """Derived constants carried by a plan.

    c0, c1, c2 are the threshold multiples; h is the fitted doubling
    constant linking the decay profiles of the row and its doubled
    partner; k1 scales the theoretical smoothness degree, k2 is the
    binding threshold multiple, k3 dilates the argument of the residual
    decay profile.  m1 stays None until a bound report fits it.
    """

    c0: float = THRESHOLD_TAYLOR
    c1: float = THRESHOLD_TELESCOPE
    c2: float = THRESHOLD_GLUE
    h: float = 1.0
    k1: float = 1.0
    k2: float = max(THRESHOLD_TAYLOR, THRESHOLD_TELESCOPE, THRESHOLD_GLUE)
    k3: float = 3.0
    m1: float | None = None

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in ("c0", "c1", "c2", "h", "k1", "k2", "k3")}
        out["m1"] = self.m1
        return out


@dataclass(frozen=True)
class ExtensionPlan:
    """Dilation, fold count and row index chosen for one extension run.

    ``meets_threshold`` records whether the dilation clears k2 * rho;
    assembling with a plan below the threshold is the explicit negative
    control and must be requested by name.
    """

    dilation: float
    folds: int
    xi: float
    rho: float
    jet_bound: float
    constants: PlanConstants = field(default_factory=PlanConstants)
    theory_degree: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dilation) and self.dilation > 0.0):
            raise PlanInvalid(f"dilation must be positive, got {self.dilation}")
        if not (isinstance(self.folds, int) and self.folds >= 1):
            raise PlanInvalid(f"fold count must be a positive integer, got {self.folds}")
        if not (self.xi > 0.0 and math.isfinite(self.xi)):
            raise PlanInvalid("row index xi must be positive and finite")
        if not (self.rho >= 1.0 and math.isfinite(self.rho)):
            raise PlanInvalid("certificate radius rho must be >= 1")
        if not (self.jet_bound > 0.0 and math.isfinite(self.jet_bound)):
            raise PlanInvalid("certificate bound must be positive and finite")
        if self.constants.h < 1.0:
            raise PlanInvalid("doubling constant h must be >= 1")

    @property
    def meets_threshold(self) -> bool:
        return self.dilation > self.constants.k2 * self.rho

    def to_json(self) -> dict:
        return {
            "dilation": self.dilation,
            "folds": self.folds,
            "xi": self.xi,
            "rho": self.rho,
            "jet_bound": self.jet_bound,
            "constants": self.constants.to_json(),
            "theory_degree": self.theory_degree,
        }

    @classmethod
    def from_json(cls, doc) -> "ExtensionPlan":
        consts = doc.get("constants", {})
        return cls(
            dilation=float(doc["dilation"]),
            folds=int(doc["folds"]),
            xi=float(doc["xi"]),
            rho=float(doc["rho"]),
            jet_bound=float(doc["jet_bound"]),
            constants=PlanConstants(
                c0=float(consts.get("c0", THRESHOLD_TAYLOR)),
                c1=float(consts.get("c1", THRESHOLD_TELESCOPE)),
                c2=float(consts.get("c2", THRESHOLD_GLUE)),
                h=float(consts.get("h", 1.0)),
                k1=float(consts.get("k1", 1.0)),
                k2=float(consts.get("k2", THRESHOLD_GLUE)),
                k3=float(consts.get("k3", 3.0)),
                m1=consts.get("m1"),
            ),
            theory_degree=int(doc.get("theory_degree", 0)),
        )


def make_plan(
    certificate,
    regular: WeightMatrix,
    *,
    dilation: float | None = None,
    folds: int = 8,
    envelope_base: float = 1.0,
    k_cap: int | None = None,
) -> ExtensionPlan:
    """Derive a plan from a jet certificate and the regularized matrix.

    The doubling constant h is fitted from the interleaving sandwich at
    row index 2*xi, the residual decay argument is dilated by k3 = 3h,
    and the theoretical smoothness degree k1 * dilation is recorded
    after rounding up (the fold count actually used stays the desk-scale
    default unless overridden).  The default dilation is 16 * rho, the
    smallest power-of-two multiple clearing every threshold.
    """
    xi = float(certificate.xi)
    rho = float(certificate.rho)
    if not regular.has(2.0 * xi) or not regular.has(4.0 * xi):
        raise MissingRow(f"plan needs rows at 2*xi={2 * xi} and 4*xi={4 * xi}")
    inter = interleave_matrix(regular, [2.0 * xi])
    h = sandwich_H(regular, inter, 2.0 * xi, k_cap if k_cap is not None else regular.order)
    # Degree rate of the smoothness budget: margin and window constants
    # of the cover enter through A_2 = 2.5 and b_1 = 7/16.
    k1 = 27.0 * 2.5 * float(envelope_base) * h / (7.0 / 16.0)
    k2 = max(THRESHOLD_TAYLOR, THRESHOLD_TELESCOPE, THRESHOLD_GLUE)
    if dilation is None:
        dilation = 16.0 * rho
    theory = math.ceil(k1 * float(dilation))
    return ExtensionPlan(
        dilation=float(dilation),
        folds=int(folds),
        xi=xi,
        rho=rho,
        jet_bound=float(certificate.c),
        constants=PlanConstants(h=h, k1=k1, k2=k2, k3=3.0 * h),
        theory_degree=theory,
    )


def _log_decay(
    row: WeightSequence, log_t: float, *, negligible_below: float | None = None
) -> tuple[float, bool]:
    """(log of the decay profile, settled flag) at log argument log_t.

    Settled means the infimum is attained strictly inside the stored
    range, or is already an exact float zero so the missing tail cannot
    change the value.  When negligible_below is given, a partial infimum
    below that log threshold also counts as settled: the true value is
    smaller still, and anything below the threshold is equivalent for
    the caller (used with log(d * eps), where d + h rounds to d exactly
    for every h under the threshold).
    """
    lh, k = log_h_function(row, log_t)
    if k < row.order:
        return lh, True
    if lh < _LOG_TINY:
        return lh, True
    if negligible_below is not None and lh < negligible_below:
        return lh, True
    return lh, False


def _requested_degree(row: WeightSequence, dilation: float, d: float) -> tuple[int, bool]:
    """(degree wanted at distance d, quotient-range cutoff flag).

    At cutoff the true degree exceeds what the stored quotients resolve;
    the returned floor 2 * order - 1 is a lower bound on it.
    """
    try:
        gamma = counting_index(row, dilation * d)
    except CountingIndexAtCutoff:
        return 2 * row.order - 1, True
    return max(2 * gamma - 1, 0), False


def _nearest_base_point(jet: UltraJet, y: float) -> tuple[float, float]:
    best = min(jet.base_points, key=lambda p: (abs(p - y), p))
    return best, abs(best - y)


@dataclass(frozen=True)
class ExtensionFunction:
    """The glued extension and everything needed to evaluate and audit it.

    Valid arguments are the stored base points of the jet together with
    the off-set band 0 < d(x) < d_max resolved by the cover.
    """

    jet: UltraJet
    plan: ExtensionPlan
    cover: WhitneyCover
    partition: Partition
    taylors: tuple[TaylorPolynomial, ...]
    degrees: tuple[int, ...]
    requested: tuple[int, ...]
    anchors: tuple[float, ...]
    anchor_snap: float
    degree_row: WeightSequence
    residual_row: WeightSequence
    value_row_log: tuple[float, ...]
    growth_row_log: tuple[float, ...]
    d_max: float
    degree_cutoffs: int
    degree_caps: int
    cutoff_chain: tuple[PiecewisePolynomial, ...] | None = None

    def __post_init__(self) -> None:
        n = len(self.cover.centers)
        if not (len(self.taylors) == len(self.degrees) == len(self.anchors) == n):
            raise ValueError("per-interval data must align with the cover")

    @property
    def interval_count(self) -> int:
        return len(self.taylors)

    def terms(self, x: float) -> np.ndarray:
        """Indices of the intervals whose bump can be alive at x."""
        return self.cover.members(x, expanded=True)

    def __call__(self, x: float) -> float:
        return eval_derivative(self, x, 0)


def assemble(
    jet: UltraJet,
    matrix: WeightMatrix,
    plan: ExtensionPlan,
    *,
    r_cov: float = 1.0,
    expansion: float = EXPANSION,
    max_generation: int = 48,
    with_cutoff: bool = False,
    allow_degenerate: bool = False,
    check_points: int = 2048,
) -> ExtensionFunction:
    """Build the extension for a jet against a regularized matrix.

    ``matrix`` must hold log-convex divided rows at 2*xi and 4*xi (the
    strong regularization of the associated matrix).  Degrees above the
    stored jet order are capped and counted; quotient-range cutoffs in
    the degree rule are likewise counted, never silently absorbed.  A
    plan below its threshold raises PlanInvalid unless the degenerate
    run is requested explicitly.
    """
    if not plan.meets_threshold and not allow_degenerate:
        raise PlanInvalid(
            f"dilation {plan.dilation} does not clear "
            f"{plan.constants.k2} * rho = {plan.constants.k2 * plan.rho}"
        )
    degree_row = matrix.row_sequence(2.0 * plan.xi)
    residual_row = matrix.row_sequence(4.0 * plan.xi)
    for name, row in (("2*xi", degree_row), ("4*xi", residual_row)):
        if not row.is_log_convex:
            raise ValueError(f"row at {name} must be log-convex; regularize first")
    value_row = interleave_matrix(matrix, [plan.xi]).full_log_row(plan.xi)
    growth_row = matrix.full_log_row(2.0 * plan.xi)

    cover = build_cover(jet.e, r_cov, expansion, max_generation)
    partition = build_partition(cover, plan.folds, check_points=check_points)
    s1 = math.exp(degree_row.log_values[1])
    d_max = min(
        cover.constants.r_0 / (3.0 * cover.constants.B_1),
        1.0 / (3.0 * plan.dilation * s1),
    )

    taylors: list[TaylorPolynomial] = []
    degrees: list[int] = []
    requested: list[int] = []
    anchors: list[float] = []
    snap = 0.0
    cutoffs = 0
    caps = 0
    for center in cover.centers:
        d, xhat = distance_and_nearest(jet.e, float(center))
        anchor, off = _nearest_base_point(jet, xhat)
        snap = max(snap, off)
        want, at_cut = _requested_degree(degree_row, plan.dilation, d)
        cutoffs += at_cut
        deg = min(want, jet.alpha_max)
        caps += deg < want
        taylors.append(taylor_poly(jet, anchor, deg))
        degrees.append(deg)
        requested.append(want)
        anchors.append(anchor)

    chain = None
    if with_cutoff:
        lo, hi = jet.e.span
        bump = build_bump(
            BumpSpec((lo - 0.5 * d_max, hi + 0.5 * d_max), 0.25 * d_max, plan.folds)
        )
        links = [bump]
        for _ in range(plan.folds):
            links.append(links[-1].derivative())
        chain = tuple(links)

    return ExtensionFunction(
        jet=jet,
        plan=plan,
        cover=cover,
        partition=partition,
        taylors=tuple(taylors),
        degrees=tuple(degrees),
        requested=tuple(requested),
        anchors=tuple(anchors),
        anchor_snap=snap,
        degree_row=degree_row,
        residual_row=residual_row,
        value_row_log=tuple(float(v) for v in value_row),
        growth_row_log=tuple(float(v) for v in growth_row),
        d_max=d_max,
        degree_cutoffs=cutoffs,
        degree_caps=caps,
        cutoff_chain=chain,
    )


def _check_region(f: ExtensionFunction, x: float) -> float:
    d, _ = distance_and_nearest(f.jet.e, x)
    if d >= f.d_max:
        raise OutsideRegion(f"d(x)={d} is not below d_max={f.d_max}")
    if d < f.cover.d_min_covered:
        raise OutsideRegion(f"d(x)={d} lies below the resolved cover depth")
    return d


def _difference_poly(t_i: TaylorPolynomial, t_ref: TaylorPolynomial) -> TaylorPolynomial | None:
    """t_i - t_ref as an exact polynomial when both share the center.

    Truncations of one derivative row at the same anchor differ exactly
    in the tail entries, so the difference is sparse and its evaluation
    never cancels.  Returns None for distinct centers; callers fall back
    to value subtraction, which is safe only where the polynomials are
    genuinely different (anchors change on shallow zones between set
    components, where the bump derivatives stay moderate).
    """
    if t_i.center != t_ref.center:
        return None
    a, b = t_i.derivs, t_ref.derivs
    lo = min(len(a), len(b))
    if len(a) == len(b):
        tail: tuple[float, ...] = ()
    elif len(a) > len(b):
        tail = a[lo:]
    else:
        tail = tuple(-v for v in b[lo:])
    if not tail:
        return TaylorPolynomial(t_i.center, (0.0,))
    return TaylorPolynomial(t_i.center, (0.0,) * lo + tail)


def _reference_index(f: ExtensionFunction, x: float) -> int:
    inside = f.cover.members(x, expanded=False)
    if len(inside):
        return int(inside[0])
    return int(f.cover.members(x, expanded=True)[0])


def _deviation_derivatives(
    f: ExtensionFunction, x: float, order: int, t_ref: TaylorPolynomial
) -> np.ndarray:
    """Derivatives 0..order of (sum_i phi_i T_i) - t_ref at x.

    Since the phi_i sum to one on the band, the deviation is
    sum_i phi_i (T_i - t_ref), combined by the product rule with each
    difference taken at the polynomial level where possible.
    """
    out = np.zeros(order + 1)
    for i in f.cover.members(x, expanded=True):
        i = int(i)
        t_i = f.taylors[i]
        diff = _difference_poly(t_i, t_ref)
        if diff is not None and all(v == 0.0 for v in diff.derivs):
            continue
        phis = f.partition.derivatives(i, x, order)
        if diff is not None:
            dvals = [diff.derivative(b)(x) for b in range(order + 1)]
        else:
            dvals = [
                t_i.derivative(b)(x) - t_ref.derivative(b)(x)
                for b in range(order + 1)
            ]
        for a in range(order + 1):
            acc = 0.0
            for b in range(a + 1):
                acc += math.comb(a, b) * phis[a - b] * dvals[b]
            out[a] += acc
    return out


def _glued_derivatives(f: ExtensionFunction, x: float, order: int) -> np.ndarray:
    """Derivatives 0..order of the extension at x, off the set."""
    t_ref = f.taylors[_reference_index(f, x)]
    out = _deviation_derivatives(f, x, order, t_ref)
    for a in range(order + 1):
        out[a] += t_ref.derivative(a)(x)
    if f.cutoff_chain is not None:
        cut = np.array([f.cutoff_chain[m](x) for m in range(order + 1)])
        comb = np.zeros(order + 1)
        for a in range(order + 1):
            comb[a] = sum(math.comb(a, b) * cut[a - b] * out[b] for b in range(a + 1))
        out = comb
    return out


def eval_derivative(f: ExtensionFunction, x: float, alpha: int) -> float:
    """Exact derivative of the glued extension, or the jet value on E.

    Orders are capped by the fold count of the partition; outside the
    resolved band the evaluation refuses rather than extrapolating.
    """
    if not 0 <= alpha <= f.plan.folds:
        raise OrderOverflow(f"order {alpha} exceeds the fold count {f.plan.folds}")
    x = float(x)
    d, _ = distance_and_nearest(f.jet.e, x)
    if d == 0.0:
        try:
            return f.jet.value(x, alpha)
        except ValueError:
            raise OutsideRegion(
                f"x={x} lies on the set but is not a stored base point"
            ) from None
    _check_region(f, x)
    return float(_glued_derivatives(f, x, alpha)[alpha])


# -- bound verification -------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of one displayed-bound check over the sample."""

    name: str
    fitted_constant: float
    max_ratio: float
    alpha_trend: str
    alpha_growth: float
    distance_trend: str
    distance_growth: float
    samples_used: int
    skipped: int
    passed: bool
    notes: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "fitted_constant": self.fitted_constant,
            "max_ratio": self.max_ratio,
            "alpha_trend": self.alpha_trend,
            "alpha_growth": self.alpha_growth,
            "distance_trend": self.distance_trend,
            "distance_growth": self.distance_growth,
            "samples_used": self.samples_used,
            "skipped": self.skipped,
            "passed": self.passed,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class BoundReport:
    checks: tuple[BoundCheck, ...]
    sample_count: int
    alpha_cap: int
    fitted_m: float
    fitted_m1: float
    degree_cap_hits: int
    degree_cutoff_hits: int
    valuation_pairs: int
    valuation_ok: bool
    plan: ExtensionPlan
    notes: tuple[str, ...] = ()

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.valuation_ok

    def check(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "checks": [c.to_json() for c in self.checks],
            "sample_count": self.sample_count,
            "alpha_cap": self.alpha_cap,
            "fitted_m": self.fitted_m,
            "fitted_m1": self.fitted_m1,
            "degree_cap_hits": self.degree_cap_hits,
            "degree_cutoff_hits": self.degree_cutoff_hits,
            "valuation_pairs": self.valuation_pairs,
            "valuation_ok": self.valuation_ok,
            "all_passed": self.all_passed,
            "plan": self.plan.to_json(),
            "notes": list(self.notes),
        }


def region_samples(f: ExtensionFunction, n: int) -> np.ndarray:
    """Deterministic geometric ladder through the evaluation band."""
    lo = max(f.cover.d_min_covered, f.d_max * 1e-12, 5e-16)
    hi = f.d_max * (1.0 - 1e-9)
    if not lo < hi:
        raise ValueError("evaluation band is empty at this resolution")
    rungs = np.geomspace(lo, hi, max(int(n) // (2 * len(f.jet.e.components)), 8))
    pts = []
    for a, b in f.jet.e.components:
        pts.append(a - rungs)
        pts.append(b + rungs)
    xs = np.unique(np.concatenate(pts))
    d = distance_grid(f.jet.e, xs)
    return xs[(d >= f.cover.d_min_covered) & (d < f.d_max)]


def _ratio_bins(ds: Sequence[float], ratios: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Worst ratio per half-decade of 1/d, abscissae increasing toward d -> 0."""
    inv = 1.0 / np.asarray(ds, dtype=float)
    r = np.asarray(ratios, dtype=float)
    logs = np.log10(inv)
    idx = np.floor(logs * 2.0).astype(int)
    keys = np.unique(idx)
    abscissae = 10.0 ** ((keys + 0.5) / 2.0)
    maxima = np.array([r[idx == k].max() for k in keys])
    return abscissae, maxima


def _distance_trend(ds: Sequence[float], ratios: Sequence[float]) -> tuple[str, float]:
    if len(ds) < 4:
        return INCONCLUSIVE, 1.0
    abscissae, maxima = _ratio_bins(ds, ratios)
    if len(abscissae) < 4 or abscissae[-1] / abscissae[0] < 100.0:
        return INCONCLUSIVE, 1.0
    span = math.log10(abscissae[-1] / abscissae[0])
    return decade_trend(abscissae, maxima, decades=min(2.0, span - 0.5))


def _alpha_trend(profile: Sequence[float]) -> tuple[str, float]:
    vals = np.asarray(profile, dtype=float)
    if len(vals) < 8:
        return INCONCLUSIVE, 1.0
    return range_trend(vals)


def _finish_check(
    name: str,
    ratios: list[float],
    ds: list[float],
    per_alpha: dict[int, float],
    skipped: int,
    fitted: float | None = None,
    notes: tuple[str, ...] = (),
    alpha_profile: Sequence[float] | None = None,
) -> BoundCheck:
    if not ratios:
        trivially = skipped > 0
        return BoundCheck(
            name, 0.0, 0.0, INCONCLUSIVE, 1.0, INCONCLUSIVE, 1.0, 0, skipped, trivially,
            notes + (("every sample was skipped",) if trivially else ("no usable samples",)),
        )
    max_ratio = float(max(ratios))
    if alpha_profile is None:
        alpha_profile = [per_alpha[a] for a in sorted(per_alpha)]
    at, ag = _alpha_trend(alpha_profile)
    dt, dg = _distance_trend(ds, ratios)
    passed = math.isfinite(max_ratio) and at != GROWING and dt != GROWING
    return BoundCheck(
        name=name,
        fitted_constant=float(fitted) if fitted is not None else max_ratio,
        max_ratio=max_ratio,
        alpha_trend=at,
        alpha_growth=float(ag),
        distance_trend=dt,
        distance_growth=float(dg),
        samples_used=len(ratios),
        skipped=skipped,
        passed=passed,
        notes=notes,
    )


def _log_ratio(log_lhs: float, log_rhs: float) -> float:
    return math.exp(min(log_lhs - log_rhs, 700.0))


def verify_bounds(
    f: ExtensionFunction, *, samples: int = 400, alpha_cap: int = 8
) -> BoundReport:
    """Check every displayed estimate of the construction on a sample.

    Each check fits its free constant as the worst observed ratio and
    reports the ratio trend in the order and in the distance; a check
    passes when the ratios are finite and neither trend is growing.
    The two terminal estimates fit a growth base instead (one base for
    all orders, no per-order refit).  Failures are entries in the
    report, not exceptions, so a degenerate plan can be audited.
    """
    plan = f.plan
    cap = min(int(alpha_cap), plan.folds, f.jet.alpha_max)
    notes: list[str] = []
    if cap < alpha_cap:
        notes.append(f"order cap clipped to {cap} by folds or stored jet order")
    xs = region_samples(f, samples)
    ld = plan.dilation
    k3 = plan.constants.k3

    taylor_ratios: list[float] = []
    taylor_ds: list[float] = []
    taylor_alpha: dict[int, float] = {}
    consis_ratios: list[float] = []
    consis_ds: list[float] = []
    consis_alpha: dict[int, float] = {}
    pair_i_ratios: list[float] = []
    pair_i_ds: list[float] = []
    pair_i_alpha: dict[int, float] = {}
    pair_x_ratios: list[float] = []
    pair_x_ds: list[float] = []
    pair_x_alpha: dict[int, float] = {}
    resid_raw: list[tuple[float, int, float]] = []
    growth_raw: list[tuple[float, int, float]] = []
    skipped_pairs = 0
    skipped_resid = 0
    cap_hits = 0
    cutoff_hits = 0
    val_pairs = 0
    val_ok = True

    # Per-interval decay values at the dilated center distance.
    center_info: dict[int, tuple[float, float, bool]] = {}
    for i, c in enumerate(f.cover.centers):
        d_i, _ = distance_and_nearest(f.jet.e, float(c))
        lh, ok = _log_decay(f.degree_row, math.log(ld * d_i))
        center_info[i] = (d_i, lh, ok)

    for x in xs:
        x = float(x)
        d, xhat = distance_and_nearest(f.jet.e, x)
        anchor, _ = _nearest_base_point(f.jet, xhat)
        want, at_cut = _requested_degree(f.degree_row, ld, d)
        cutoff_hits += at_cut
        deg = min(want, f.jet.alpha_max)
        cap_hits += deg < want
        t_x = taylor_poly(f.jet, anchor, deg)
        glued = _glued_derivatives(f, x, cap)
        dev_x = _deviation_derivatives(f, x, cap, t_x)

        lh_near, near_ok = _log_decay(f.degree_row, math.log(3.0 * ld * d))
        lh_resid, resid_ok = _log_decay(f.residual_row, math.log(k3 * ld * d))
        # The residual estimate presumes the local degrees actually reach
        # what the distance asks for; once the stored jet order caps them
        # the sum decays polynomially, not at the profile rate.
        capped_here = deg < want or any(
            f.degrees[int(i)] < f.requested[int(i)]
            for i in f.cover.members(x, expanded=True)
        )

        for a in range(cap + 1):
            lhs = abs(t_x.derivative(a)(x))
            log_rhs = (a + 1) * math.log(2.0 * ld) + f.value_row_log[a]
            r = _log_ratio(math.log(lhs), log_rhs) if lhs > 0.0 else 0.0
            taylor_ratios.append(r)
            taylor_ds.append(d)
            taylor_alpha[a] = max(taylor_alpha.get(a, 0.0), r)

            if a < want and a + 1 < len(f.value_row_log):
                lhs_c = abs(t_x.derivative(a)(x) - f.jet.value(anchor, a))
                log_rhs_c = (
                    (a + 1) * math.log(2.0 * ld)
                    + math.lgamma(a + 1)
                    + f.value_row_log[a + 1]
                    - math.lgamma(a + 2)
                    + math.log(d)
                )
                r = _log_ratio(math.log(lhs_c), log_rhs_c) if lhs_c > 0.0 else 0.0
                consis_ratios.append(r)
                consis_ds.append(d)
                consis_alpha[a] = max(consis_alpha.get(a, 0.0), r)

            resid = abs(dev_x[a])
            if resid_ok and not capped_here:
                log_base = f.growth_row_log[a] + lh_resid
                resid_raw.append((math.log(resid) - log_base if resid > 0.0 else -math.inf, a, d))
            else:
                skipped_resid += 1

            total = abs(glued[a])
            growth_raw.append((math.log(total) - f.growth_row_log[a] if total > 0.0 else -math.inf, a, d))

        for i in f.cover.members(x, expanded=True):
            i = int(i)
            d_i, lh_far, i_ok = center_info[i]
            t_i = f.taylors[i]
            if t_i.center == t_x.center:
                val_pairs += 1
                if not _valuation_oks(f.jet, anchor, t_i, t_x):
                    val_ok = False
            diff_poly = _difference_poly(t_i, t_x)
            for b in range(cap + 1):
                if diff_poly is not None:
                    diff = abs(diff_poly.derivative(b)(x))
                else:
                    diff = abs(t_i.derivative(b)(x) - t_x.derivative(b)(x))
                log_diff = math.log(diff) if diff > 0.0 else -math.inf
                log_row = math.lgamma(b + 1) + f.degree_row.log_values[b]
                if i_ok:
                    log_rhs = (b + 1) * math.log(ld) + log_row + lh_far
                    r = _log_ratio(log_diff, log_rhs)
                    pair_i_ratios.append(r)
                    pair_i_ds.append(d_i)
                    pair_i_alpha[b] = max(pair_i_alpha.get(b, 0.0), r)
                else:
                    skipped_pairs += 1
                if near_ok:
                    log_rhs = (b + 1) * math.log(3.0 * ld) + log_row + lh_near
                    r = _log_ratio(log_diff, log_rhs)
                    pair_x_ratios.append(r)
                    pair_x_ds.append(d)
                    pair_x_alpha[b] = max(pair_x_alpha.get(b, 0.0), r)
                else:
                    skipped_pairs += 1

    # Fit one growth base per terminal estimate, in log space.  The base
    # is the worst (a + 1)-th root of the per-order log envelope, which
    # makes the companion constant at most one over the sample, so every
    # normalized ratio is bounded by one.
    def order_envelope(raw: list[tuple[float, int, float]]) -> dict[int, float]:
        env: dict[int, float] = {}
        for log_r, a, _ in raw:
            env[a] = max(env.get(a, -math.inf), log_r)
        return env

    def fit_log_base(env: dict[int, float]) -> float:
        vals = [v / (a + 1) for a, v in env.items() if v > -math.inf]
        return max([0.0] + vals)

    def slope_profile(env: dict[int, float]) -> list[float]:
        # Consecutive chord slopes of the log envelope.  A uniform base
        # exists exactly when these stabilize rather than keep growing,
        # so the order verdict is taken on this profile.  The normalized
        # per-order maxima rise toward one at the binding order by
        # construction and carry no verdict of their own.
        orders = sorted(a for a, v in env.items() if v > -math.inf)
        return [
            math.exp(min((env[a2] - env[a1]) / (a2 - a1), 700.0))
            for a1, a2 in zip(orders, orders[1:])
        ]

    resid_env = order_envelope(resid_raw)
    growth_env = order_envelope(growth_raw)
    log_m1 = fit_log_base(resid_env)
    log_m = fit_log_base(growth_env)
    m1 = math.exp(min(log_m1, 700.0))
    m = math.exp(min(log_m, 700.0))

    def normalize(raw, log_base):
        ratios, ds, per_alpha = [], [], {}
        for log_r, a, d in raw:
            r = math.exp(log_r - (a + 1) * log_base) if log_r > -math.inf else 0.0
            ratios.append(r)
            ds.append(d)
            per_alpha[a] = max(per_alpha.get(a, 0.0), r)
        return ratios, ds, per_alpha

    resid_n = normalize(resid_raw, log_m1)
    growth_n = normalize(growth_raw, log_m)

    checks = (
        _finish_check("taylor_value_bound", taylor_ratios, taylor_ds, taylor_alpha, 0),
        _finish_check("taylor_jet_consistency", consis_ratios, consis_ds, consis_alpha, 0),
        _finish_check(
            "pair_difference_interval", pair_i_ratios, pair_i_ds, pair_i_alpha, skipped_pairs
        ),
        _finish_check(
            "pair_difference_point", pair_x_ratios, pair_x_ds, pair_x_alpha, 0
        ),
        _finish_check(
            "residual_decay", resid_n[0], resid_n[1], resid_n[2], skipped_resid,
            fitted=m1, alpha_profile=slope_profile(resid_env),
        ),
        _finish_check(
            "global_derivative_growth", growth_n[0], growth_n[1], growth_n[2], 0,
            fitted=m, alpha_profile=slope_profile(growth_env),
        ),
    )
    return BoundReport(
        checks=checks,
        sample_count=len(xs),
        alpha_cap=cap,
        fitted_m=m,
        fitted_m1=m1,
        degree_cap_hits=cap_hits,
        degree_cutoff_hits=cutoff_hits,
        valuation_pairs=val_pairs,
        valuation_ok=val_ok,
        plan=plan,
        notes=tuple(notes),
    )


def _valuation_oks(
    jet: UltraJet, anchor: float, t_i: TaylorPolynomial, t_x: TaylorPolynomial
) -> bool:
    """Shared-anchor difference must vanish exactly to the lower degree.

    Truncations of one derivative row differ exactly by the row entries
    beyond the lower degree, so the first nonzero coefficient of the
    difference sits at min degree + 1 whenever that row entry is nonzero.
    """
    a, b = t_i.derivs, t_x.derivs
    lo = min(len(a), len(b))
    if a[:lo] != b[:lo]:
        return False
    if len(a) == len(b):
        return a == b
    tail = a[lo:] if len(a) > len(b) else b[lo:]
    row = jet.row(anchor)
    first = next((k for k, v in enumerate(tail) if v != 0.0), None)
    expected = next(
        (k for k in range(lo, lo + len(tail)) if row[k] != 0.0), None
    )
    if expected is None:
        return first is None
    return first is not None and lo + first == expected


# -- boundary limits ----------------------------------------------------


@dataclass(frozen=True)
class BoundaryStep:
    index: int
    x: float
    distance: float
    decay: float
    errors: tuple[float, ...]


@dataclass(frozen=True)
class BoundaryReport:
    """Dyadic approach of the extension derivatives to the jet values.

    fitted[a] is the smallest constant with e_j <= fitted * (d_j + decay_j)
    over the recorded steps; the trend fields say whether that ratio was
    still rising when the descent stopped.
    """

    a: float
    alpha_cap: int
    steps: tuple[BoundaryStep, ...]
    fitted: tuple[float, ...]
    nonincreasing: tuple[bool, ...]
    ratio_trend: tuple[str, ...]
    floor_index: int | None
    floor_reason: str | None
    decay_scale: float

    def errors_for(self, alpha: int) -> np.ndarray:
        return np.array([s.errors[alpha] for s in self.steps])

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "alpha_cap": self.alpha_cap,
            "steps": [
                {
                    "index": s.index,
                    "x": s.x,
                    "distance": s.distance,
                    "decay": s.decay,
                    "errors": list(s.errors),
                }
                for s in self.steps
            ],
            "fitted": list(self.fitted),
            "nonincreasing": list(self.nonincreasing),
            "ratio_trend": list(self.ratio_trend),
            "floor_index": self.floor_index,
            "floor_reason": self.floor_reason,
            "decay_scale": self.decay_scale,
        }


def boundary_limits(
    f: ExtensionFunction, alpha_cap: int, a: float, *, max_index: int = 60
) -> BoundaryReport:
    """Watch f approach its jet along a + 2^-j for j up to max_index.

    The descent stops early, with the index and reason recorded, when
    the decay scale stops being resolvable or the points drop below the
    cover depth.  PrecisionFloor is raised only if already the first
    step is unresolvable.
    """
    if not 0 <= alpha_cap <= min(f.plan.folds, f.jet.alpha_max):
        raise OrderOverflow(
            f"alpha_cap {alpha_cap} exceeds folds or the stored jet order"
        )
    jet_row = [f.jet.value(a, al) for al in range(alpha_cap + 1)]
    scale = f.plan.constants.k3 * f.plan.dilation

    j0 = 0
    while 2.0**-j0 >= f.d_max:
        j0 += 1
        if j0 > max_index:
            raise PrecisionFloor("no dyadic step lands inside the region")

    steps: list[BoundaryStep] = []
    floor_index: int | None = None
    floor_reason: str | None = None
    for j in range(j0, max_index + 1):
        step = 2.0**-j
        x = a + step
        d, _ = distance_and_nearest(f.jet.e, x)
        if d == 0.0:
            floor_index, floor_reason = j, "step landed inside the set"
            break
        if d < f.cover.d_min_covered:
            floor_index, floor_reason = j, "below the resolved cover depth"
            break
        # Any decay value below d * eps adds nothing to d + decay in
        # floating point, so an unresolved tail down there is harmless.
        lh, settled = _log_decay(
            f.residual_row,
            math.log(scale * d),
            negligible_below=math.log(d) + _LOG_EPS,
        )
        if not settled:
            floor_index, floor_reason = j, "decay scale unresolved at the stored order"
            break
        errs = tuple(
            abs(eval_derivative(f, x, al) - jet_row[al]) for al in range(alpha_cap + 1)
        )
        steps.append(BoundaryStep(j, x, d, math.exp(lh), errs))
    if not steps:
        raise PrecisionFloor(
            f"first dyadic step already unresolvable: {floor_reason}"
        )

    fitted = []
    noninc = []
    trends = []
    slack = 1e-12
    for al in range(alpha_cap + 1):
        e = np.array([s.errors[al] for s in steps])
        denom = np.array([s.distance + s.decay for s in steps])
        ratios = e / denom
        fitted.append(float(ratios.max()))
        tol = slack * (1.0 + float(e.max(initial=0.0)))
        noninc.append(bool(np.all(np.diff(e) <= tol)))
        if len(ratios) >= 8:
            verdict, _ = range_trend(ratios + 1e-300)
        else:
            verdict = INCONCLUSIVE
        trends.append(verdict)
    return BoundaryReport(
        a=float(a),
        alpha_cap=alpha_cap,
        steps=tuple(steps),
        fitted=tuple(fitted),
        nonincreasing=tuple(noninc),
        ratio_trend=tuple(trends),
        floor_index=floor_index,
        floor_reason=floor_reason,
        decay_scale=scale,
    )
