"""Bump splines, the normalized family, and the derivative envelope fit."""

import dataclasses
import functools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultraext._fitting import BOUNDED
from ultraext.errors import DegenerateSupport, UncoveredPoint
from ultraext.partition_of_unity import (
    MARGIN_FRACTION,
    BumpSpec,
    Partition,
    PiecewisePolynomial,
    build_bump,
    build_partition,
    check_derivative_bound,
)
from ultraext.seq_calculus import WeightSequence
from ultraext.whitney_geometry import (
    CompactSet1D,
    build_cover,
    covered_sample_grid,
    distance_grid,
)


@functools.lru_cache(maxsize=None)
def point_partition():
    cover = build_cover(CompactSet1D.from_points([0.0]), 1.0, max_generation=8)
    return build_partition(cover, 8)


@functools.lru_cache(maxsize=None)
def mixed_partition():
    e = CompactSet1D(((-1.0, 0.0), (1.0, 1.0)))
    cover = build_cover(e, 1.0, max_generation=7)
    return build_partition(cover, 8)


def fd_deriv(fun, x, order, step, levels=3):
    """Central difference with Richardson extrapolation in the step."""

    def diff(s):
        total = 0.0
        for j in range(order + 1):
            total += (-1) ** j * math.comb(order, j) * fun(x + (order / 2 - j) * s)
        return total / s**order

    vals = [diff(step / 2**k) for k in range(levels)]
    fac = 4.0
    while len(vals) > 1:
        vals = [(fac * vals[k + 1] - vals[k]) / (fac - 1.0) for k in range(len(vals) - 1)]
        fac *= 4.0
    return vals[0]


def test_piecewise_validation():
    with pytest.raises(ValueError):
        PiecewisePolynomial((0.0,), ())
    with pytest.raises(ValueError):
        PiecewisePolynomial((0.0, 0.0), ((1.0,),))
    with pytest.raises(ValueError):
        PiecewisePolynomial((0.0, 1.0, 2.0), ((1.0,),))
    with pytest.raises(ValueError):
        PiecewisePolynomial((0.0, 1.0), ((),))
    with pytest.raises(ValueError):
        PiecewisePolynomial((0.0, 1.0), ((math.nan,),))


def test_piecewise_evaluation_uses_local_coordinates():
    f = PiecewisePolynomial((0.0, 1.0, 3.0), ((0.0, 1.0), (1.0, -1.0)))
    assert f(0.5) == 0.5
    assert f(1.0) == 1.0  # right-continuous: the second piece owns x=1
    assert f(2.0) == 0.0
    assert f(3.0) == -1.0  # rightmost breakpoint belongs to the last piece
    assert f(-0.1) == 0.0 and f(3.1) == 0.0
    assert f.piece_index(0.2) == 0
    assert f.piece_index(3.0) == 1
    assert f.piece_index(5.0) == -1
    assert f.support == (0.0, 3.0)
    assert f.degree == 1
    out = f(np.array([0.5, 2.0, 10.0]))
    assert out.tolist() == [0.5, 0.0, 0.0]


def test_piecewise_derivative_and_integral():
    f = PiecewisePolynomial((0.0, 2.0), ((1.0, 0.0, 3.0),))
    g = f.derivative()
    assert g.pieces == ((0.0, 6.0),)
    assert g(1.0) == 6.0
    # integral of 1 + 3 t^2 over [0, 2] in the local variable
    assert f.integral() == 2.0 + 8.0


def test_sup_norm_exact_on_a_quadratic():
    f = PiecewisePolynomial((0.0, 1.0), ((0.0, 1.0, -1.0),))
    assert f.sup_norm() == 0.25
    g = PiecewisePolynomial((0.0, 1.0, 3.0), ((0.0, 1.0), (1.0, -1.0)))
    assert g.sup_norm() == 1.0  # attained at the middle breakpoint


def test_piecewise_json_round_trip():
    f = PiecewisePolynomial((0.0, 0.5, 1.25), ((0.25,), (0.25, -1.0, 2.0)))
    doc = json.loads(json.dumps(f.to_json()))
    assert PiecewisePolynomial.from_json(doc) == f


def test_bump_spec_validation():
    with pytest.raises(DegenerateSupport):
        BumpSpec((0.0, 1.0), 0.0, 2)
    with pytest.raises(DegenerateSupport):
        BumpSpec((0.0, 1.0), -0.5, 2)
    with pytest.raises(ValueError):
        BumpSpec((0.0, 1.0), 0.5, 0)
    with pytest.raises(ValueError):
        BumpSpec((1.0, 0.0), 0.5, 2)
    spec = BumpSpec((0.0, 1.0), 0.5, 4)
    assert spec.width == 0.125
    assert spec.support == (-0.5, 1.5)


def test_triangle_bump_frozen_values():
    b = build_bump(BumpSpec((0.0, 0.0), 2.0, 1))
    assert b.support == (-2.0, 2.0)
    assert b.degree == 1
    assert b(0.0) == 1.0
    assert b(1.0) == 0.5 and b(-1.0) == 0.5
    assert b(2.0) == 0.0
    assert b.integral() == 2.0


def test_plateau_support_and_range():
    spec = BumpSpec((0.0, 1.0), 0.5, 3)
    b = build_bump(spec)
    # width 1/6 is not dyadic, so endpoints may carry an ulp of drift
    assert abs(b.support[0] + 0.5) <= 1e-12
    assert abs(b.support[1] - 1.5) <= 1e-12
    for x in (0.0, 0.25, 0.5, 1.0):
        assert abs(b(x) - 1.0) <= 1e-14
    xs = np.linspace(-0.6, 1.6, 2000)
    vals = b(xs)
    assert np.all(vals >= -1e-14) and np.all(vals <= 1.0 + 1e-14)
    assert abs(b.integral() - 1.5) <= 1e-13


def test_single_fold_ramp_slope_is_exact():
    b = build_bump(BumpSpec((0.0, 1.0), 0.25, 1))
    assert b.derivative().sup_norm() == 4.0  # 1 / width


def test_derivative_chain_bound():
    # Every derivative up to the fold count obeys (2 / width)^order.
    spec = BumpSpec((0.0, 0.5), 0.5 * MARGIN_FRACTION, 8)
    cap = 2.0 / spec.width
    cur = build_bump(spec)
    assert cur.sup_norm() <= 1.0 + 1e-12
    for order in range(1, 9):
        cur = cur.derivative()
        assert cur.sup_norm() <= cap**order * (1.0 + 1e-12)


def test_single_bump_partition_is_identity():
    bump = build_bump(BumpSpec((0.0, 1.0), 0.25, 4))
    part = Partition.from_bumps([bump], 4)
    assert len(part) == 1
    for x in (-0.2, 0.0, 0.37, 1.0, 1.2):
        assert part.value(0, x) == 1.0
        assert part.derivatives(0, x, 4).tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]
    assert part.value(0, 2.0) == 0.0
    assert part.sup_norm(0, 0) == 1.0
    assert part.sup_norm(0, 3) == 0.0


def test_two_bump_overlap_sums_to_one():
    bumps = [
        build_bump(BumpSpec((0.0, 1.0), 0.25, 3)),
        build_bump(BumpSpec((1.0, 2.0), 0.25, 3)),
    ]
    part = Partition.from_bumps(bumps, 3)
    xs = np.linspace(-0.2, 2.2, 4001)
    sums = part.values_matrix(xs).sum(axis=0)
    assert np.max(np.abs(sums - 1.0)) <= 1e-12
    # both bumps genuinely alive somewhere in the overlap
    mid = part.values_matrix(np.array([1.0]))
    assert mid[0, 0] > 0.0 and mid[1, 0] > 0.0


@pytest.mark.parametrize("factory", [point_partition, mixed_partition])
def test_cover_partition_sums_to_one(factory):
    part = factory()
    xs = covered_sample_grid(part.cover, 10_000)
    assert xs.size >= 10_000
    sums = part.values_matrix(xs).sum(axis=0)
    assert np.max(np.abs(sums - 1.0)) <= 1e-12


@pytest.mark.parametrize("factory", [point_partition, mixed_partition])
def test_supports_stay_inside_expanded_intervals(factory):
    part = factory()
    cover = part.cover
    halves = cover.expanded_halfwidths()
    for i, bump in enumerate(part.bumps):
        lo, hi = bump.support
        assert lo >= cover.centers[i] - halves[i] - 1e-12
        assert hi <= cover.centers[i] + halves[i] + 1e-12
        width = (1.0 + 2.0 * MARGIN_FRACTION) * cover.sides[i]
        assert abs((hi - lo) - width) <= 1e-12 * max(1.0, width)


def test_dropping_a_cell_breaks_coverage():
    cover = point_partition().cover
    drop = int(np.argsort(np.abs(cover.centers))[len(cover.centers) // 2])
    keep = [k for k in range(len(cover.centers)) if k != drop]
    broken = dataclasses.replace(
        cover,
        centers=tuple(cover.centers[k] for k in keep),
        sides=tuple(cover.sides[k] for k in keep),
        generations=tuple(cover.generations[k] for k in keep),
    )
    with pytest.raises(UncoveredPoint):
        build_partition(broken, 3)


def test_build_partition_rejects_bad_parameters():
    cover = point_partition().cover
    with pytest.raises(ValueError):
        build_partition(cover, 0)
    narrow = build_cover(
        CompactSet1D.from_points([0.0]), 1.0, expansion=1.05, max_generation=4
    )
    with pytest.raises(ValueError):
        build_partition(narrow, 3)
    with pytest.raises(ValueError):
        Partition.from_bumps([], 2)


def test_order_caps():
    part = point_partition()
    with pytest.raises(ValueError):
        part.derivatives(0, 0.5, 9)
    with pytest.raises(ValueError):
        part.derivatives(0, 0.5, -1)
    with pytest.raises(ValueError):
        part.sup_norm(0, 9)


def test_quotient_derivatives_match_difference_oracle():
    part = point_partition()
    bp = part.breakpoints
    cands = [
        j
        for j, act in enumerate(part.piece_active)
        if len(act) >= 2 and bp[j + 1] - bp[j] > 5e-4
    ]
    rng = np.random.default_rng(20260822)
    worst = 0.0
    for j in rng.choice(cands, size=10, replace=False):
        w = float(bp[j + 1] - bp[j])
        i = int(rng.choice(part.piece_active[j]))
        probe = bp[j] + w * np.linspace(0.25, 0.75, 25)
        for order in range(1, 5):
            mags = [abs(part.derivatives(i, float(x), order)[order]) for x in probe]
            x0 = float(probe[int(np.argmax(mags))])
            exact = part.derivatives(i, x0, order)[order]
            approx = fd_deriv(lambda t: part.value(i, t), x0, order, w / 10.0)
            worst = max(worst, abs(approx - exact) / abs(exact))
    assert worst <= 1e-6


def test_derivative_sums_of_the_family_vanish():
    part = point_partition()
    cover = part.cover
    xs = covered_sample_grid(cover, 64)[::7]
    for x in xs:
        idx = cover.members(float(x), expanded=True)
        stack = np.array([part.derivatives(int(i), float(x), 4) for i in idx])
        sums = stack.sum(axis=0)
        scale = max(1.0, float(np.max(np.abs(stack))))
        assert abs(sums[0] - 1.0) <= 1e-9 * scale
        assert np.max(np.abs(sums[1:])) <= 1e-9 * scale


def test_sup_norm_dominates_dense_grid():
    part = point_partition()
    i = len(part) // 2
    lo, hi = part.bumps[i].support
    xs = np.linspace(lo, hi, 2001)
    for order in (1, 3):
        exact = part.sup_norm(i, order)
        grid = max(abs(part.derivatives(i, float(x), order)[order]) for x in xs)
        assert grid <= exact * (1.0 + 1e-9)
        assert exact <= grid * 1.05


def test_derivative_bound_report():
    cover = build_cover(CompactSet1D.from_points([0.0]), 1.0, max_generation=6)
    part = build_partition(cover, 8)
    row = WeightSequence.factorial_power(1.0, 256)
    report = check_derivative_bound(part, row, 8)
    assert report.fold_count == 8 and report.beta_max == 8
    assert report.envelope_b == 1.0
    assert report.m_trend == BOUNDED
    assert report.clamped_envelopes == 0
    assert report.geometric_rate >= 1.0
    assert len(report.per_beta_m) == 9 and len(report.normalized_m) == 9
    # order zero needs no geometric help: phi values stay below one
    assert report.per_beta_m[0] <= 1.0
    assert report.fitted_m == pytest.approx(max(report.normalized_m), rel=1e-12)
    assert report.sample_count == 256
    assert len(report.sup_norms) == len(part)
    for row_sup in report.sup_norms:
        assert row_sup[0] <= 1.0 + 1e-12


def test_derivative_bound_errors():
    part = point_partition()
    row = WeightSequence.factorial_power(1.0, 64)
    bare = Partition.from_bumps([build_bump(BumpSpec((0.0, 1.0), 0.25, 2))], 2)
    with pytest.raises(ValueError):
        check_derivative_bound(bare, row, 2)
    with pytest.raises(ValueError):
        check_derivative_bound(part, row, 9)
    short = WeightSequence.factorial_power(1.0, 16)
    tall = Partition.from_bumps(part.bumps, 17, cover=part.cover)
    with pytest.raises(ValueError):
        check_derivative_bound(tall, short, 17)
    with pytest.raises(ValueError):
        check_derivative_bound(part, row, 4, sample_points=[0.25, 0.0])


@settings(max_examples=60, deadline=None)
@given(
    lo=st.floats(-5.0, 5.0),
    length=st.floats(0.0, 3.0),
    margin=st.floats(0.05, 2.0),
    folds=st.integers(1, 4),
)
def test_bump_profile_properties(lo, length, margin, folds):
    spec = BumpSpec((lo, lo + length), margin, folds)
    b = build_bump(spec)
    slo, shi = b.support
    assert abs(slo - (lo - margin)) <= 1e-12 * max(1.0, abs(lo) + margin)
    assert abs(shi - (lo + length + margin)) <= 1e-12 * max(1.0, abs(lo) + length + margin)
    for t in (0.0, 0.5, 1.0):
        assert abs(b(lo + t * length) - 1.0) <= 1e-12
    xs = np.linspace(slo, shi, 500)
    vals = b(xs)
    assert np.all(vals >= -1e-12) and np.all(vals <= 1.0 + 1e-12)
    assert abs(b(slo)) <= 1e-12 and abs(b(shi)) <= 1e-12
    target = length + margin
    assert abs(b.integral() - target) <= 1e-10 * max(1.0, target)
