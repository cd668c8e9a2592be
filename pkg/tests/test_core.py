"""Windows, point patterns, serialization round trips, RNG streams, and the
closed-form intensity identities everything downstream is checked against."""

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from exactpp import (
    ConfigError,
    LebesgueIntensity,
    PointPattern,
    RngStream,
    SamplerError,
    UniformDisplacement,
    Window,
    branching_total_intensity,
    cluster_intensity,
    window_volume,
)

UNIT = Window((0.0,), (1.0,))


# -- windows ---------------------------------------------------------------------


def test_window_volume_examples():
    assert window_volume(Window((0.0,), (1.0,))) == 1.0
    assert window_volume(Window((0.0, 0.0, 0.0), (1.0, 2.0, 3.0))) == 6.0
    assert window_volume(Window((-1.0,), (1.0,))) == 2.0


def test_window_rejects_degenerate_boxes():
    with pytest.raises(ConfigError):
        Window((0.0,), (0.0,))
    with pytest.raises(ConfigError):
        Window((0.0, 0.0), (1.0,))
    with pytest.raises(ConfigError):
        Window((2.0,), (1.0,))
    with pytest.raises(ConfigError):
        Window((), ())


def test_window_contains_is_closed():
    w = Window((0.0, 0.0), (1.0, 2.0))
    pts = np.array([[0.0, 0.0], [1.0, 2.0], [0.5, 1.0], [1.0 + 1e-12, 1.0], [-0.1, 1.0]])
    assert w.contains(pts).tolist() == [True, True, True, False, False]


def test_window_buffered_and_shifted():
    w = Window((0.0,), (1.0,))
    b = w.buffered(0.5)
    assert b.lower == (-0.5,) and b.upper == (1.5,)
    s = w.shifted(-0.25, 0.25)
    assert s.lower == (-0.25,) and s.upper == (1.25,)
    with pytest.raises(ConfigError):
        w.buffered(-0.1)


def test_window_uniform_sampling_stays_inside():
    w = Window((-1.0, 2.0), (1.0, 5.0))
    rng = RngStream(11, 0).generator()
    pts = w.sample_uniform(500, rng)
    assert pts.shape == (500, 2)
    assert np.all(w.contains(pts))


# -- intensity identities ----------------------------------------------------------


def test_cluster_intensity_product_form():
    germ = LebesgueIntensity(1.0, dim=1)
    assert cluster_intensity(germ, UNIT, mean_cluster_size=2.0) == pytest.approx(2.0)
    assert cluster_intensity(LebesgueIntensity(0.0, 1), UNIT, mean_cluster_size=7.0) == 0.0
    assert cluster_intensity(LebesgueIntensity(0.5, 1), UNIT, mean_cluster_size=3.0) == pytest.approx(1.5)
    square = Window((0.0, 0.0), (2.0, 2.0))
    assert cluster_intensity(LebesgueIntensity(0.5, 2), square, mean_cluster_size=3.0) == pytest.approx(6.0)


def test_cluster_intensity_quadrature_matches_product_form():
    # translation-invariant kernel: quadrature of K(y, W - y) over the germ
    # must reproduce rate * mean_size * |W| (Fubini), here 1 * 2 * 10 = 20
    window = Window((0.0,), (10.0,))
    disp = UniformDisplacement((-0.5,), (0.5,))

    def kernel_mass(ys, w):
        return 2.0 * disp.prob_in(np.asarray(ys, dtype=float)[:, None], w)

    got = cluster_intensity(LebesgueIntensity(1.0, 1), window, kernel_mass=kernel_mass)
    assert got == pytest.approx(20.0, rel=1e-3)


def test_cluster_intensity_argument_contract():
    germ = LebesgueIntensity(1.0, dim=1)
    with pytest.raises(ConfigError):
        cluster_intensity(germ, UNIT)
    # the product shortcut is only licensed for Lebesgue germs
    from exactpp import DensityIntensity

    bumpy = DensityIntensity(lambda pts: np.ones(pts.shape[0]), bound=1.0, dim=1)
    with pytest.raises(ConfigError):
        cluster_intensity(bumpy, UNIT, mean_cluster_size=2.0)


def test_branching_total_intensity_examples():
    assert branching_total_intensity(1.0, 0.5) == pytest.approx(2.0)
    assert branching_total_intensity(1.0, 0.0) == pytest.approx(1.0)
    assert branching_total_intensity(2.0, 0.9) == pytest.approx(20.0)
    assert branching_total_intensity(1.0, 0.5, generation=3) == pytest.approx(0.125)
    assert branching_total_intensity(2.0, 0.9, generation=0) == pytest.approx(2.0)


def test_branching_total_intensity_rejects_bad_mass():
    with pytest.raises(SamplerError):
        branching_total_intensity(1.0, 1.0)
    with pytest.raises(SamplerError):
        branching_total_intensity(1.0, 1.5)
    with pytest.raises(ConfigError):
        branching_total_intensity(1.0, -0.1)


def test_branching_total_intensity_monotone_in_both_arguments():
    rates = [0.5, 1.0, 2.0]
    masses = [0.0, 0.3, 0.6, 0.9]
    for m in masses:
        vals = [branching_total_intensity(r, m) for r in rates]
        assert vals == sorted(vals)
    for r in rates:
        vals = [branching_total_intensity(r, m) for m in masses]
        assert vals == sorted(vals)


# -- RNG streams -------------------------------------------------------------------


def test_rng_stream_reproducible_and_splittable():
    a = RngStream(123, 4).generator().random(32)
    b = RngStream(123, 4).generator().random(32)
    assert np.array_equal(a, b)

    other_stream = RngStream(123, 5).generator().random(32)
    assert not np.array_equal(a, other_stream)

    sub1 = RngStream(123, 4).substream(7).generator().random(32)
    sub1_again = RngStream(123, 4).substream(7).generator().random(32)
    sub2 = RngStream(123, 4).substream(8).generator().random(32)
    assert np.array_equal(sub1, sub1_again)
    assert not np.array_equal(sub1, sub2)
    assert not np.array_equal(sub1, a)


# -- point-pattern algebra ----------------------------------------------------------


points_2d = st.lists(
    st.tuples(
        st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False),
        st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False),
    ),
    max_size=30,
)


@settings(deadline=None, max_examples=60)
@given(points_2d, points_2d)
def test_superposition_counts_are_additive(pa, pb):
    a = PointPattern(np.asarray(pa, dtype=float).reshape(-1, 2), dim=2)
    b = PointPattern(np.asarray(pb, dtype=float).reshape(-1, 2), dim=2)
    both = a.superpose(b)
    assert both.n == a.n + b.n
    w = Window((0.25, 0.25), (0.75, 0.75))
    assert both.count_in(w) == a.count_in(w) + b.count_in(w)


@settings(deadline=None, max_examples=60)
@given(
    points_2d,
    st.floats(0.05, 0.45),
    st.floats(0.55, 0.95),
)
def test_restriction_is_monotone_in_the_window(pts, lo, hi):
    pat = PointPattern(np.asarray(pts, dtype=float).reshape(-1, 2), dim=2)
    small = Window((lo, lo), (hi, hi))
    big = Window((0.0, 0.0), (1.0, 1.0))
    inner = pat.restrict(small)
    outer = pat.restrict(big)
    assert inner.n <= outer.n
    assert inner.restrict(small).n == inner.n  # idempotent


@settings(deadline=None, max_examples=60)
@given(
    st.lists(st.floats(0.0, 1.0, allow_nan=False), max_size=30),
    st.floats(0.1, 0.9),
)
def test_disjoint_split_counts_add_up(xs, cut):
    assume(all(x != cut for x in xs))
    pat = PointPattern(np.asarray(xs, dtype=float).reshape(-1, 1), dim=1)
    left = Window((0.0,), (cut,))
    right = Window((cut,), (1.0,))
    whole = Window((0.0,), (1.0,))
    assert pat.count_in(left) + pat.count_in(right) == pat.count_in(whole)


def test_pattern_rejects_mismatched_marks():
    with pytest.raises(ValueError):
        PointPattern(np.zeros((3, 1)), marks=np.zeros(2))


def test_sorted_gives_canonical_row_order():
    pat = PointPattern(np.array([[2.0, 0.0], [1.0, 5.0], [1.0, 3.0]]), marks=[10.0, 20.0, 30.0])
    s = pat.sorted()
    assert np.array_equal(s.points, np.array([[1.0, 3.0], [1.0, 5.0], [2.0, 0.0]]))
    assert np.array_equal(s.marks, np.array([30.0, 20.0, 10.0]))


# -- serialization -------------------------------------------------------------------


def test_csv_round_trip_is_exact(tmp_path):
    rng = RngStream(5, 0).generator()
    pat = PointPattern(rng.random((17, 2)) * 1e3, marks=rng.random(17), dim=2)
    path = tmp_path / "pat.csv"
    pat.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "x1,x2,mark"
    back = PointPattern.from_csv(path)
    assert np.array_equal(back.points, pat.points)
    assert np.array_equal(back.marks, pat.marks)


def test_csv_header_for_unmarked_1d():
    pat = PointPattern(np.array([[0.5], [0.25]]), dim=1)
    import io, tempfile, os

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "p.csv")
        pat.to_csv(path)
        lines = open(path).read().splitlines()
    assert lines[0] == "x1"
    assert len(lines) == 3


def test_empty_pattern_csv_round_trip(tmp_path):
    path = tmp_path / "empty.csv"
    PointPattern.empty(3).to_csv(path)
    assert path.read_text() == "x1,x2,x3\n"
    back = PointPattern.from_csv(path)
    assert back.n == 0 and back.dim == 3


def test_json_round_trip_preserves_pattern_and_meta(tmp_path):
    rng = RngStream(6, 0).generator()
    pat = PointPattern(rng.random((9, 3)), marks=rng.random(9), dim=3)
    path = tmp_path / "pat.json"
    pat.to_json(path, meta={"seed": 6, "sampler": "unit-test"})
    back, meta = PointPattern.from_json(path)
    assert np.array_equal(back.points, pat.points)
    assert np.array_equal(back.marks, pat.marks)
    assert meta == {"seed": 6, "sampler": "unit-test"}


def test_negative_zero_is_normalized_in_files(tmp_path):
    path = tmp_path / "z.csv"
    PointPattern(np.array([[-0.0]]), dim=1).to_csv(path)
    assert "-0.0" not in path.read_text()
