import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from motionmil.flowio import (
    BadMagic,
    FlowField,
    NonFinite,
    Truncated,
    colorize,
    colorize_float,
    distance_from_white,
    magnitude,
    make_colorwheel,
    normalize_magnitudes,
    read_flow_file,
    write_flow_file,
    write_png,
    MagnitudeMap,
)

from conftest import random_flow
from oracles import colorize_pixel_oracle, magnitude_oracle


def _flo_bytes(u, v):
    u = np.asarray(u, dtype="<f4")
    v = np.asarray(v, dtype="<f4")
    h, w = u.shape
    pairs = np.empty((h, w, 2), dtype="<f4")
    pairs[..., 0] = u
    pairs[..., 1] = v
    return struct.pack("<fii", 202021.25, w, h) + pairs.tobytes()


class TestFlowFileIO:
    def test_reads_1x1_zero_field(self, tmp_path):
        path = tmp_path / "zero.flo"
        path.write_bytes(_flo_bytes([[0.0]], [[0.0]]))
        flow = read_flow_file(path)
        assert (flow.width, flow.height) == (1, 1)
        assert flow.u[0, 0] == 0.0 and flow.v[0, 0] == 0.0

    def test_writes_exact_20_byte_layout(self, tmp_path):
        path = tmp_path / "one.flo"
        write_flow_file(FlowField(u=np.array([[1.5]]), v=np.array([[-2.0]])), path)
        data = path.read_bytes()
        assert len(data) == 20
        assert struct.unpack("<fiiff", data) == (202021.25, 1, 1, 1.5, -2.0)

    def test_2x1_field_is_28_bytes(self, tmp_path):
        path = tmp_path / "two.flo"
        write_flow_file(
            FlowField(u=np.array([[1.0, 2.0]]), v=np.array([[3.0, 4.0]])), path
        )
        assert len(path.read_bytes()) == 28

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.flo"
        path.write_bytes(struct.pack("<fii", 123.0, 1, 1) + b"\x00" * 8)
        with pytest.raises(BadMagic):
            read_flow_file(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.flo"
        path.write_bytes(_flo_bytes([[0.0, 0.0]], [[0.0, 0.0]])[:-4])
        with pytest.raises(Truncated):
            read_flow_file(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "long.flo"
        path.write_bytes(_flo_bytes([[0.0]], [[0.0]]) + b"\x00")
        with pytest.raises(Truncated):
            read_flow_file(path)

    def test_nonfinite_rejected_by_default(self, tmp_path):
        path = tmp_path / "nan.flo"
        path.write_bytes(_flo_bytes([[np.nan]], [[0.0]]))
        with pytest.raises(NonFinite):
            read_flow_file(path)

    def test_nonfinite_zero_substitution(self, tmp_path):
        path = tmp_path / "inf.flo"
        path.write_bytes(_flo_bytes([[np.inf, 1.0]], [[0.5, np.nan]]))
        with pytest.warns(UserWarning):
            flow = read_flow_file(path, nonfinite="zero")
        assert flow.u.tolist() == [[0.0, 1.0]]
        assert flow.v.tolist() == [[0.5, 0.0]]

    @settings(max_examples=40, deadline=None)
    @given(
        data=st.integers(1, 6).flatmap(
            lambda h: st.integers(1, 6).flatmap(
                lambda w: st.tuples(
                    arrays("<f4", (h, w), elements=st.floats(-1e6, 1e6, width=32)),
                    arrays("<f4", (h, w), elements=st.floats(-1e6, 1e6, width=32)),
                )
            )
        )
    )
    def test_round_trip_is_byte_identical(self, data, tmp_path_factory):
        u, v = data
        tmp = tmp_path_factory.mktemp("flo")
        original = _flo_bytes(u, v)
        src = tmp / "src.flo"
        src.write_bytes(original)
        flow = read_flow_file(src)
        dst = tmp / "dst.flo"
        write_flow_file(flow, dst)
        assert dst.read_bytes() == original
        again = read_flow_file(dst)
        assert np.array_equal(again.u, flow.u) and np.array_equal(again.v, flow.v)


class TestMagnitude:
    def test_three_four_five(self):
        flow = FlowField(u=np.array([[3.0]]), v=np.array([[4.0]]))
        assert magnitude(flow).mag[0, 0] == 5.0

    def test_zero_field(self):
        flow = FlowField(u=np.zeros((3, 4)), v=np.zeros((3, 4)))
        mag = magnitude(flow)
        assert (mag.mag == 0).all() and not mag.normalized

    def test_matches_scalar_oracle(self, rng):
        for _ in range(20):
            flow = random_flow(rng)
            expected = np.array(magnitude_oracle(flow.u.tolist(), flow.v.tolist()))
            got = magnitude(flow).mag
            np.testing.assert_allclose(got, expected, rtol=1e-6)

    def test_positive_unless_zero(self, rng):
        flow = random_flow(rng, height=6, width=6)
        mag = magnitude(flow).mag
        zero = (flow.u == 0) & (flow.v == 0)
        assert (mag[~zero] > 0).all() and (mag[zero] == 0).all()


class TestNormalizeMagnitudes:
    def test_linear_scaling(self):
        mag = MagnitudeMap(mag=np.array([[0.0, 2.0, 4.0]]))
        out = normalize_magnitudes(mag)
        assert out.normalized
        np.testing.assert_array_equal(out.mag, [[0.0, 0.5, 1.0]])

    def test_all_zero_map(self):
        out = normalize_magnitudes(MagnitudeMap(mag=np.zeros((2, 2))))
        assert out.normalized and (out.mag == 0).all()

    def test_max_becomes_one(self, rng):
        for _ in range(20):
            mag = MagnitudeMap(mag=rng.uniform(0, 9, (5, 7)))
            out = normalize_magnitudes(mag)
            assert out.mag.max() == 1.0
            assert (out.mag >= 0).all() and (out.mag <= 1).all()

    def test_idempotent(self, rng):
        mag = MagnitudeMap(mag=rng.uniform(0, 3, (4, 4)))
        once = normalize_magnitudes(mag)
        twice = normalize_magnitudes(once)
        np.testing.assert_array_equal(once.mag, twice.mag)


class TestColorize:
    def test_zero_flow_is_white(self):
        img = colorize(FlowField(u=np.zeros((4, 5)), v=np.zeros((4, 5))))
        assert (img.rgb == 255).all()
        assert (img.width, img.height) == (5, 4)

    def test_matches_pixel_oracle(self, rng):
        wheel01 = (make_colorwheel() / 255.0).tolist()
        for _ in range(10):
            flow = random_flow(rng, height=5, width=6, dtype=np.float64)
            rendered = colorize_float(flow)
            max_mag = float(np.hypot(flow.u, flow.v).max())
            for r in range(5):
                for c in range(6):
                    expected = colorize_pixel_oracle(
                        float(flow.u[r, c]), float(flow.v[r, c]), max_mag, wheel01
                    )
                    np.testing.assert_allclose(rendered[r, c], expected, atol=1e-12)

    def test_opposite_directions_equal_distance_different_hue(self):
        # both pixels share the image maximum magnitude
        flow = FlowField(u=np.array([[2.0, -2.0]]), v=np.array([[1.0, -1.0]]))
        img = colorize(flow)
        dist = distance_from_white(img.rgb / 255.0)
        assert dist[0, 0] == dist[0, 1]
        assert (img.rgb[0, 0] != img.rgb[0, 1]).any()

    def test_double_magnitude_farther_from_white(self):
        flow = FlowField(u=np.array([[2.0, 4.0]]), v=np.array([[2.0, 4.0]]))
        dist = distance_from_white(colorize(flow).rgb / 255.0)
        assert dist[0, 1] > dist[0, 0]

    def test_hue_depends_only_on_direction(self):
        # same direction, different magnitudes: the hue color recovered by
        # dividing the white-deviation by rad must agree
        flow = FlowField(u=np.array([[1.0, 3.0]]), v=np.array([[2.0, 6.0]]))
        rendered = colorize_float(flow)
        rad = np.hypot(flow.u, flow.v) / np.hypot(flow.u, flow.v).max()
        hue_a = (1.0 - rendered[0, 0]) / rad[0, 0]
        hue_b = (1.0 - rendered[0, 1]) / rad[0, 1]
        np.testing.assert_allclose(hue_a, hue_b, atol=1e-12)

    def test_distance_strictly_increasing_in_magnitude(self, rng):
        for _ in range(50):
            angle = rng.uniform(0, 2 * np.pi)
            lo = rng.uniform(0.05, 0.45)
            hi = lo * rng.uniform(1.5, 2.0)
            u = np.array([[lo * np.cos(angle), hi * np.cos(angle), 1.0]])
            v = np.array([[lo * np.sin(angle), hi * np.sin(angle), 0.0]])
            rendered = colorize_float(FlowField(u=u, v=v))
            dist = distance_from_white(rendered)
            assert dist[0, 1] > dist[0, 0]

    def test_wheel_shape_and_anchors(self):
        wheel = make_colorwheel()
        assert wheel.shape == (55, 3)
        assert wheel[0].tolist() == [255.0, 0.0, 0.0]
        # every hue keeps one channel at zero: Chebyshev white-distance is
        # direction-independent
        assert (wheel.min(axis=1) == 0.0).all()

    def test_png_write(self, tmp_path, rng):
        from PIL import Image

        flow = random_flow(rng, height=6, width=8)
        path = tmp_path / "flow.png"
        write_png(colorize(flow), path)
        loaded = np.asarray(Image.open(path))
        np.testing.assert_array_equal(loaded, colorize(flow).rgb)
