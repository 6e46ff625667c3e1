import numpy as np
import pytest

from oracles import curation_fixture
from panodepth.curate import (
    MAX_RAW,
    CurationVerdict,
    EncodedDepth,
    Reason,
    curate_sample,
    curation_verdict,
    decode_depth_u16,
    encode_depth_u16,
    encode_faces,
)
from panodepth.maps import DepthMap, ErpGrid
from panodepth.sphere import sphere_faces

GRID = ErpGrid(32, 64)


def map_with(max_depth, ratio, n=10000):
    """100 x 100 map with the given maximum and exactly ``ratio * n`` valid pixels."""
    k = int(round(ratio * n))
    values = np.zeros(n)
    values[:k] = 1.0
    values[0] = max_depth
    return DepthMap(values.reshape(100, 100))


class TestDecode:
    def test_max_raw(self):
        d = decode_depth_u16(np.array([[65535]], np.uint16))
        assert d.values[0, 0] == 127.998046875

    def test_one_meter(self):
        assert decode_depth_u16(np.array([[512]], np.uint16)).values[0, 0] == 1.0

    def test_zero_invalid(self):
        d = decode_depth_u16(np.array([[0, 7]], np.uint16))
        assert d.mask.tolist() == [[False, True]]

    def test_round_trip_every_raw(self):
        raw = np.arange(MAX_RAW + 1, dtype=np.uint16).reshape(256, 256)
        np.testing.assert_array_equal(encode_depth_u16(decode_depth_u16(raw)), raw)

    def test_monotone(self):
        raw = np.arange(MAX_RAW + 1, dtype=np.uint16).reshape(1, -1)
        assert np.all(np.diff(decode_depth_u16(raw).values[0]) > 0)

    def test_encoded_depth_validation(self):
        assert EncodedDepth(np.array([[1, 2]])).raw.dtype == np.uint16
        with pytest.raises(ValueError):
            EncodedDepth(np.array([[70000]]))
        with pytest.raises(ValueError):
            EncodedDepth(np.array([1, 2], np.uint16))


class TestEncode:
    def test_saturates(self):
        assert encode_depth_u16(np.array([[130.0]]))[0, 0] == MAX_RAW

    def test_tiny_depth_stays_valid(self):
        assert encode_depth_u16(np.array([[1e-4]]))[0, 0] == 1

    def test_invalid_is_zero(self):
        raw = encode_depth_u16(np.array([[np.nan, 0.0, 2.0]]))
        assert raw.tolist() == [[0, 0, 1024]]


class TestVerdict:
    def test_overflow(self):
        v = curation_verdict(map_with(130.0, 0.5))
        assert not v.accepted and v.reasons == [Reason.DEPTH_OVERFLOW]

    def test_sparse(self):
        v = curation_verdict(map_with(100.0, 0.05))
        assert not v.accepted and v.reasons == [Reason.TOO_SPARSE]

    def test_accepted(self):
        v = curation_verdict(map_with(100.0, 0.30))
        assert v.accepted and v.reasons == []
        assert v.max_depth == 100.0 and v.valid_ratio == 0.3

    def test_both(self):
        v = curation_verdict(map_with(200.0, 0.01))
        assert v.reasons == [Reason.DEPTH_OVERFLOW, Reason.TOO_SPARSE]

    def test_equality_accepted(self):
        assert curation_verdict(map_with(127.5, 0.08)).accepted

    @pytest.mark.parametrize("max_depth,ratio,accepted", [
        (127.5, 0.5, True),
        (np.nextafter(127.5, np.inf), 0.5, False),
        (np.nextafter(127.5, 0), 0.5, True),
        (10.0, 0.0799, False),
        (10.0, 0.0801, True),
    ])
    def test_corner_cases(self, max_depth, ratio, accepted):
        assert curation_verdict(map_with(max_depth, ratio)).accepted is accepted

    def test_empty_map(self):
        v = curation_verdict(DepthMap(np.zeros((4, 8))))
        assert v.reasons == [Reason.TOO_SPARSE] and v.valid_ratio == 0.0 and v.max_depth == 0.0

    def test_custom_thresholds(self):
        d = map_with(100.0, 0.3)
        assert not curation_verdict(d, overflow_threshold=50.0).accepted
        assert not curation_verdict(d, min_valid_ratio=0.5).accepted

    def test_record(self):
        rec = CurationVerdict(False, [Reason.TOO_SPARSE], 3.0, 0.01).to_record("a")
        assert rec == {"id": "a", "accepted": False, "reasons": ["too_sparse"], "max_depth": 3.0, "valid_ratio": 0.01}


class TestCurateSample:
    def test_fixture_set(self):
        verdicts = {k: curate_sample(v, GRID)[0] for k, v in curation_fixture().items()}
        assert [k for k, v in verdicts.items() if v.accepted] == ["ok"]
        assert verdicts["overflow"].reasons == [Reason.DEPTH_OVERFLOW]
        assert verdicts["sparse"].reasons == [Reason.TOO_SPARSE]

    def test_dense_sphere_map(self):
        verdict, erp = curate_sample(curation_fixture()["ok"], GRID)
        # 1/512 m quantization of the Z-buffer bounds the range error
        np.testing.assert_allclose(erp.valid_values(), 100.0, atol=2e-3)
        assert verdict.valid_ratio == erp.n_valid / GRID.size

    def test_sparse_ratio_counted(self):
        raw = curation_fixture()["sparse"]
        verdict, _ = curate_sample(raw, GRID)
        assert verdict.valid_ratio < 0.05

    def test_order_insensitive(self):
        raw = curation_fixture()["ok"]
        a, ea = curate_sample(raw, GRID)
        b, eb = curate_sample(list(raw.items())[::-1], GRID)
        assert a == b
        np.testing.assert_array_equal(ea.values, eb.values)

    def test_six_faces(self):
        verdict, erp = curate_sample(encode_faces(sphere_faces(50.0, 16)), (16, 32))
        assert verdict.accepted and verdict.valid_ratio == 1.0

    def test_bad_face_name(self):
        with pytest.raises(ValueError):
            curate_sample({"top": np.ones((4, 4), np.uint16)}, GRID)
