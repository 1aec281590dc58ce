import json
import struct

import numpy as np
import pytest

from vsddpm.errors import (
    InvariantViolation,
    IoFailure,
    MalformedHeader,
    SidecarMismatch,
    TruncatedPayload,
    UnsupportedDatatype,
    UnsupportedEndianness,
)
from vsddpm.volume_io import (
    DT_INT16,
    Domain,
    Mask,
    NiftiHeaderSubset,
    Volume,
    read_nifti,
    read_raw,
    write_nifti,
    write_raw,
)

from .conftest import validate


def _f32(rng, shape):
    return rng.standard_normal(shape).astype(np.float32).astype(np.float64)


def _write_int16(path, payload, slope, inter):
    hdr = NiftiHeaderSubset(dims=payload.shape, datatype=DT_INT16, pixdim=(1.0, 1.0, 1.0),
                            scl_slope=slope, scl_inter=inter)
    path.write_bytes(hdr.pack() + b"\x00" * 4 + payload.astype("<i2").transpose(2, 1, 0).tobytes())


def test_volume_rejects_nonfinite_and_out_of_domain():
    with pytest.raises(InvariantViolation):
        Volume(np.full((2, 2, 2), np.nan))
    with pytest.raises(InvariantViolation):
        Volume(np.full((2, 2, 2), 1.5), domain=Domain.NORM_SYM)
    with pytest.raises(InvariantViolation):
        Volume(np.full((2, 2, 2), -0.1), domain="norm_unit")
    with pytest.raises(InvariantViolation):
        Volume(np.zeros((2, 2)))


def test_volume_is_immutable():
    v = Volume(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1.0


def test_mask_values():
    with pytest.raises(InvariantViolation):
        Mask(np.full((2, 2, 2), 2))
    assert Mask(np.ones((2, 2, 2), dtype=int)).count == 8


def test_read_zero_float_volume(tmp_path):
    path = tmp_path / "z.nii"
    write_nifti(Volume(np.zeros((4, 4, 4))), path)
    v = read_nifti(path)
    assert v.shape == (4, 4, 4)
    assert v.spacing == (1.0, 1.0, 1.0)
    assert np.count_nonzero(v.data) == 0


def test_int16_scaling(tmp_path):
    path = tmp_path / "s.nii"
    _write_int16(path, np.full((2, 2, 2), 100), slope=2.0, inter=-30.0)
    v = read_nifti(path)
    assert v.domain is Domain.HU
    np.testing.assert_array_equal(v.data, 170.0)


def test_zero_slope_means_one(tmp_path):
    path = tmp_path / "s.nii"
    _write_int16(path, np.full((2, 2, 2), 7), slope=0.0, inter=0.0)
    np.testing.assert_array_equal(read_nifti(path).data, 7.0)


def test_int16_axis_order(tmp_path):
    payload = np.arange(24).reshape(2, 3, 4)
    path = tmp_path / "o.nii"
    _write_int16(path, payload, 1.0, 0.0)
    np.testing.assert_array_equal(read_nifti(path).data, payload)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.nii"
    write_nifti(Volume(np.zeros((2, 2, 2))), path)
    raw = bytearray(path.read_bytes())
    raw[344:348] = b"\x00\x00\x00\x00"
    path.write_bytes(bytes(raw))
    with pytest.raises(MalformedHeader):
        read_nifti(path)


@pytest.mark.parametrize("size", [0, 347, 349, 540, -348, 1 << 20])
def test_rejects_bad_sizeof_hdr(tmp_path, size):
    path = tmp_path / "h.nii"
    write_nifti(Volume(np.zeros((2, 2, 2))), path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<i", raw, 0, size)
    path.write_bytes(bytes(raw))
    with pytest.raises(MalformedHeader):
        read_nifti(path)


def test_rejects_big_endian(tmp_path):
    path = tmp_path / "b.nii"
    write_nifti(Volume(np.zeros((2, 2, 2))), path)
    raw = bytearray(path.read_bytes())
    struct.pack_into(">i", raw, 0, 348)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedEndianness):
        read_nifti(path)


def test_rejects_datatype(tmp_path):
    path = tmp_path / "d.nii"
    write_nifti(Volume(np.zeros((2, 2, 2))), path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<h", raw, 70, 64)
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedDatatype):
        read_nifti(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.nii"
    write_nifti(Volume(np.zeros((4, 4, 4))), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(TruncatedPayload):
        read_nifti(path)


def test_nifti_round_trip_exact(tmp_path, rng):
    v = Volume(_f32(rng, (8, 8, 8)), spacing=(0.5, 0.5, 2.0), domain="mri_raw")
    path = tmp_path / "r.nii"
    write_nifti(v, path)
    back = read_nifti(path)
    assert np.max(np.abs(back.data - v.data)) == 0.0
    assert back.spacing == (0.5, 0.5, 2.0)
    assert back.domain is v.domain


def test_nifti_header_is_348_bytes(tmp_path):
    path = tmp_path / "x.nii"
    write_nifti(Volume(np.zeros((3, 4, 5))), path)
    raw = path.read_bytes()
    assert struct.unpack_from("<i", raw, 0)[0] == 348
    assert raw[344:348] == b"n+1\x00"
    assert struct.unpack_from("<f", raw, 108)[0] >= 352
    assert len(raw) == 352 + 3 * 4 * 5 * 4


def test_write_unwritable(tmp_path):
    with pytest.raises(IoFailure):
        write_nifti(Volume(np.zeros((2, 2, 2))), tmp_path / "missing" / "dir" / "x.nii")
    with pytest.raises(IoFailure):
        write_raw(Volume(np.zeros((2, 2, 2))), tmp_path / "missing" / "x")


def test_raw_round_trip(tmp_path, rng):
    v = Volume(np.clip(_f32(rng, (8, 8, 8)), -1, 1), spacing=(0.5, 0.5, 2.0), domain="norm_sym")
    write_raw(v, tmp_path / "vol")
    meta = json.loads((tmp_path / "vol.json").read_text())
    validate(meta, "raw_sidecar")
    back = read_raw(tmp_path / "vol.json")
    assert np.max(np.abs(back.data - v.data)) == 0.0
    assert back.spacing == v.spacing and back.domain is Domain.NORM_SYM


def test_raw_size_mismatch(tmp_path):
    (tmp_path / "v.json").write_text(json.dumps({"shape": [2, 2, 2], "spacing_mm": [1, 1, 1],
                                                 "domain": "mri_raw", "dtype": "float32"}))
    (tmp_path / "v.f32").write_bytes(np.zeros(7, "<f4").tobytes())
    with pytest.raises(SidecarMismatch):
        read_raw(tmp_path / "v.json")


def test_raw_domain_violation(tmp_path):
    (tmp_path / "v.json").write_text(json.dumps({"shape": [2, 2, 2], "spacing_mm": [1, 1, 1],
                                                 "domain": "norm_sym", "dtype": "float32"}))
    payload = np.zeros(8, "<f4")
    payload[3] = 1.5
    (tmp_path / "v.f32").write_bytes(payload.tobytes())
    with pytest.raises(InvariantViolation):
        read_raw(tmp_path / "v.json")


def test_randomized_round_trips(tmp_path):
    rng = np.random.default_rng(7)
    for trial in range(200):
        shape = tuple(int(n) for n in rng.integers(1, 33, 3))
        spacing = tuple(float(np.float32(s)) for s in rng.uniform(0.2, 3.0, 3))
        v = Volume((rng.standard_normal(shape) * 100).astype(np.float32).astype(np.float64), spacing, "hu")
        write_nifti(v, tmp_path / "a.nii")
        write_raw(v, tmp_path / "a")
        for back in (read_nifti(tmp_path / "a.nii"), read_raw(tmp_path / "a.json")):
            assert back.shape == shape
            assert np.array_equal(back.data, v.data)
            assert back.spacing == spacing
