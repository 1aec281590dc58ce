"""Volume and mask containers plus NIfTI-1 (subset) and raw+JSON file I/O."""
from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    InvariantViolation,
    IoFailure,
    MalformedHeader,
    SidecarMismatch,
    TruncatedPayload,
    UnsupportedDatatype,
    UnsupportedEndianness,
)


class Domain(str, enum.Enum):
    HU = "hu"
    MRI_RAW = "mri_raw"
    NORM_SYM = "norm_sym"
    NORM_UNIT = "norm_unit"


_DOMAIN_BOUNDS = {Domain.NORM_SYM: (-1.0, 1.0), Domain.NORM_UNIT: (0.0, 1.0)}


def _check_geometry(shape, spacing):
    shape = tuple(int(s) for s in shape)
    spacing = tuple(float(s) for s in spacing)
    if len(shape) != 3 or any(s <= 0 for s in shape):
        raise InvariantViolation(f"shape must be 3 positive integers, got {shape}")
    if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
        raise InvariantViolation(f"spacing must be 3 positive reals, got {spacing}")
    return shape, spacing


@dataclass(frozen=True, eq=False)
class Volume:
    """Immutable 3-D float64 grid with voxel spacing (mm) and an intensity domain.

    ``data`` is stored C-ordered and read-only; use :meth:`with_data` to derive
    a new volume.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    domain: Domain = Domain.MRI_RAW

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if data.ndim != 3:
            raise InvariantViolation(f"volume data must be 3-D, got ndim={data.ndim}")
        _, spacing = _check_geometry(data.shape, self.spacing)
        if not np.isfinite(data).all():
            raise InvariantViolation("volume contains NaN or Inf")
        domain = Domain(self.domain)
        if domain in _DOMAIN_BOUNDS:
            lo, hi = _DOMAIN_BOUNDS[domain]
            if data.size and (data.min() < lo or data.max() > hi):
                raise InvariantViolation(
                    f"domain {domain.value} requires values in [{lo}, {hi}], "
                    f"got [{data.min()}, {data.max()}]"
                )
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "domain", domain)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data, domain: Domain | str | None = None) -> "Volume":
        return Volume(data, self.spacing, self.domain if domain is None else domain)


@dataclass(frozen=True, eq=False)
class Mask:
    """Immutable binary 3-D grid with voxel spacing (mm)."""

    bits: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        raw = np.asarray(self.bits)
        if raw.ndim != 3:
            raise InvariantViolation(f"mask must be 3-D, got ndim={raw.ndim}")
        if raw.dtype != bool and not np.isin(raw, (0, 1)).all():
            raise InvariantViolation("mask values must be 0 or 1")
        _, spacing = _check_geometry(raw.shape, self.spacing)
        bits = np.array(raw, dtype=bool, order="C", copy=True)
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.bits.shape

    @property
    def count(self) -> int:
        return int(self.bits.sum())


# ---------------------------------------------------------------------------
# NIfTI-1, single file, little-endian, int16 / float32 only
# ---------------------------------------------------------------------------

HEADER_SIZE = 348
VOX_OFFSET = 352
MAGIC = b"n+1\x00"
DT_INT16 = 4
DT_FLOAT32 = 16
_DTYPES = {DT_INT16: np.dtype("<i2"), DT_FLOAT32: np.dtype("<f4")}
# descrip (80 bytes at offset 148) carries the domain tag so it survives a round trip
_DESCRIP_PREFIX = b"vsddpm:domain="


@dataclass(frozen=True)
class NiftiHeaderSubset:
    dims: tuple[int, int, int]
    datatype: int
    pixdim: tuple[float, float, float]
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    vox_offset: float = float(VOX_OFFSET)
    descrip: bytes = b""

    def pack(self) -> bytes:
        hdr = bytearray(HEADER_SIZE)
        struct.pack_into("<i", hdr, 0, HEADER_SIZE)
        struct.pack_into("<8h", hdr, 40, 3, *self.dims, 1, 1, 1, 1)
        bitpix = _DTYPES[self.datatype].itemsize * 8
        struct.pack_into("<hh", hdr, 70, self.datatype, bitpix)
        struct.pack_into("<8f", hdr, 76, 1.0, *self.pixdim, 0.0, 0.0, 0.0, 0.0)
        struct.pack_into("<fff", hdr, 108, self.vox_offset, self.scl_slope, self.scl_inter)
        hdr[148:148 + len(self.descrip[:80])] = self.descrip[:80]
        struct.pack_into("<B", hdr, 123, 10)  # xyzt_units: mm, s
        hdr[344:348] = MAGIC
        return bytes(hdr)

    @classmethod
    def unpack(cls, raw: bytes) -> "NiftiHeaderSubset":
        if len(raw) < HEADER_SIZE:
            raise MalformedHeader(f"header shorter than {HEADER_SIZE} bytes")
        (size_le,) = struct.unpack_from("<i", raw, 0)
        if size_le != HEADER_SIZE:
            (size_be,) = struct.unpack_from(">i", raw, 0)
            if size_be == HEADER_SIZE:
                raise UnsupportedEndianness("big-endian NIfTI files are not supported")
            raise MalformedHeader(f"sizeof_hdr is {size_le}, expected {HEADER_SIZE}")
        if raw[344:348] != MAGIC:
            raise MalformedHeader(f"bad magic {raw[344:348]!r}, expected single-file 'n+1'")
        dim = struct.unpack_from("<8h", raw, 40)
        if not 3 <= dim[0] <= 7 or any(d < 1 for d in dim[1:4]):
            raise MalformedHeader(f"bad dim field {dim}")
        if dim[0] > 3 and any(d > 1 for d in dim[4:dim[0] + 1]):
            raise MalformedHeader(f"only 3-D volumes are supported, dim={dim}")
        datatype, _bitpix = struct.unpack_from("<hh", raw, 70)
        if datatype not in _DTYPES:
            raise UnsupportedDatatype(f"datatype {datatype} not in (int16=4, float32=16)")
        pixdim = struct.unpack_from("<8f", raw, 76)
        vox_offset, slope, inter = struct.unpack_from("<fff", raw, 108)
        if vox_offset < VOX_OFFSET:
            raise MalformedHeader(f"vox_offset {vox_offset} < {VOX_OFFSET}")
        descrip = bytes(raw[148:228]).split(b"\x00", 1)[0]
        return cls(
            dims=(dim[1], dim[2], dim[3]),
            datatype=datatype,
            pixdim=(abs(pixdim[1]), abs(pixdim[2]), abs(pixdim[3])),
            scl_slope=slope,
            scl_inter=inter,
            vox_offset=vox_offset,
            descrip=descrip,
        )


def read_nifti(path) -> Volume:
    """Read a NIfTI-1 single-file volume (uncompressed, little-endian, int16/float32)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    hdr = NiftiHeaderSubset.unpack(raw)
    dtype = _DTYPES[hdr.datatype]
    n = int(np.prod(hdr.dims))
    start = int(hdr.vox_offset)
    if len(raw) < start + n * dtype.itemsize:
        raise TruncatedPayload(f"payload needs {n * dtype.itemsize} bytes after offset {start}, file has {len(raw) - start}")
    payload = np.frombuffer(raw, dtype=dtype, count=n, offset=start)
    # NIfTI stores the first axis fastest
    data = payload.reshape(hdr.dims[::-1]).transpose(2, 1, 0).astype(np.float64)
    slope = hdr.scl_slope if hdr.scl_slope not in (0.0,) and np.isfinite(hdr.scl_slope) else 1.0
    inter = hdr.scl_inter if np.isfinite(hdr.scl_inter) else 0.0
    if slope != 1.0 or inter != 0.0:
        data = data * float(slope) + float(inter)
    if hdr.descrip.startswith(_DESCRIP_PREFIX):
        domain = Domain(hdr.descrip[len(_DESCRIP_PREFIX):].decode("ascii"))
    else:
        domain = Domain.HU if hdr.datatype == DT_INT16 else Domain.MRI_RAW
    return Volume(data, hdr.pixdim, domain)


def write_nifti(v: Volume, path) -> None:
    """Write ``v`` as float32 NIfTI-1 (slope 1, intercept 0); values are rounded to float32."""
    hdr = NiftiHeaderSubset(
        dims=v.shape,
        datatype=DT_FLOAT32,
        pixdim=v.spacing,
        descrip=_DESCRIP_PREFIX + v.domain.value.encode("ascii"),
    )
    payload = np.asarray(v.data, dtype="<f4").transpose(2, 1, 0).tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(hdr.pack())
            fh.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


# ---------------------------------------------------------------------------
# raw float32 payload + JSON sidecar
# ---------------------------------------------------------------------------


def _raw_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".f32"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".f32")


def write_raw(v: Volume, path) -> None:
    """Write ``<name>.json`` + ``<name>.f32``; ``path`` may name either file or the stem."""
    sidecar, payload = _raw_paths(path)
    meta = {
        "shape": list(v.shape),
        "spacing_mm": list(v.spacing),
        "domain": v.domain.value,
        "dtype": "float32",
    }
    try:
        sidecar.write_text(json.dumps(meta, indent=2) + "\n")
        payload.write_bytes(np.asarray(v.data, dtype="<f4").tobytes(order="C"))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_raw(json_sidecar) -> Volume:
    sidecar, payload = _raw_paths(json_sidecar)
    try:
        meta = json.loads(sidecar.read_text())
        blob = payload.read_bytes()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SidecarMismatch(f"sidecar is not valid JSON: {exc}") from exc
    for key in ("shape", "spacing_mm", "domain", "dtype"):
        if key not in meta:
            raise SidecarMismatch(f"sidecar missing key {key!r}")
    if meta["dtype"] != "float32":
        raise SidecarMismatch(f"unsupported dtype {meta['dtype']!r}")
    shape, spacing = _check_geometry(meta["shape"], meta["spacing_mm"])
    expected = int(np.prod(shape)) * 4
    if len(blob) != expected:
        raise SidecarMismatch(f"sidecar declares {expected} bytes, payload has {len(blob)}")
    data = np.frombuffer(blob, dtype="<f4").reshape(shape).astype(np.float64)
    return Volume(data, spacing, meta["domain"])


def read_volume(path) -> Volume:
    """Dispatch on extension: ``.nii`` -> NIfTI, ``.json``/``.f32`` -> raw."""
    if str(path).endswith(".nii"):
        return read_nifti(path)
    return read_raw(path)


def write_volume(v: Volume, path) -> None:
    if str(path).endswith(".nii"):
        write_nifti(v, path)
    else:
        write_raw(v, path)


def read_mask(path) -> Mask:
    v = read_volume(path)
    return Mask(v.data > 0.5, v.spacing)
