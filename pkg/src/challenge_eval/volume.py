"""Label volumes, binary masks and a minimal single-file NIfTI-1 codec."""

from __future__ import annotations

import gzip
import io
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .manifest import ChallengeManifest, Structure

logger = logging.getLogger(__name__)

HEADER_SIZE = 348
VOX_OFFSET = 352
SPACING_RTOL = 1e-4

# NIfTI datatype code -> (numpy dtype, bitpix)
DATATYPES = {
    2: (np.dtype(np.uint8), 8),
    4: (np.dtype(np.int16), 16),
    8: (np.dtype(np.int32), 32),
}
_CODE_FOR_DTYPE = {dt: code for code, (dt, _) in DATATYPES.items()}

# float and complex codes, reported as "non-integer" rather than "unsupported"
_FLOAT_CODES = {16, 32, 64, 1536, 1792, 2048}


class NiftiError(ValueError):
    """Malformed or unsupported NIfTI-1 file."""


class GridMismatchError(ValueError):
    """Two volumes do not share the same voxel grid."""


class SchemeError(ValueError):
    """Volume labels or scheme do not match the manifest."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """3D integer label grid with physical spacing in mm.

    The label array is made read-only on construction, so instances can be
    shared freely between threads.
    """

    labels: np.ndarray
    spacing: tuple[float, float, float]
    scheme_id: str = ""
    affine: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 3 or min(labels.shape) < 1:
            raise ValueError(f"labels must be a non-empty 3D array, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValueError(f"labels must be integers, got {labels.dtype}")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not np.isfinite(s) or s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing}")
        object.__setattr__(self, "labels", _readonly(np.array(labels, copy=True)))
        object.__setattr__(self, "spacing", spacing)
        if self.affine is not None:
            object.__setattr__(self, "affine", _readonly(np.array(self.affine, dtype=np.float64)))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.labels.shape)  # type: ignore[return-value]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.scheme_id == other.scheme_id
            and self.labels.shape == other.labels.shape
            and bool(np.array_equal(self.labels, other.labels))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 3:
            raise ValueError(f"mask must be 3D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _readonly(np.array(bits, copy=True)))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.bits.shape)  # type: ignore[return-value]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.spacing == other.spacing and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None  # type: ignore[assignment]


# ---------------------------------------------------------------------------
# grid checks


def _same_grid(dims_a, spacing_a, dims_b, spacing_b) -> str | None:
    if tuple(dims_a) != tuple(dims_b):
        return f"dims {tuple(dims_a)} vs {tuple(dims_b)}"
    for sa, sb in zip(spacing_a, spacing_b):
        if abs(sa - sb) > SPACING_RTOL * max(abs(sa), abs(sb)):
            return f"spacing {tuple(spacing_a)} vs {tuple(spacing_b)}"
    return None


def check_grid_compatible(a: LabelVolume | BinaryMask, b: LabelVolume | BinaryMask) -> None:
    """Raise GridMismatchError unless dims match and spacing agrees to 1e-4 relative."""
    problem = _same_grid(a.dims, a.spacing, b.dims, b.spacing)
    if problem is not None:
        raise GridMismatchError(f"grid mismatch: {problem}")


# ---------------------------------------------------------------------------
# structure masks


def validate_labels(volume: LabelVolume, manifest: ChallengeManifest) -> None:
    if manifest.scheme_id and volume.scheme_id and volume.scheme_id != manifest.scheme_id:
        raise SchemeError(f"volume scheme {volume.scheme_id!r} != manifest scheme {manifest.scheme_id!r}")
    present = set(np.unique(volume.labels).tolist())
    unknown = sorted(present - manifest.label_ids)
    if unknown:
        raise SchemeError(f"labels {unknown} are not part of scheme {manifest.scheme_id or '<unnamed>'}")


def extract_structure_mask(
    volume: LabelVolume,
    structure: Structure | str,
    manifest: ChallengeManifest,
) -> BinaryMask:
    """Binary mask for a direct or union structure.

    Interface structures have no voxel mask of their own; use
    :func:`challenge_eval.seg_metrics.interface_points` on the operand masks.
    """
    if isinstance(structure, str):
        try:
            structure = manifest.structure(structure)
        except KeyError as exc:
            raise SchemeError(str(exc)) from exc
    elif structure not in manifest.structures:
        raise SchemeError(f"structure {structure.name!r} is not declared in the manifest")
    if manifest.scheme_id and volume.scheme_id and volume.scheme_id != manifest.scheme_id:
        raise SchemeError(f"volume scheme {volume.scheme_id!r} != manifest scheme {manifest.scheme_id!r}")

    if structure.kind == "direct":
        bits = np.isin(volume.labels, np.asarray(structure.labels))
    elif structure.kind == "union":
        bits = np.zeros(volume.dims, dtype=bool)
        for op in structure.operands:
            bits |= extract_structure_mask(volume, op, manifest).bits
    else:
        raise SchemeError(f"structure {structure.name!r} is an interface and has no voxel mask")
    return BinaryMask(bits, volume.spacing)


# ---------------------------------------------------------------------------
# NIfTI-1


def _open_bytes(path: Path) -> bytes:
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise NiftiError(f"{path}: corrupt gzip stream: {exc}") from exc
    return raw


def _affine_from_header(hdr: dict) -> np.ndarray:
    if hdr["sform_code"] > 0:
        aff = np.eye(4)
        aff[:3] = np.array([hdr["srow_x"], hdr["srow_y"], hdr["srow_z"]])
        return aff
    pixdim = hdr["pixdim"]
    zooms = np.array(pixdim[1:4], dtype=np.float64)
    if hdr["qform_code"] > 0:
        b, c, d = hdr["quatern"]
        a2 = 1.0 - (b * b + c * c + d * d)
        a = np.sqrt(a2) if a2 > 1e-7 else 0.0
        rot = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
                [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
            ]
        )
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        zooms = zooms * np.array([1.0, 1.0, qfac])
        aff = np.eye(4)
        aff[:3, :3] = rot * zooms
        aff[:3, 3] = hdr["qoffset"]
        return aff
    return np.diag([*np.abs(zooms), 1.0])


def _is_oblique(affine: np.ndarray) -> bool:
    rot = affine[:3, :3]
    norms = np.linalg.norm(rot, axis=0)
    if np.any(norms == 0):
        return False
    unit = np.abs(rot / norms)
    return bool(np.any(np.abs(unit.max(axis=0) - 1.0) > 1e-6))


def _parse_header(buf: bytes, path: Path) -> tuple[dict, str]:
    if len(buf) < HEADER_SIZE:
        raise NiftiError(f"{path}: file shorter than a NIfTI-1 header")
    for endian in "<>":
        if struct.unpack(endian + "i", buf[:4])[0] == HEADER_SIZE:
            break
    else:
        raise NiftiError(f"{path}: sizeof_hdr is not 348")
    magic = buf[344:348]
    if magic != b"n+1\x00":
        raise NiftiError(f"{path}: bad magic {magic!r} (only single-file NIfTI-1 is supported)")
    e = endian
    hdr = {
        "dim": struct.unpack(e + "8h", buf[40:56]),
        "datatype": struct.unpack(e + "h", buf[70:72])[0],
        "bitpix": struct.unpack(e + "h", buf[72:74])[0],
        "pixdim": struct.unpack(e + "8f", buf[76:108]),
        "vox_offset": struct.unpack(e + "f", buf[108:112])[0],
        "scl_slope": struct.unpack(e + "f", buf[112:116])[0],
        "scl_inter": struct.unpack(e + "f", buf[116:120])[0],
        "qform_code": struct.unpack(e + "h", buf[252:254])[0],
        "sform_code": struct.unpack(e + "h", buf[254:256])[0],
        "quatern": struct.unpack(e + "3f", buf[256:268]),
        "qoffset": struct.unpack(e + "3f", buf[268:280]),
        "srow_x": struct.unpack(e + "4f", buf[280:296]),
        "srow_y": struct.unpack(e + "4f", buf[296:312]),
        "srow_z": struct.unpack(e + "4f", buf[312:328]),
    }
    return hdr, e


def read_label_volume(path: str | Path, scheme_id: str = "") -> LabelVolume:
    """Read a single-file NIfTI-1 label map (.nii or .nii.gz).

    Only uint8, int16 and int32 payloads are accepted. Extensions are skipped.
    Spacing comes from the pixdim magnitudes; the affine is kept for reference.
    """
    path = Path(path)
    buf = _open_bytes(path)
    hdr, endian = _parse_header(buf, path)

    dim = hdr["dim"]
    ndim = dim[0]
    if not 3 <= ndim <= 7:
        raise NiftiError(f"{path}: expected a 3D volume, dim[0]={ndim}")
    shape = tuple(int(d) for d in dim[1:4])
    if any(d < 1 for d in shape):
        raise NiftiError(f"{path}: non-positive dimension in {shape}")
    if any(int(d) > 1 for d in dim[4 : ndim + 1]):
        raise NiftiError(f"{path}: volumes with more than 3 non-singleton dims are not supported")

    code = hdr["datatype"]
    if code in _FLOAT_CODES:
        raise NiftiError(f"{path}: non-integer datatype code {code}")
    if code not in DATATYPES:
        raise NiftiError(f"{path}: unsupported datatype code {code}")
    dtype, bitpix = DATATYPES[code]
    if hdr["bitpix"] != bitpix:
        raise NiftiError(f"{path}: bitpix {hdr['bitpix']} inconsistent with datatype {code}")

    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        raise NiftiError(f"{path}: vox_offset {offset} inside header")
    n = int(np.prod(shape))
    nbytes = n * dtype.itemsize
    if len(buf) < offset + nbytes:
        raise NiftiError(f"{path}: truncated voxel data")
    data = np.frombuffer(buf, dtype=dtype.newbyteorder(endian), count=n, offset=offset)
    labels = data.reshape(shape, order="F").astype(dtype.newbyteorder("="))

    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    if slope not in (0.0, 1.0) or inter != 0.0:
        scaled = labels * (slope if slope != 0.0 else 1.0) + inter
        if not np.all(np.isfinite(scaled)) or not np.all(scaled == np.round(scaled)):
            raise NiftiError(f"{path}: intensity scaling yields non-integer labels")
        labels = np.round(scaled).astype(np.int64)
    if labels.size and labels.min() < 0:
        raise NiftiError(f"{path}: negative label values")

    spacing = tuple(abs(float(p)) for p in hdr["pixdim"][1:4])
    if any(s <= 0 for s in spacing):
        raise NiftiError(f"{path}: non-positive pixdim {spacing}")
    affine = _affine_from_header(hdr)
    if _is_oblique(affine):
        logger.warning("%s: oblique affine; metrics use axis-aligned voxel spacing only", path)
    return LabelVolume(np.ascontiguousarray(labels), spacing, scheme_id=scheme_id, affine=affine)


def _pick_datatype(labels: np.ndarray) -> int:
    top = int(labels.max()) if labels.size else 0
    if top <= np.iinfo(np.uint8).max:
        return 2
    if top <= np.iinfo(np.int16).max:
        return 4
    if top <= np.iinfo(np.int32).max:
        return 8
    raise ValueError(f"label value {top} does not fit any supported NIfTI integer type")


def encode_nifti(volume: LabelVolume) -> bytes:
    """Serialize to uncompressed single-file NIfTI-1 bytes."""
    code = _pick_datatype(volume.labels)
    dtype, bitpix = DATATYPES[code]
    sx, sy, sz = volume.spacing
    if volume.affine is not None:
        affine = np.asarray(volume.affine, dtype=np.float64)
    else:
        affine = np.diag([sx, sy, sz, 1.0])

    hdr = bytearray(HEADER_SIZE)
    struct.pack_into("<i", hdr, 0, HEADER_SIZE)
    struct.pack_into("<b", hdr, 39, 0)  # dim_info
    struct.pack_into("<8h", hdr, 40, 3, *volume.dims, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, bitpix)
    struct.pack_into("<8f", hdr, 76, 1.0, sx, sy, sz, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, float(VOX_OFFSET))
    struct.pack_into("<f", hdr, 112, 1.0)  # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)  # scl_inter
    struct.pack_into("<B", hdr, 123, 10)  # xyzt_units: mm + s
    struct.pack_into("<h", hdr, 252, 0)  # qform_code
    struct.pack_into("<h", hdr, 254, 1)  # sform_code: scanner
    struct.pack_into("<4f", hdr, 280, *affine[0])
    struct.pack_into("<4f", hdr, 296, *affine[1])
    struct.pack_into("<4f", hdr, 312, *affine[2])
    hdr[344:348] = b"n+1\x00"

    payload = np.asarray(volume.labels).astype(dtype.newbyteorder("<")).tobytes(order="F")
    return bytes(hdr) + b"\x00\x00\x00\x00" + payload


def write_label_volume(volume: LabelVolume, path: str | Path) -> None:
    """Write a .nii or .nii.gz file. Gzip output carries no timestamp, so bytes are reproducible."""
    path = Path(path)
    raw = encode_nifti(volume)
    if path.name.endswith(".gz"):
        bio = io.BytesIO()
        with gzip.GzipFile(filename="", mode="wb", fileobj=bio, mtime=0) as gz:
            gz.write(raw)
        raw = bio.getvalue()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(raw)


def mask_from_array(bits: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> BinaryMask:
    return BinaryMask(np.asarray(bits, dtype=bool), tuple(spacing))


SIX_CONNECTIVITY = ndimage.generate_binary_structure(3, 1)
