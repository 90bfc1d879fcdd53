"""NIfTI-1 reading and writing for :class:`Volume` and :class:`SegMask`.

nibabel does the header parsing; this module adds the byte-level checks
(magic, truncation, datatype) needed for precise error reporting and writes
gzip streams with a zero mtime so identical volumes give identical files.
"""
from __future__ import annotations

import gzip
import os
import struct
import zlib
from pathlib import Path

import nibabel as nib
import numpy as np

from .errors import (
    IoFailure,
    MalformedHeader,
    NonFiniteData,
    ShapeMismatch,
    UnsupportedDatatype,
    VolumeNotFound,
)
from .volume import SegMask, Volume, check_labels

HEADER_SIZE = 348
_SINGLE_FILE_MAGIC = b"n+1\x00"
_PAIR_MAGIC = b"ni1\x00"
# complex64, complex128, complex256, RGB24, RGBA32
_UNSUPPORTED_CODES = {32: "complex64", 1792: "complex128", 2048: "complex256",
                      128: "RGB24", 2304: "RGBA32"}
_CHANNEL_TAG = "channels="


def _read_raw(path: Path) -> bytes:
    if not path.exists():
        raise VolumeNotFound(f"no such file: {path}")
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise MalformedHeader(f"{path}: corrupt gzip stream ({exc})") from exc
    return raw


def _check_header(raw: bytes, path: Path) -> str:
    """Validate the fixed header fields; returns the byte-order prefix."""
    if len(raw) < HEADER_SIZE:
        raise MalformedHeader(f"{path}: {len(raw)} bytes is shorter than a NIfTI-1 header")
    for endian in "<>":
        if struct.unpack(endian + "i", raw[:4])[0] == HEADER_SIZE:
            break
    else:
        raise MalformedHeader(f"{path}: sizeof_hdr is not {HEADER_SIZE} in either byte order")
    magic = raw[344:348]
    if magic not in (_SINGLE_FILE_MAGIC, _PAIR_MAGIC):
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    code = struct.unpack(endian + "h", raw[70:72])[0]
    if code in _UNSUPPORTED_CODES:
        raise UnsupportedDatatype(f"{path}: datatype {_UNSUPPORTED_CODES[code]} is not supported")
    if magic == _SINGLE_FILE_MAGIC:
        dims = struct.unpack(endian + "8h", raw[40:56])
        ndim = dims[0]
        if not 1 <= ndim <= 7:
            raise MalformedHeader(f"{path}: dim[0]={ndim} out of range")
        bitpix = struct.unpack(endian + "h", raw[72:74])[0]
        vox_offset = int(struct.unpack(endian + "f", raw[108:112])[0])
        n_vox = int(np.prod([max(d, 1) for d in dims[1 : ndim + 1]], dtype=np.int64))
        needed = vox_offset + n_vox * bitpix // 8
        if len(raw) < needed:
            raise MalformedHeader(
                f"{path}: truncated, {len(raw)} bytes present but {needed} required"
            )
    return magic.decode("ascii").rstrip("\x00")


def _load_image(path) -> nib.Nifti1Image:
    path = Path(path)
    raw = _read_raw(path)
    magic = _check_header(raw, path)
    try:
        if magic == "ni1":
            # header/image pair: let nibabel locate the .img companion
            return nib.load(str(path))
        return nib.Nifti1Image.from_bytes(raw)
    except (nib.filebasedimages.ImageFileError, ValueError, EOFError) as exc:
        raise MalformedHeader(f"{path}: {exc}") from exc


def _canonical(arr: np.ndarray, path) -> np.ndarray:
    """(x, y, z[, c]) on disk -> (c, z, y, x) in memory."""
    while arr.ndim > 4 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim == 3:
        return arr.transpose(2, 1, 0)[np.newaxis]
    if arr.ndim == 4:
        return arr.transpose(3, 2, 1, 0)
    raise ShapeMismatch(f"{path}: expected a 3D or 4D image, got {arr.ndim}D")


def _channel_names(header, n_channels):
    descrip = header["descrip"].item()
    if isinstance(descrip, bytes):
        descrip = descrip.decode("latin-1")
    descrip = descrip.rstrip("\x00")
    if not descrip.startswith(_CHANNEL_TAG):
        return None
    names = tuple(descrip[len(_CHANNEL_TAG):].split(","))
    return names if len(names) == n_channels else None


def load_volume(path) -> Volume:
    """Read a 3D or 4D NIfTI-1 file (``.nii`` or ``.nii.gz``) as a :class:`Volume`.

    A 3D file becomes a single-channel volume. Intensities are cast to
    float32 after applying any scl_slope/scl_inter scaling in the header.

    Raises
    ------
    VolumeNotFound, MalformedHeader, UnsupportedDatatype, NonFiniteData
    """
    img = _load_image(path)
    arr = _canonical(np.asanyarray(img.dataobj), path).astype(np.float32)
    bad = int(np.count_nonzero(~np.isfinite(arr)))
    if bad:
        raise NonFiniteData(bad, str(path))
    zooms = img.header.get_zooms()[:3]
    return Volume(
        arr,
        affine=img.affine,
        spacing=(float(zooms[2]), float(zooms[1]), float(zooms[0])),
        channel_names=_channel_names(img.header, arr.shape[0]),
    )


def load_mask(path) -> SegMask:
    """Read a label map and validate it against the BraTS code set {0, 1, 2, 4}."""
    img = _load_image(path)
    arr = _canonical(np.asanyarray(img.dataobj), path)
    if arr.shape[0] != 1:
        raise ShapeMismatch(f"{path}: label map has {arr.shape[0]} channels")
    labels = check_labels(arr[0], where=str(path))
    zooms = img.header.get_zooms()[:3]
    return SegMask(
        labels,
        affine=img.affine,
        spacing=(float(zooms[2]), float(zooms[1]), float(zooms[0])),
    )


def _to_bytes(arr: np.ndarray, affine, spacing, descrip: str = "") -> bytes:
    img = nib.Nifti1Image(arr, np.asarray(affine, dtype=np.float64))
    hdr = img.header
    hdr.set_data_dtype(arr.dtype)
    hdr.set_zooms(tuple(reversed(spacing))[: arr.ndim] + (1.0,) * max(arr.ndim - 3, 0))
    img.set_sform(np.asarray(affine), code=2)
    img.set_qform(np.asarray(affine), code=2)
    hdr["descrip"] = descrip.encode("latin-1")[:79]
    hdr["scl_slope"] = np.nan
    hdr["scl_inter"] = np.nan
    return img.to_bytes()


def _write(payload: bytes, path) -> None:
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, compresslevel=6, mtime=0)
    try:
        if not path.parent.is_dir():
            raise FileNotFoundError(f"parent directory {path.parent} does not exist")
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def save_volume(v: Volume, path) -> None:
    """Write ``v`` as NIfTI-1, gzip-compressed when ``path`` ends in ``.gz``.

    Data are stored as float32 without scaling, so ``load_volume`` returns the
    identical buffer. Channel names ride along in the ``descrip`` field.
    """
    arr = v.data.transpose(3, 2, 1, 0)
    if arr.shape[-1] == 1:
        arr = arr[..., 0]
    descrip = _CHANNEL_TAG + ",".join(v.channel_names) if v.channel_names else ""
    if len(descrip) > 79:
        descrip = ""
    _write(_to_bytes(np.ascontiguousarray(arr), v.affine, v.spacing, descrip), path)


def save_mask(m: SegMask, path) -> None:
    arr = np.ascontiguousarray(m.labels.transpose(2, 1, 0))
    _write(_to_bytes(arr, m.affine, m.spacing), path)


def nifti_stem(path) -> str:
    name = os.path.basename(str(path))
    for ext in (".nii.gz", ".nii"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return name
