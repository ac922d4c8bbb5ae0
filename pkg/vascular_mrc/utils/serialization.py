"""
Versioned binary model files.

MRC1: header (magic, Nv, Nn, rho_th) followed by W, L_A, L_B and the corner
coordinates as little-endian float64 in row-major order.

GPR1: header (magic, Nv, Nn, sigma_n, v_threshold, kernel code) followed by
one record per (i, j, axis) model (trained flag, n, c, eta, xs, ys) and the
corner coordinates. Factorizations are recomputed on load.
"""

import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from ..core.models import CornerSet
from ..regression.gpr import GprEnsemble, GprPairModel
from ..regression.mrc import MrcModel
from .exceptions import ModelFileError

logger = logging.getLogger(__name__)

MRC_MAGIC = b"MRC1"
GPR_MAGIC = b"GPR1"

_MRC_HEADER = struct.Struct("<4sIId")
_GPR_HEADER = struct.Struct("<4sIIddB")
_GPR_RECORD = struct.Struct("<BIdd")
_KERNEL_CODES = {"paper": 0, "squared": 1}
_F8 = np.dtype("<f8")


class _Reader:
    """Sequential reader over a bytes buffer that reports truncation."""

    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def unpack(self, fmt: struct.Struct) -> tuple:
        end = self.offset + fmt.size
        if end > len(self.data):
            raise ModelFileError(f"Model file {self.source} is truncated", path=self.source)
        values = fmt.unpack_from(self.data, self.offset)
        self.offset = end
        return values

    def floats(self, count: int, shape: Tuple[int, ...]) -> np.ndarray:
        nbytes = count * _F8.itemsize
        if self.offset + nbytes > len(self.data):
            raise ModelFileError(f"Model file {self.source} is truncated", path=self.source)
        array = np.frombuffer(self.data, dtype=_F8, count=count, offset=self.offset).astype(np.float64)
        self.offset += nbytes
        return array.reshape(shape)

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise ModelFileError(
                f"Model file {self.source} has {len(self.data) - self.offset} trailing bytes", path=self.source
            )


def _f8_bytes(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=_F8).tobytes()


def _corner_bytes(corners: CornerSet) -> bytes:
    return _f8_bytes(corners.vascular) + _f8_bytes(corners.non_vascular)


def _read_corners(reader: _Reader, n_v: int, n_n: int) -> CornerSet:
    return CornerSet(reader.floats(n_v * 2, (n_v, 2)), reader.floats(n_n * 2, (n_n, 2)))


def mrc_to_bytes(model: MrcModel) -> bytes:
    n_v, n_n = model.W.shape
    return b"".join(
        [
            _MRC_HEADER.pack(MRC_MAGIC, n_v, n_n, float(model.rho_th)),
            _f8_bytes(model.W),
            _f8_bytes(model.L_A),
            _f8_bytes(model.L_B),
            _corner_bytes(model.corners),
        ]
    )


def mrc_from_bytes(data: bytes, source: str = "<bytes>") -> MrcModel:
    reader = _Reader(data, source)
    magic, n_v, n_n, rho_th = reader.unpack(_MRC_HEADER)
    if magic != MRC_MAGIC:
        raise ModelFileError(f"{source} is not an MRC1 model file (magic {magic!r})", path=source)
    W = reader.floats(n_v * n_n, (n_v, n_n))
    L_A = reader.floats(n_v * n_n * 2, (n_v, n_n, 2))
    L_B = reader.floats(n_v * n_n * 2, (n_v, n_n, 2))
    corners = _read_corners(reader, n_v, n_n)
    reader.finish()
    return MrcModel(W=W, L_A=L_A, L_B=L_B, rho_th=rho_th, corners=corners)


def gpr_to_bytes(ensemble: GprEnsemble) -> bytes:
    n_v, n_n = ensemble.n_vascular, ensemble.n_non_vascular
    parts = [
        _GPR_HEADER.pack(
            GPR_MAGIC, n_v, n_n, float(ensemble.sigma_n), float(ensemble.v_threshold), _KERNEL_CODES[ensemble.kernel]
        )
    ]
    for row in ensemble.models:
        for axes in row:
            for model in axes:
                if model is None:
                    parts.append(_GPR_RECORD.pack(0, 0, 0.0, 0.0))
                    continue
                parts.append(_GPR_RECORD.pack(1, model.n_train, model.c, model.eta))
                parts.append(_f8_bytes(model.train_x))
                parts.append(_f8_bytes(model.train_y))
    parts.append(_corner_bytes(ensemble.corners))
    return b"".join(parts)


def gpr_from_bytes(data: bytes, source: str = "<bytes>") -> GprEnsemble:
    reader = _Reader(data, source)
    magic, n_v, n_n, sigma_n, v_threshold, kernel_code = reader.unpack(_GPR_HEADER)
    if magic != GPR_MAGIC:
        raise ModelFileError(f"{source} is not a GPR1 model file (magic {magic!r})", path=source)
    kernels = {code: name for name, code in _KERNEL_CODES.items()}
    if kernel_code not in kernels:
        raise ModelFileError(f"{source} names unknown kernel code {kernel_code}", path=source)
    kernel = kernels[kernel_code]

    rows = []
    for _ in range(n_v):
        row = []
        for _ in range(n_n):
            axes = []
            for _ in range(2):
                trained, n, c, eta = reader.unpack(_GPR_RECORD)
                if not trained:
                    axes.append(None)
                    continue
                xs = reader.floats(n, (n,))
                ys = reader.floats(n, (n,))
                axes.append(GprPairModel.build(xs, ys, c, eta, sigma_n, kernel))
            row.append(tuple(axes))
        rows.append(tuple(row))
    corners = _read_corners(reader, n_v, n_n)
    reader.finish()
    return GprEnsemble(
        models=tuple(rows), v_threshold=v_threshold, corners=corners, sigma_n=sigma_n, kernel=kernel
    )


def save_model(model: Union[MrcModel, GprEnsemble], path: Union[str, Path]) -> None:
    """Write an MRC1 or GPR1 model file."""
    path = Path(path)
    data = mrc_to_bytes(model) if isinstance(model, MrcModel) else gpr_to_bytes(model)
    try:
        path.write_bytes(data)
    except OSError as e:
        raise ModelFileError(f"Cannot write model file {path}: {e}", path=str(path))
    logger.info(f"Saved {data[:4].decode()} model to {path} ({len(data)} bytes)")


def load_model(path: Union[str, Path]) -> Union[MrcModel, GprEnsemble]:
    """Read a model file, dispatching on its magic.

    Raises:
        ModelFileError: If the file is missing, truncated or not a model file
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise ModelFileError(f"Model file not found: {path}", path=str(path))
    except OSError as e:
        raise ModelFileError(f"Cannot read model file {path}: {e}", path=str(path))

    magic = data[:4]
    if magic == MRC_MAGIC:
        return mrc_from_bytes(data, str(path))
    if magic == GPR_MAGIC:
        return gpr_from_bytes(data, str(path))
    raise ModelFileError(f"Unknown model file format in {path} (magic {magic!r})", path=str(path))
