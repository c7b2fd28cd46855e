"""Binary persistence for network weights and (optionally) datasets.

Weight file layout, little-endian::

    "LISW" | u32 version=1 | u8 arch | u16 D | u16 N_f | u16 M | u16 K | u16 n_layers
    per layer: u8 kind (0 conv, 1 conv+bn) | u16 c_in | u16 c_out
               f32 kernel[3][3][c_in][c_out] | f32 bias[c_out]
               if bn: f32 gamma, beta, running_mean, running_var [c_out]
    u32 CRC32 of every preceding byte

Dataset files ("LISD") use the same framing with float32 tensors.
"""

import os
import struct
import zlib

import numpy as np

from ..errors import BadMagic, ChecksumMismatch, TruncatedFile, VersionMismatch
from .network import ARCHS, BatchNormRecord, ConvLayer, NetworkWeights

WEIGHT_MAGIC = b"LISW"
DATASET_MAGIC = b"LISD"
VERSION = 1
_HEADER = struct.Struct("<4sIBHHHHH")
_LAYER = struct.Struct("<BHH")
_F32 = np.dtype("<f4")


def _atomic_write(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _seal(body):
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def weights_to_bytes(w):
    parts = [_HEADER.pack(WEIGHT_MAGIC, VERSION, ARCHS.index(w.arch), w.D, w.N_f,
                          w.M, w.K, len(w.layers))]
    for layer in w.layers:
        parts.append(_LAYER.pack(1 if layer.bn is not None else 0, layer.c_in, layer.c_out))
        parts.append(np.ascontiguousarray(layer.kernel, dtype=_F32).tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype=_F32).tobytes())
        if layer.bn is not None:
            for arr in (layer.bn.gamma, layer.bn.beta, layer.bn.running_mean,
                        layer.bn.running_var):
                parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return _seal(b"".join(parts))


def save_weights(w, path):
    """Write ``w`` (stored as float32) atomically."""
    _atomic_write(path, weights_to_bytes(w))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedFile(f"needed {n} bytes at offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, st):
        return st.unpack(self.take(st.size))

    def floats(self, shape):
        count = int(np.prod(shape))
        return np.frombuffer(self.take(4 * count), dtype=_F32).reshape(shape).astype(np.float32)


def _open(data, magic):
    if len(data) < 4 or data[:4] != magic:
        raise BadMagic(f"expected magic {magic!r}, found {bytes(data[:4])!r}")
    if len(data) < 8:
        raise TruncatedFile("file ends inside the header")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise VersionMismatch(f"unsupported version {version}, expected {VERSION}")


def _verify_crc(r):
    body = r.data[:r.pos]
    (crc,) = struct.unpack("<I", r.take(4))
    if r.pos != len(r.data):
        raise ChecksumMismatch(f"{len(r.data) - r.pos} unexpected trailing bytes")
    if crc != zlib.crc32(body) & 0xFFFFFFFF:
        raise ChecksumMismatch("CRC32 does not match payload")


def weights_from_bytes(data):
    _open(data, WEIGHT_MAGIC)
    r = _Reader(data)
    _, _, arch, D, N_f, M, K, n_layers = r.unpack(_HEADER)
    if arch >= len(ARCHS):
        raise ChecksumMismatch(f"invalid architecture code {arch}")
    layers = []
    for _ in range(n_layers):
        kind, c_in, c_out = r.unpack(_LAYER)
        kernel = r.floats((3, 3, c_in, c_out))
        bias = r.floats((c_out,))
        bn = None
        if kind == 1:
            bn = BatchNormRecord(*(r.floats((c_out,)) for _ in range(4)))
        layers.append(ConvLayer(kernel, bias, bn))
    _verify_crc(r)
    return NetworkWeights(ARCHS[arch], D, N_f, M, K, layers)


def load_weights(path):
    with open(path, "rb") as fh:
        return weights_from_bytes(fh.read())


_DS_HEADER = struct.Struct("<4sIHHHB")


def save_dataset(ds, path):
    from .train import SPLITS

    parts = [_DS_HEADER.pack(DATASET_MAGIC, VERSION, ds.M, ds.K, ds.T_p, len(SPLITS))]
    for name in SPLITS:
        sp = ds[name]
        parts.append(struct.pack("<I", len(sp)))
        for arr in (sp.inputs, sp.targets, sp.sigma, sp.snr_db):
            parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    _atomic_write(path, _seal(b"".join(parts)))


def load_dataset(path):
    from .train import SPLITS, Dataset, Split

    with open(path, "rb") as fh:
        data = fh.read()
    _open(data, DATASET_MAGIC)
    r = _Reader(data)
    _, _, M, K, T_p, n_splits = r.unpack(_DS_HEADER)
    ds = Dataset(M, K, T_p)
    for name in SPLITS[:n_splits]:
        (n,) = struct.unpack("<I", r.take(4))
        img = (n, M, K + 1, 2)
        ds.splits[name] = Split(r.floats(img), r.floats(img), r.floats((n,)), r.floats((n,)))
    _verify_crc(r)
    return ds
