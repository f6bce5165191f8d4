"""On-disk matrix container: length-prefixed JSON header + float64 payload.

Layout: an 8-byte little-endian unsigned header length, the UTF-8 JSON
header, then the array as row-major 64-bit little-endian floats. The header
fully describes the payload (shape, dtype, byte order) plus role and
provenance metadata, and always parses before any payload byte is
interpreted. Writes are byte-deterministic: the header is serialized with
sorted keys and no timestamps.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .convae import (
    ArchitectureConfig,
    AutoencoderParams,
    ConvLayer,
    DeconvLayer,
    DenseLayer,
)

FORMAT_NAME = "connfp-matrix"
FORMAT_VERSION = 1

_LEN_STRUCT = struct.Struct("<Q")
_MAX_HEADER = 16 * 1024 * 1024


class ContainerError(ValueError):
    """The file is not a well-formed matrix container."""


def _encode_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_matrix(path, matrix, role: str, subject=None, session=None, seed=None, extra=None):
    """Write one float64 array with its describing header."""
    arr = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "shape": [int(s) for s in arr.shape],
        "dtype": "float64",
        "byte_order": "little",
        "order": "C",
        "role": str(role),
        "subject": subject,
        "session": session,
        "seed": seed,
    }
    if extra:
        for key, value in extra.items():
            header[key] = value
    blob = _encode_header(header)
    with open(path, "wb") as fh:
        fh.write(_LEN_STRUCT.pack(len(blob)))
        fh.write(blob)
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))
    return header


def read_header(path) -> dict:
    """Parse and validate only the header; payload bytes stay untouched."""
    with open(path, "rb") as fh:
        prefix = fh.read(_LEN_STRUCT.size)
        if len(prefix) != _LEN_STRUCT.size:
            raise ContainerError(f"{path}: truncated before the header length")
        (length,) = _LEN_STRUCT.unpack(prefix)
        if length == 0 or length > _MAX_HEADER:
            raise ContainerError(f"{path}: implausible header length {length}")
        blob = fh.read(length)
    if len(blob) != length:
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: header is not valid JSON: {exc}") from exc
    if header.get("format") != FORMAT_NAME:
        raise ContainerError(f"{path}: unknown format {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported version {header.get('version')!r}")
    if header.get("dtype") != "float64" or header.get("byte_order") != "little":
        raise ContainerError(f"{path}: unsupported payload encoding")
    shape = header.get("shape")
    if not isinstance(shape, list) or any(not isinstance(s, int) or s < 0 for s in shape):
        raise ContainerError(f"{path}: malformed shape {shape!r}")
    return header


def read_matrix(path):
    """Read (array, header); the payload length must match the declared shape."""
    header = read_header(path)
    shape = tuple(header["shape"])
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    with open(path, "rb") as fh:
        (length,) = _LEN_STRUCT.unpack(fh.read(_LEN_STRUCT.size))
        fh.seek(_LEN_STRUCT.size + length)
        payload = fh.read()
    if len(payload) != count * 8:
        raise ContainerError(
            f"{path}: payload holds {len(payload)} bytes but shape {shape} needs {count * 8}"
        )
    arr = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return arr, header


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# autoencoder parameter persistence


def _layer_spec(layer) -> dict:
    if isinstance(layer, ConvLayer):
        return {
            "kind": "conv",
            "weight_shape": list(layer.weight.shape),
            "stride": layer.stride,
            "padding": layer.padding,
            "activation": layer.activation,
        }
    if isinstance(layer, DeconvLayer):
        return {
            "kind": "deconv",
            "weight_shape": list(layer.weight.shape),
            "stride": layer.stride,
            "padding": layer.padding,
            "output_padding": layer.output_padding,
            "activation": layer.activation,
        }
    return {
        "kind": "dense",
        "weight_shape": list(layer.weight.shape),
        "activation": layer.activation,
    }


def write_autoencoder(path, params: AutoencoderParams, seed=None, extra=None):
    """Flatten every tensor (canonical order) into one payload vector."""
    arrays = params.arrays()
    flat = np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)
    spec = {
        "input_size": params.input_size,
        "latent_dim": params.latent_dim,
        "n_enc_convs": len(params.enc_convs),
        "has_enc_dense": params.enc_dense is not None,
        "has_dec_dense": params.dec_dense is not None,
        "dec_shape": list(params.dec_shape) if params.dec_shape else None,
        "layers": [_layer_spec(l) for l in params._layers()],
    }
    payload_extra = {"architecture": spec}
    if extra:
        payload_extra.update(extra)
    return write_matrix(path, flat, role="autoencoder_params", seed=seed, extra=payload_extra)


def read_autoencoder(path) -> AutoencoderParams:
    flat, header = read_matrix(path)
    spec = header.get("architecture")
    if not isinstance(spec, dict):
        raise ContainerError(f"{path}: missing architecture description")
    offset = 0

    def take(shape):
        nonlocal offset
        size = int(np.prod(shape, dtype=np.int64))
        chunk = flat[offset : offset + size].reshape(shape).copy()
        offset += size
        return chunk

    layers = []
    for entry in spec["layers"]:
        w_shape = entry["weight_shape"]
        weight = take(w_shape)
        if entry["kind"] == "conv":
            bias = take((w_shape[0],))
            layers.append(ConvLayer(weight, bias, entry["stride"], entry["padding"],
                                    entry["activation"]))
        elif entry["kind"] == "deconv":
            bias = take((w_shape[1],))
            layers.append(DeconvLayer(weight, bias, entry["stride"], entry["padding"],
                                      entry["output_padding"], entry["activation"]))
        else:
            bias = take((w_shape[0],))
            layers.append(DenseLayer(weight, bias, entry["activation"]))
    if offset != flat.size:
        raise ContainerError(f"{path}: parameter payload has {flat.size - offset} stray values")

    n_convs = spec["n_enc_convs"]
    enc_convs = layers[:n_convs]
    rest = layers[n_convs:]
    enc_dense = dec_dense = None
    if spec["has_enc_dense"]:
        enc_dense, rest = rest[0], rest[1:]
    if spec["has_dec_dense"]:
        dec_dense, rest = rest[0], rest[1:]
    return AutoencoderParams(
        input_size=spec["input_size"],
        latent_dim=spec["latent_dim"],
        enc_convs=enc_convs,
        enc_dense=enc_dense,
        dec_dense=dec_dense,
        dec_shape=tuple(spec["dec_shape"]) if spec["dec_shape"] else None,
        dec_deconvs=rest,
    )
