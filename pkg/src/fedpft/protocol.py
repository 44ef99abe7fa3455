"""Wire format for mixture messages and communication accounting.

A message carries one class-conditional mixture plus routing metadata in
a fixed 24-byte header followed by every parameter scalar as IEEE 754
binary16 (little-endian). Full covariances transmit the upper triangle
including the diagonal. Encoded size depends only on (family, d, K),
never on how many samples produced the fit.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .gmm import CovarianceFamily, GmmParams

MESSAGE_MAGIC = b"PFTG"
MESSAGE_VERSION = 1
# magic(4) version(u8) family(u8) K(u16) d(u32) client(u32) class(u16) n_ic(u32) reserved(2)
_HEADER = struct.Struct("<4sBBHIIHI2x")
HEADER_BYTES = _HEADER.size
_F16_MAX = 65504.0


class ProtocolError(Exception):
    """Base class for codec failures."""


class EncodeRangeError(ProtocolError):
    """A parameter does not fit in binary16."""


class MessageFormatError(ProtocolError):
    """Bad magic, version, family, or header fields."""


class MessageLengthError(ProtocolError):
    """Buffer length disagrees with the header."""


class InvalidParamError(ProtocolError):
    """Decoded payload holds NaN or otherwise unusable parameters."""


@dataclass(frozen=True, eq=False)
class GmmMessage:
    """One transmitted mixture: routing metadata plus parameters."""

    client_id: int
    class_id: int
    sample_count: int
    params: GmmParams

    def __post_init__(self):
        if not 0 <= self.client_id < 1 << 32:
            raise ValueError("client_id must fit in u32")
        if not 0 <= self.class_id < 1 << 16:
            raise ValueError("class_id must fit in u16")
        if not 0 <= self.sample_count < 1 << 32:
            raise ValueError("sample_count must fit in u32")
        if self.params.num_components >= 1 << 16:
            raise ValueError("component count must fit in u16")


def param_count(family: CovarianceFamily, dim: int, num_components: int, num_classes: int) -> int:
    """Scalars needed to express num_classes mixtures of the given shape.

    full:      (2d + (d^2 - d)/2 + 1) * K * C
    diagonal:  (2d + 1) * K * C
    spherical: (d + 2) * K * C
    """
    if dim < 1 or num_components < 1 or num_classes < 1:
        raise ValueError("dim, num_components, and num_classes must be >= 1")
    family = CovarianceFamily(family)
    if family == CovarianceFamily.FULL:
        per = 2 * dim + (dim * dim - dim) // 2 + 1
    elif family == CovarianceFamily.DIAG:
        per = 2 * dim + 1
    else:
        per = dim + 2
    return per * num_components * num_classes


def _payload_parts(params: GmmParams) -> list:
    k, d = params.means.shape
    parts = [params.weights, params.means.reshape(-1)]
    if params.family == CovarianceFamily.FULL:
        rows, cols = np.triu_indices(d)
        parts.append(params.covariances[:, rows, cols].reshape(-1))
    else:
        parts.append(np.asarray(params.covariances).reshape(-1))
    return parts


def encode(msg: GmmMessage) -> bytes:
    """Serialize a message; every parameter scalar becomes binary16."""
    params = msg.params
    out = [
        _HEADER.pack(
            MESSAGE_MAGIC,
            MESSAGE_VERSION,
            int(params.family),
            params.num_components,
            params.dim,
            msg.client_id,
            msg.class_id,
            msg.sample_count,
        )
    ]
    offset = 0
    for part in _payload_parts(params):
        if part.size and float(np.abs(part).max()) > _F16_MAX:
            local = int(np.flatnonzero(np.abs(part) > _F16_MAX)[0])
            value = float(part[local])
            raise EncodeRangeError(
                f"parameter scalar {offset + local} = {value:.6g} "
                f"overflows binary16 range (+/-{_F16_MAX:g})"
            )
        out.append(part.astype("<f2").tobytes())
        offset += part.size
    return b"".join(out)


def decode(buf: bytes) -> GmmMessage:
    """Inverse of encode; mixture weights are renormalized to sum to 1."""
    if len(buf) < HEADER_BYTES:
        raise MessageLengthError(f"buffer of {len(buf)} bytes is shorter than the header")
    magic, version, family_code, k, d, client_id, class_id, n_ic = _HEADER.unpack_from(buf)
    if magic != MESSAGE_MAGIC:
        raise MessageFormatError(f"bad magic {magic!r}")
    if version != MESSAGE_VERSION:
        raise MessageFormatError(f"unsupported version {version}")
    try:
        family = CovarianceFamily(family_code)
    except ValueError:
        raise MessageFormatError(f"unknown covariance family code {family_code}") from None
    if k < 1 or d < 1:
        raise MessageFormatError(f"header declares K={k}, d={d}")
    scalars = param_count(family, d, k, 1)
    expected = HEADER_BYTES + 2 * scalars
    if len(buf) != expected:
        raise MessageLengthError(f"expected {expected} bytes, got {len(buf)}")
    vec = np.frombuffer(buf, dtype="<f2", offset=HEADER_BYTES).astype(np.float64)
    if not np.isfinite(vec).all():
        raise InvalidParamError("payload holds non-finite parameters")
    weights = vec[:k]
    means = vec[k : k + k * d].reshape(k, d)
    rest = vec[k + k * d :]
    if family == CovarianceFamily.FULL:
        rows, cols = np.triu_indices(d)
        tri = d * (d + 1) // 2
        cov = np.zeros((k, d, d))
        cov[:, rows, cols] = rest.reshape(k, tri)
        cov[:, cols, rows] = rest.reshape(k, tri)
    elif family == CovarianceFamily.DIAG:
        cov = rest.reshape(k, d)
    else:
        cov = rest.reshape(k)
    total = weights.sum()
    if not total > 0:
        raise InvalidParamError("mixture weights sum to zero")
    params = GmmParams(family, weights / total, means, cov)
    return GmmMessage(client_id, class_id, n_ic, params)


@dataclass(frozen=True)
class ClientComm:
    """Traffic of one client: message, scalar, and byte counts."""

    messages: int
    scalars: int
    bytes: int


@dataclass(frozen=True)
class CommReport:
    """Per-client and total communication volume."""

    per_client: dict
    total_messages: int
    total_scalars: int
    total_bytes: int

    def to_dict(self) -> dict:
        return {
            "per_client": {
                str(cid): {"messages": cc.messages, "scalars": cc.scalars, "bytes": cc.bytes}
                for cid, cc in sorted(self.per_client.items())
            },
            "total_messages": self.total_messages,
            "total_scalars": self.total_scalars,
            "total_bytes": self.total_bytes,
        }


def account(messages) -> CommReport:
    """Tally exact encoded sizes per client and in total."""
    per: dict[int, list[int]] = {}
    for msg in messages:
        scalars = param_count(msg.params.family, msg.params.dim, msg.params.num_components, 1)
        entry = per.setdefault(msg.client_id, [0, 0, 0])
        entry[0] += 1
        entry[1] += scalars
        entry[2] += HEADER_BYTES + 2 * scalars
    per_client = {cid: ClientComm(*vals) for cid, vals in per.items()}
    return CommReport(
        per_client=per_client,
        total_messages=sum(c.messages for c in per_client.values()),
        total_scalars=sum(c.scalars for c in per_client.values()),
        total_bytes=sum(c.bytes for c in per_client.values()),
    )


def encode_batch(messages) -> bytes:
    """Batch transfer artifact: u32 count, then u32-length-prefixed messages."""
    blobs = [encode(m) for m in messages]
    out = [struct.pack("<I", len(blobs))]
    for blob in blobs:
        out.append(struct.pack("<I", len(blob)))
        out.append(blob)
    return b"".join(out)


def decode_batch(buf: bytes) -> list:
    if len(buf) < 4:
        raise MessageLengthError("batch shorter than its count field")
    (count,) = struct.unpack_from("<I", buf)
    off = 4
    out = []
    for _ in range(count):
        if len(buf) < off + 4:
            raise MessageLengthError("batch truncated at a length prefix")
        (length,) = struct.unpack_from("<I", buf, off)
        off += 4
        if len(buf) < off + length:
            raise MessageLengthError("batch truncated inside a message")
        out.append(decode(buf[off : off + length]))
        off += length
    if off != len(buf):
        raise MessageLengthError(f"{len(buf) - off} trailing bytes after the batch")
    return out


def write_message_file(path, messages) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_batch(messages))


def read_message_file(path) -> list:
    with open(path, "rb") as fh:
        return decode_batch(fh.read())
