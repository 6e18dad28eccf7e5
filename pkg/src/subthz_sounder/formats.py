"""On-disk formats: IQ capture files, path tables, CIR tables and reports.

IQ file layout (little-endian)::

    offset size  field
    0      8     magic b"SUBTHZIQ"
    8      2     version (uint16, = 1)
    10     2     kind (uint16: 0 raw capture, 1 back-to-back reference)
    12     4     angle bin (int32, -1 for the reference)
    16     8     sample rate in Hz (float64)
    24     8     carrier frequency in Hz (float64)
    32     8     aux (float64: pointing azimuth in rad, or reference power in W)
    40     4     snapshot count (uint32)
    44     4     samples per snapshot (uint32)
    48     16    reserved, zero
    64     ...   snapshots, row-major, interleaved float32 I/Q pairs

All text outputs are written atomically (temp file, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .analysis import PathEstimate
from .pipeline import CalibratedCir
from .scene import PathKind, PropagationPath
from .sounder import RawCapture
from .waveform import ReferenceRecord

__all__ = [
    "IQ_MAGIC",
    "IQ_HEADER",
    "IqFormatError",
    "atomic_write_bytes",
    "atomic_write_text",
    "write_iq",
    "read_iq_header",
    "write_capture",
    "read_capture",
    "write_reference",
    "read_reference",
    "quantize_reference",
    "paths_to_json",
    "paths_from_json",
    "paths_csv",
    "cirs_csv",
    "read_cirs_csv",
    "estimates_csv",
    "dump_json",
    "to_csv",
]

IQ_MAGIC = b"SUBTHZIQ"
IQ_VERSION = 1
IQ_HEADER = struct.Struct("<8sHHidddII16x")
assert IQ_HEADER.size == 64

KIND_CAPTURE = 0
KIND_REFERENCE = 1


class IqFormatError(ValueError):
    pass


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- IQ files -----------------------------------------------------------------

def write_iq(path, samples: np.ndarray, *, kind: int, angle_bin: int, sample_rate: float,
             carrier: float, aux: float) -> None:
    samples = np.atleast_2d(np.asarray(samples))
    header = IQ_HEADER.pack(IQ_MAGIC, IQ_VERSION, kind, angle_bin, sample_rate, carrier, aux,
                            samples.shape[0], samples.shape[1])
    body = np.ascontiguousarray(samples, dtype="<c8").tobytes()
    atomic_write_bytes(path, header + body)


def read_iq_header(buf: bytes) -> dict:
    if len(buf) < IQ_HEADER.size:
        raise IqFormatError("file shorter than the 64-byte header")
    magic, version, kind, angle_bin, rate, carrier, aux, n_snap, n_samp = IQ_HEADER.unpack_from(buf)
    if magic != IQ_MAGIC:
        raise IqFormatError(f"bad magic {magic!r}")
    if version != IQ_VERSION:
        raise IqFormatError(f"unsupported IQ version {version}")
    return dict(kind=kind, angle_bin=angle_bin, sample_rate=rate, carrier=carrier, aux=aux,
                n_snapshots=n_snap, samples_per_snapshot=n_samp)


def _read_iq(path):
    buf = Path(path).read_bytes()
    head = read_iq_header(buf)
    count = head["n_snapshots"] * head["samples_per_snapshot"]
    expected = IQ_HEADER.size + 8 * count
    if len(buf) != expected:
        raise IqFormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    data = np.frombuffer(buf, dtype="<c8", offset=IQ_HEADER.size, count=count)
    return head, data.reshape(head["n_snapshots"], head["samples_per_snapshot"]).astype(np.complex64)


def write_capture(path, capture: RawCapture) -> None:
    write_iq(path, capture.snapshots, kind=KIND_CAPTURE, angle_bin=capture.angle_bin,
             sample_rate=capture.sample_rate, carrier=capture.carrier_frequency,
             aux=capture.pointing_azimuth)


def read_capture(path) -> RawCapture:
    head, data = _read_iq(path)
    if head["kind"] != KIND_CAPTURE:
        raise IqFormatError(f"{path} is not a raw capture file")
    return RawCapture(head["angle_bin"], head["aux"], data, head["sample_rate"], head["carrier"])


def quantize_reference(ref: ReferenceRecord) -> ReferenceRecord:
    """The reference as it reads back from an IQ file (float32 samples)."""
    samples = ref.samples.astype(np.complex64).astype(complex)
    return ReferenceRecord(samples, ref.sample_rate, float(np.mean(np.abs(samples) ** 2)),
                           ref.chain_gain, ref.chain_delay)


def write_reference(path, ref: ReferenceRecord, carrier: float = 0.0) -> None:
    write_iq(path, ref.samples, kind=KIND_REFERENCE, angle_bin=-1, sample_rate=ref.sample_rate,
             carrier=carrier, aux=ref.reference_power)


def read_reference(path) -> ReferenceRecord:
    head, data = _read_iq(path)
    if head["kind"] != KIND_REFERENCE:
        raise IqFormatError(f"{path} is not a reference file")
    samples = data[0].astype(complex)
    return ReferenceRecord(samples, head["sample_rate"], float(np.mean(np.abs(samples) ** 2)))


# -- tables and reports -------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else ("-inf" if value < 0 else "inf" if value > 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def paths_to_json(paths: Sequence[PropagationPath]) -> list[dict]:
    return [dict(delay=p.delay, aoa_azimuth=p.aoa_azimuth, gain=[p.gain.real, p.gain.imag],
                 kind=p.kind.value, wall_order=p.wall_order,
                 image_position=list(p.image_position) if p.image_position else None)
            for p in paths]


def paths_from_json(items: Sequence[dict]) -> list[PropagationPath]:
    return [PropagationPath(delay=d["delay"], aoa_azimuth=d["aoa_azimuth"], gain=complex(*d["gain"]),
                            kind=PathKind(d["kind"]), wall_order=d["wall_order"],
                            image_position=tuple(d["image_position"]) if d.get("image_position") else None)
            for d in items]


def paths_csv(paths: Sequence[PropagationPath]) -> str:
    return to_csv(
        ["kind", "wall_order", "delay_s", "length_m", "aoa_deg", "gain_re", "gain_im", "power_db"],
        ([p.kind.value, p.wall_order, p.delay, p.length, math.degrees(p.aoa_azimuth),
          p.gain.real, p.gain.imag, p.power_db] for p in paths))


def cirs_csv(cirs: Sequence[CalibratedCir]) -> str:
    def rows():
        for c in cirs:
            for t, a in zip(c.delay_axis.tolist(), c.amplitude.tolist()):
                yield c.angle_bin, t, a.real, a.imag
    return to_csv(["angle_bin", "delay_s", "re", "im"], rows())


def read_cirs_csv(text: str, delay_resolution: float, pointing: dict[int, float] | None = None
                  ) -> list[CalibratedCir]:
    table = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
    out = []
    for b in np.unique(table[:, 0]).astype(int):
        rows = table[table[:, 0] == b]
        out.append(CalibratedCir(int(b), rows[:, 1].copy(), rows[:, 2] + 1j * rows[:, 3],
                                 delay_resolution, (pointing or {}).get(int(b), 0.0)))
    return out


def estimates_csv(estimates: Sequence[PathEstimate]) -> str:
    return to_csv(["angle_bin", "delay_s", "power_db", "amp_re", "amp_im", "delay_index"],
                  ([e.angle_bin, e.delay, e.power, e.amplitude.real, e.amplitude.imag, e.delay_index]
                   for e in estimates))
