"""Hand-arm vibration exposure tracking with safety-record export.

Tool telemetry arrives as per-window triaxial RMS accelerations. The
monitor accumulates each worker's daily dose as the 8-hour energy
equivalent

    A(8) = sqrt( sum_i a_hv_i^2 * T_i / T0 ),   T0 = 8 hours

and emits BIM-ready safety records: an event when a worker-tool session
starts or ends, and a single intervention task per worker per day the
moment A(8) reaches the exposure action value (2.5 m/s^2).
"""

from __future__ import annotations

import json
import math
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import StreamOrderError

__all__ = [
    "EAV",
    "REFERENCE_HOURS",
    "VibrationWindow",
    "SafetyRecord",
    "ExposureLedger",
    "MonitorConfig",
    "HavMonitor",
    "vibration_total",
    "a8",
    "ingest_window",
    "export_records",
    "import_records",
    "records_to_json",
]

# Exposure action value for hand-arm vibration, m/s^2 (single daily trigger).
EAV = 2.5
# The dose is normalized to an 8-hour working day.
REFERENCE_HOURS = 8.0

_GUID_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "sitealign/hav-safety-records")
_IFC_ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz_$"

_KIND_TO_IFC = {
    "activityStart": "IfcEvent",
    "intervention": "IfcTask",
    "activityEnd": "IfcEvent",
}


def vibration_total(awx: float, awy: float, awz: float) -> float:
    """Total vibration value: root sum of squares of the axis RMS values."""
    return math.sqrt(awx * awx + awy * awy + awz * awz)


def a8(segments) -> float:
    """Daily exposure normalized to 8 hours.

    ``segments`` is an iterable of (a_hv in m/s^2, duration in hours); an
    empty day reads 0.
    """
    energy = 0.0
    for a_hv, hours in segments:
        if hours < 0:
            raise ValueError("segment duration cannot be negative")
        energy += a_hv * a_hv * hours
    return math.sqrt(energy / REFERENCE_HOURS)


def ifc_guid(text: str) -> str:
    """Deterministic 22-character IFC GlobalId derived from ``text``."""
    num = int.from_bytes(uuid.uuid5(_GUID_NAMESPACE, text).bytes, "big")
    chars = []
    for _ in range(22):
        chars.append(_IFC_ALPHABET[num & 63])
        num >>= 6
    return "".join(reversed(chars))


@dataclass(frozen=True)
class VibrationWindow:
    """One telemetry window: worker, tool, interval (epoch seconds), axis RMS."""

    worker_id: str
    tool_label: str
    start: float
    end: float
    awx: float
    awy: float
    awz: float

    def __post_init__(self):
        if not self.worker_id:
            raise ValueError("worker_id must be non-empty")
        if not (self.end > self.start):
            raise ValueError(f"window end ({self.end}) must be after start ({self.start})")
        for v in (self.awx, self.awy, self.awz):
            if not math.isfinite(v):
                raise ValueError("acceleration values must be finite")

    @property
    def a_hv(self) -> float:
        return vibration_total(self.awx, self.awy, self.awz)

    @property
    def hours(self) -> float:
        return (self.end - self.start) / 3600.0


@dataclass(frozen=True)
class SafetyRecord:
    """One BIM-ready safety entity (event or intervention task)."""

    kind: str  # activityStart | intervention | activityEnd
    worker_id: str
    timestamp: float
    a_hv: float
    a8: float
    risk: bool
    element_guid: str | None = None

    def __post_init__(self):
        if self.kind not in _KIND_TO_IFC:
            raise ValueError(f"unknown record kind {self.kind!r}")

    @property
    def ifc_type(self) -> str:
        return _KIND_TO_IFC[self.kind]

    @property
    def global_id(self) -> str:
        return ifc_guid(f"{self.worker_id}|{self.kind}|{self.timestamp!r}")


@dataclass
class _Session:
    tool: str
    start: float
    last_end: float


@dataclass
class ExposureLedger:
    """Accumulated state for one worker's current day."""

    worker_id: str
    day: int | None = None
    segments: list = field(default_factory=list)  # (a_hv, hours)
    triggered: bool = False
    session: _Session | None = None
    last_time: float | None = None
    history: list = field(default_factory=list)  # (end_time, a8) per window

    @property
    def current_a8(self) -> float:
        return a8(self.segments)


@dataclass(frozen=True)
class MonitorConfig:
    """Tunables: action value, idle gap ending a session, day boundary."""

    eav: float = EAV
    idle_gap_s: float = 600.0
    day_offset_s: float = 0.0  # local midnight as an offset from UTC midnight


def _day_index(t: float, config: MonitorConfig) -> int:
    return int((t - config.day_offset_s) // 86400.0)


def _close_session(ledger: ExposureLedger, config: MonitorConfig) -> list:
    if ledger.session is None:
        return []
    record = SafetyRecord(
        kind="activityEnd",
        worker_id=ledger.worker_id,
        timestamp=ledger.session.last_end,
        a_hv=0.0,
        a8=ledger.current_a8,
        risk=ledger.current_a8 >= config.eav,
    )
    ledger.session = None
    return [record]


def ingest_window(ledger: ExposureLedger, window: VibrationWindow, config: MonitorConfig = MonitorConfig()):
    """Fold one telemetry window into a worker's ledger.

    Returns ``(ledger, records)``; the ledger is updated in place. Windows
    must be time-ordered per worker. Emits an activity-start event when a
    worker-tool session opens (tool change or idle gap closes the previous
    one first), and at most one intervention per day, at the window whose
    accumulated A(8) first reaches the action value.
    """
    if window.worker_id != ledger.worker_id:
        raise ValueError(f"window for {window.worker_id!r} fed to ledger of {ledger.worker_id!r}")
    if ledger.last_time is not None and window.start < ledger.last_time:
        raise StreamOrderError(
            f"worker {ledger.worker_id!r}: window starting {window.start} precedes "
            f"previous end {ledger.last_time}"
        )

    records: list[SafetyRecord] = []
    day = _day_index(window.start, config)
    if ledger.day is None:
        ledger.day = day
    elif day > ledger.day:
        records.extend(_close_session(ledger, config))
        ledger.segments = []
        ledger.triggered = False
        ledger.history = []
        ledger.day = day

    if ledger.session is not None:
        idle = window.start - ledger.session.last_end
        if window.tool_label != ledger.session.tool or idle > config.idle_gap_s:
            records.extend(_close_session(ledger, config))

    opening = ledger.session is None
    ledger.segments.append((window.a_hv, window.hours))
    dose = ledger.current_a8
    ledger.history.append((window.end, dose))

    if opening:
        ledger.session = _Session(window.tool_label, window.start, window.end)
        records.append(
            SafetyRecord(
                kind="activityStart",
                worker_id=ledger.worker_id,
                timestamp=window.start,
                a_hv=window.a_hv,
                a8=dose,
                risk=dose >= config.eav,
            )
        )
    else:
        ledger.session.last_end = window.end
        ledger.session.tool = window.tool_label

    if not ledger.triggered and dose >= config.eav:
        ledger.triggered = True
        records.append(
            SafetyRecord(
                kind="intervention",
                worker_id=ledger.worker_id,
                timestamp=window.end,
                a_hv=window.a_hv,
                a8=dose,
                risk=True,
            )
        )

    ledger.last_time = window.end
    return ledger, records


class HavMonitor:
    """Multi-worker stream processor around per-worker ledgers."""

    def __init__(self, config: MonitorConfig = MonitorConfig()):
        self.config = config
        self.ledgers: dict[str, ExposureLedger] = {}

    def ledger(self, worker_id: str) -> ExposureLedger:
        if worker_id not in self.ledgers:
            self.ledgers[worker_id] = ExposureLedger(worker_id=worker_id)
        return self.ledgers[worker_id]

    def ingest(self, window: VibrationWindow) -> list:
        _, records = ingest_window(self.ledger(window.worker_id), window, self.config)
        return records

    def end_session(self, worker_id: str) -> list:
        if worker_id not in self.ledgers:
            return []
        return _close_session(self.ledgers[worker_id], self.config)

    def end_day(self) -> list:
        records = []
        for worker_id in sorted(self.ledgers):
            ledger = self.ledgers[worker_id]
            records.extend(_close_session(ledger, self.config))
            ledger.segments = []
            ledger.triggered = False
            ledger.history = []
            ledger.day = None
        return records

    def flush(self) -> list:
        """Close every open session (end of stream)."""
        records = []
        for worker_id in sorted(self.ledgers):
            records.extend(_close_session(self.ledgers[worker_id], self.config))
        return records

    def summaries(self) -> list[dict]:
        out = []
        for worker_id in sorted(self.ledgers):
            ledger = self.ledgers[worker_id]
            out.append(
                {
                    "workerId": worker_id,
                    "a8": ledger.current_a8,
                    "triggered": ledger.triggered,
                    "windows": len(ledger.segments),
                }
            )
        return out


# ---------------------------------------------------------------------------
# record export / import


def export_records(records) -> dict:
    """Records as a BIM-flavored JSON document (deterministic GUIDs)."""
    entities = []
    for r in records:
        entities.append(
            {
                "ifcType": r.ifc_type,
                "kind": r.kind,
                "globalId": r.global_id,
                "workerId": r.worker_id,
                "timestamp": r.timestamp,
                "attributes": {"aHv": r.a_hv, "a8": r.a8, "risk": r.risk},
                "relatedElementGuid": r.element_guid,
            }
        )
    return {"schema": "hav-safety-records", "version": 1, "entities": entities}


def import_records(doc: dict) -> list:
    """Inverse of :func:`export_records` (GUIDs are re-derived, not stored)."""
    if doc.get("schema") != "hav-safety-records" or doc.get("version") != 1:
        raise ValueError("not a hav-safety-records document")
    records = []
    for e in doc["entities"]:
        records.append(
            SafetyRecord(
                kind=e["kind"],
                worker_id=e["workerId"],
                timestamp=float(e["timestamp"]),
                a_hv=float(e["attributes"]["aHv"]),
                a8=float(e["attributes"]["a8"]),
                risk=bool(e["attributes"]["risk"]),
                element_guid=e.get("relatedElementGuid"),
            )
        )
    return records


def records_to_json(records) -> str:
    """Canonical JSON text for a record list (stable byte-for-byte)."""
    return json.dumps(export_records(records), indent=2, sort_keys=True) + "\n"


def save_records(records, path) -> None:
    Path(path).write_text(records_to_json(records), encoding="utf-8")


def load_records(path) -> list:
    return import_records(json.loads(Path(path).read_text(encoding="utf-8")))
