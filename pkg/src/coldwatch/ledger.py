"""In-process contract ledger: access-controlled, append-only, hash-chained.

Mirrors a five-function smart contract: batch reading upload, alert log,
resolution log, report anchor, authorization change. Entries are encoded
with a fixed canonical layout (big-endian fixed-width integers,
length-prefixed strings) so digests are reproducible byte for byte, and
each entry embeds the digest of its predecessor.

Duplicate (device_id, seq) submissions are acknowledged as no-op
successes returning the existing entry, which makes crash-recovery
replay safe. Costs are exact rationals; the default fee is calibrated so
a quiet day of 12 transactions totals $0.0107.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .model import Reading, Timestamp, day_start

ZERO_DIGEST = bytes(32)
LEDGER_MAGIC = b"CWLG"
LEDGER_VERSION = 1
DEFAULT_BATCH_LIMIT = 256

# Uniform per-transaction fee calibrated to a $0.0107 quiet day of 12 txs.
DEFAULT_FEE_PER_GAS_USD = Fraction("0.0107") / 12


class LedgerError(Exception):
    pass


class Unauthorized(LedgerError):
    pass


class MalformedPayload(LedgerError):
    pass


class BatchTooLarge(LedgerError):
    pass


class LedgerOutage(LedgerError):
    """Transient fault window is active; the caller must retry."""


class LedgerFileError(LedgerError):
    """Ledger file cannot be parsed (bad framing, magic, or truncation)."""


class LedgerKind(enum.Enum):
    """The five externally callable operation kinds."""

    READING_BATCH = 1
    ALERT = 2
    RESOLUTION = 3
    REPORT_ANCHOR = 4
    ADMIN_CHANGE = 5


@dataclass(frozen=True)
class ReadingBatchPayload:
    readings: tuple[Reading, ...]


@dataclass(frozen=True)
class AlertPayload:
    episode_id: int
    temp_decic: int
    hum_decip: int


@dataclass(frozen=True)
class ResolutionPayload:
    episode_id: int
    duration: int
    temp_decic: int
    hum_decip: int


@dataclass(frozen=True)
class ReportAnchorPayload:
    day: Timestamp  # UTC midnight starting the reported day
    digest: bytes
    row_count: int


class AdminAction(enum.Enum):
    GRANT = 1
    REVOKE = 2


@dataclass(frozen=True)
class AdminChangePayload:
    action: AdminAction
    key: str


Payload = (
    ReadingBatchPayload
    | AlertPayload
    | ResolutionPayload
    | ReportAnchorPayload
    | AdminChangePayload
)


@dataclass(frozen=True)
class EntryRequest:
    """What a writer asks the contract to append; (device_id, seq) is the
    idempotency key."""

    kind: LedgerKind
    device_id: str
    seq: int
    at: Timestamp
    payload: Payload


@dataclass(frozen=True)
class LedgerEntry:
    index: int
    kind: LedgerKind
    device_id: str
    seq: int
    at: Timestamp
    payload: Payload
    prev_hash: bytes
    entry_hash: bytes

    @property
    def entry_hash_hex(self) -> str:
        return self.entry_hash.hex()


# -- canonical encoding ------------------------------------------------------


def _enc_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise MalformedPayload("string field too long")
    return struct.pack(">H", len(raw)) + raw


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedPayload("truncated field")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack(">H")
        return self.take(n).decode("utf-8")


def encode_payload(kind: LedgerKind, payload: Payload) -> bytes:
    if kind is LedgerKind.READING_BATCH:
        assert isinstance(payload, ReadingBatchPayload)
        parts = [struct.pack(">H", len(payload.readings))]
        for r in payload.readings:
            parts.append(struct.pack(">qhH", r.at, r.temp_decic, r.hum_decip))
        return b"".join(parts)
    if kind is LedgerKind.ALERT:
        assert isinstance(payload, AlertPayload)
        return struct.pack(">qhH", payload.episode_id, payload.temp_decic, payload.hum_decip)
    if kind is LedgerKind.RESOLUTION:
        assert isinstance(payload, ResolutionPayload)
        return struct.pack(
            ">qIhH", payload.episode_id, payload.duration, payload.temp_decic, payload.hum_decip
        )
    if kind is LedgerKind.REPORT_ANCHOR:
        assert isinstance(payload, ReportAnchorPayload)
        if len(payload.digest) != 32:
            raise MalformedPayload("report digest must be 32 bytes")
        return struct.pack(">q", payload.day) + payload.digest + struct.pack(">I", payload.row_count)
    if kind is LedgerKind.ADMIN_CHANGE:
        assert isinstance(payload, AdminChangePayload)
        return struct.pack(">B", payload.action.value) + _enc_str(payload.key)
    raise MalformedPayload(f"unknown kind {kind}")


def decode_payload(kind: LedgerKind, data: bytes, device_id: str) -> Payload:
    cur = _Cursor(data)
    if kind is LedgerKind.READING_BATCH:
        (count,) = cur.unpack(">H")
        readings = []
        for _ in range(count):
            at, temp, hum = cur.unpack(">qhH")
            readings.append(Reading(device_id=device_id, at=at, temp_decic=temp, hum_decip=hum))
        return ReadingBatchPayload(readings=tuple(readings))
    if kind is LedgerKind.ALERT:
        episode, temp, hum = cur.unpack(">qhH")
        return AlertPayload(episode_id=episode, temp_decic=temp, hum_decip=hum)
    if kind is LedgerKind.RESOLUTION:
        episode, duration, temp, hum = cur.unpack(">qIhH")
        return ResolutionPayload(episode_id=episode, duration=duration, temp_decic=temp, hum_decip=hum)
    if kind is LedgerKind.REPORT_ANCHOR:
        (day,) = cur.unpack(">q")
        digest = cur.take(32)
        (rows,) = cur.unpack(">I")
        return ReportAnchorPayload(day=day, digest=digest, row_count=rows)
    if kind is LedgerKind.ADMIN_CHANGE:
        (action,) = cur.unpack(">B")
        key = cur.string()
        return AdminChangePayload(action=AdminAction(action), key=key)
    raise MalformedPayload(f"unknown kind {kind}")


def encode_request(req: EntryRequest) -> bytes:
    payload = encode_payload(req.kind, req.payload)
    return (
        struct.pack(">B", req.kind.value)
        + _enc_str(req.device_id)
        + struct.pack(">Qq", req.seq, req.at)
        + struct.pack(">I", len(payload))
        + payload
    )


def decode_request(data: bytes) -> EntryRequest:
    cur = _Cursor(data)
    (kind_code,) = cur.unpack(">B")
    try:
        kind = LedgerKind(kind_code)
    except ValueError as exc:
        raise MalformedPayload(f"unknown kind code {kind_code}") from exc
    device_id = cur.string()
    seq, at = cur.unpack(">Qq")
    (n,) = cur.unpack(">I")
    payload = decode_payload(kind, cur.take(n), device_id)
    return EntryRequest(kind=kind, device_id=device_id, seq=seq, at=at, payload=payload)


def encode_entry_body(
    index: int,
    kind: LedgerKind,
    device_id: str,
    seq: int,
    at: Timestamp,
    payload_bytes: bytes,
    prev_hash: bytes,
) -> bytes:
    return (
        struct.pack(">Q", index)
        + struct.pack(">B", kind.value)
        + _enc_str(device_id)
        + struct.pack(">Qq", seq, at)
        + struct.pack(">I", len(payload_bytes))
        + payload_bytes
        + prev_hash
    )


def entry_body(entry: LedgerEntry) -> bytes:
    return encode_entry_body(
        entry.index,
        entry.kind,
        entry.device_id,
        entry.seq,
        entry.at,
        encode_payload(entry.kind, entry.payload),
        entry.prev_hash,
    )


def _decode_entry(body: bytes, entry_hash: bytes) -> LedgerEntry:
    cur = _Cursor(body)
    (index,) = cur.unpack(">Q")
    (kind_code,) = cur.unpack(">B")
    try:
        kind = LedgerKind(kind_code)
    except ValueError as exc:
        raise MalformedPayload(f"unknown kind code {kind_code}") from exc
    device_id = cur.string()
    seq, at = cur.unpack(">Qq")
    (n,) = cur.unpack(">I")
    payload = decode_payload(kind, cur.take(n), device_id)
    prev_hash = cur.take(32)
    return LedgerEntry(
        index=index,
        kind=kind,
        device_id=device_id,
        seq=seq,
        at=at,
        payload=payload,
        prev_hash=prev_hash,
        entry_hash=entry_hash,
    )


# -- chain verification -------------------------------------------------------


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    bad_index: int | None = None
    reason: str = ""


def verify_entries(entries: list[LedgerEntry]) -> ChainReport:
    """Recompute every digest and link; report the first inconsistency."""
    prev = ZERO_DIGEST
    for i, entry in enumerate(entries):
        if entry.index != i:
            return ChainReport(False, i, f"index {entry.index} at position {i}")
        if entry.prev_hash != prev:
            return ChainReport(False, i, "broken predecessor link")
        try:
            recomputed = hashlib.sha256(entry_body(entry)).digest()
        except LedgerError as exc:
            return ChainReport(False, i, f"unencodable entry: {exc}")
        if recomputed != entry.entry_hash:
            return ChainReport(False, i, "entry digest mismatch")
        prev = entry.entry_hash
    return ChainReport(True)


# -- gas and cost -------------------------------------------------------------


@dataclass(frozen=True)
class GasSchedule:
    gas: dict[LedgerKind, int] = field(
        default_factory=lambda: {kind: 1 for kind in LedgerKind}
    )
    fee_per_gas_usd: Fraction = DEFAULT_FEE_PER_GAS_USD

    def __post_init__(self) -> None:
        for kind in LedgerKind:
            if self.gas.get(kind, 0) <= 0:
                raise LedgerError(f"gas for {kind.name} must be > 0")


@dataclass(frozen=True)
class CostTally:
    day: Timestamp
    tx_by_kind: dict[LedgerKind, int]
    gas_total: int
    usd_total: Fraction

    @property
    def tx_total(self) -> int:
        return sum(self.tx_by_kind.values())


def format_usd(amount: Fraction, places: int = 4) -> str:
    scale = 10**places
    # Round half up on the final digit; exact rational arithmetic until here.
    scaled = (amount * scale * 2 + 1) // 2
    sign = "-" if scaled < 0 else ""
    scaled = abs(scaled)
    return f"{sign}{scaled // scale}.{scaled % scale:0{places}d}"


def accounting_day(entry: LedgerEntry) -> Timestamp:
    """Report anchors count toward the day they anchor; everything else
    toward its timestamp's UTC day."""
    if entry.kind is LedgerKind.REPORT_ANCHOR:
        assert isinstance(entry.payload, ReportAnchorPayload)
        return entry.payload.day
    return day_start(entry.at)


def cost_report(
    entries: list[LedgerEntry], day: Timestamp, gas: GasSchedule | None = None
) -> CostTally:
    gas = gas or GasSchedule()
    day = day_start(day)
    tx_by_kind: dict[LedgerKind, int] = {}
    gas_total = 0
    for entry in entries:
        if accounting_day(entry) != day:
            continue
        tx_by_kind[entry.kind] = tx_by_kind.get(entry.kind, 0) + 1
        gas_total += gas.gas[entry.kind]
    return CostTally(
        day=day,
        tx_by_kind=tx_by_kind,
        gas_total=gas_total,
        usd_total=gas_total * gas.fee_per_gas_usd,
    )


def observed_days(entries: list[LedgerEntry]) -> list[Timestamp]:
    return sorted({accounting_day(e) for e in entries})


def annualized_usd(entries: list[LedgerEntry], gas: GasSchedule | None = None) -> Fraction:
    """Daily mean over observed days, times 365."""
    days = observed_days(entries)
    if not days:
        return Fraction(0)
    total = sum((cost_report(entries, d, gas).usd_total for d in days), Fraction(0))
    return total / len(days) * 365


# -- access policy and the ledger ---------------------------------------------


class AtRestCipher:
    """Optional hook for encrypting ledger file records at rest.

    Default-off: no cipher ships with the package and the integrity model
    (hash chain over plaintext canonical bytes) does not depend on one.
    Implementations must be length-preserving-or-not, but decrypt(encrypt(x))
    must equal x.
    """

    def encrypt(self, data: bytes) -> bytes:
        raise NotImplementedError

    def decrypt(self, data: bytes) -> bytes:
        raise NotImplementedError


@dataclass
class AccessPolicy:
    owner: str
    authorized_writers: set[str] = field(default_factory=set)

    def allows(self, credential: str) -> bool:
        return credential == self.owner or credential in self.authorized_writers


class Ledger:
    """Single-writer contract state: submissions are serialized; reads may
    snapshot the entry list freely (entries are immutable values)."""

    def __init__(
        self,
        owner: str,
        path: Path | None = None,
        gas: GasSchedule | None = None,
        batch_limit: int = DEFAULT_BATCH_LIMIT,
        authorized_writers: set[str] | None = None,
        at_rest_cipher: AtRestCipher | None = None,
    ):
        self.policy = AccessPolicy(owner=owner, authorized_writers=set(authorized_writers or ()))
        self.gas = gas or GasSchedule()
        self.batch_limit = batch_limit
        self.fault_windows: list[tuple[Timestamp, Timestamp]] = []
        self.entries: list[LedgerEntry] = []
        self._by_key: dict[tuple[str, int], int] = {}
        self._path = path
        self._cipher = at_rest_cipher
        if path is not None:
            with open(path, "wb") as f:
                f.write(LEDGER_MAGIC + bytes([LEDGER_VERSION]))

    def set_fault_windows(self, windows: list[tuple[Timestamp, Timestamp]]) -> None:
        self.fault_windows = list(windows)

    def _outage_active(self, now: Timestamp) -> bool:
        return any(s <= now < e for s, e in self.fault_windows)

    def submit(
        self, request: EntryRequest, credential: str, now: Timestamp | None = None
    ) -> LedgerEntry:
        now = request.at if now is None else now
        if self._outage_active(now):
            raise LedgerOutage(f"ledger unavailable at {now}")
        if not self.policy.allows(credential):
            raise Unauthorized(f"credential {credential!r} is not an authorized writer")
        if request.kind is LedgerKind.ADMIN_CHANGE and credential != self.policy.owner:
            raise Unauthorized("authorization changes require the owner key")
        key = (request.device_id, request.seq)
        existing = self._by_key.get(key)
        if existing is not None:
            return self.entries[existing]
        payload_bytes = encode_payload(request.kind, request.payload)  # validates bounds
        prev = self.entries[-1].entry_hash if self.entries else ZERO_DIGEST
        index = len(self.entries)
        body = encode_entry_body(
            index, request.kind, request.device_id, request.seq, request.at, payload_bytes, prev
        )
        entry = LedgerEntry(
            index=index,
            kind=request.kind,
            device_id=request.device_id,
            seq=request.seq,
            at=request.at,
            payload=request.payload,
            prev_hash=prev,
            entry_hash=hashlib.sha256(body).digest(),
        )
        self.entries.append(entry)
        self._by_key[key] = index
        if request.kind is LedgerKind.ADMIN_CHANGE:
            assert isinstance(request.payload, AdminChangePayload)
            if request.payload.action is AdminAction.GRANT:
                self.policy.authorized_writers.add(request.payload.key)
            else:
                self.policy.authorized_writers.discard(request.payload.key)
        if self._path is not None:
            record = body + entry.entry_hash
            if self._cipher is not None:
                record = self._cipher.encrypt(record)
            with open(self._path, "ab") as f:
                f.write(struct.pack(">I", len(record)) + record)
        return entry

    def submit_reading_batch(
        self,
        readings: list[Reading],
        credential: str,
        seq: int,
        at: Timestamp | None = None,
        now: Timestamp | None = None,
    ) -> LedgerEntry:
        request = build_batch_request(readings, seq, at, batch_limit=self.batch_limit)
        return self.submit(request, credential, now=now)

    def verify_chain(self) -> ChainReport:
        return verify_entries(self.entries)

    def cost_report(self, day: Timestamp) -> CostTally:
        return cost_report(self.entries, day, self.gas)


def build_batch_request(
    readings: list[Reading],
    seq: int,
    at: Timestamp | None = None,
    batch_limit: int = DEFAULT_BATCH_LIMIT,
) -> EntryRequest:
    if not readings:
        raise MalformedPayload("batch must be non-empty")
    if len(readings) > batch_limit:
        raise BatchTooLarge(f"batch of {len(readings)} exceeds limit {batch_limit}")
    device = readings[0].device_id
    if any(r.device_id != device for r in readings):
        raise MalformedPayload("batch must contain a single device")
    if any(b.at < a.at for a, b in zip(readings, readings[1:])):
        raise MalformedPayload("batch readings must be timestamp-ordered")
    return EntryRequest(
        kind=LedgerKind.READING_BATCH,
        device_id=device,
        seq=seq,
        at=readings[-1].at if at is None else at,
        payload=ReadingBatchPayload(readings=tuple(readings)),
    )


# -- file format ---------------------------------------------------------------


def load_ledger_entries(path: Path, cipher: AtRestCipher | None = None) -> list[LedgerEntry]:
    """Strict parse of the append-only ledger file. Any framing anomaly is
    a LedgerFileError; whole-entry truncation at the tail still parses
    (detectable only via external anchors)."""
    data = Path(path).read_bytes()
    if len(data) < 5 or data[:4] != LEDGER_MAGIC:
        raise LedgerFileError("bad magic header")
    if data[4] != LEDGER_VERSION:
        raise LedgerFileError(f"unsupported version {data[4]}")
    pos = 5
    entries: list[LedgerEntry] = []
    while pos < len(data):
        if pos + 4 > len(data):
            raise LedgerFileError(f"torn length prefix at offset {pos}")
        (n,) = struct.unpack(">I", data[pos : pos + 4])
        pos += 4
        if n == 0 or pos + n > len(data):
            raise LedgerFileError(f"torn record at offset {pos - 4}")
        record = data[pos : pos + n]
        pos += n
        if cipher is not None:
            try:
                record = cipher.decrypt(record)
            except Exception as exc:
                raise LedgerFileError(f"undecryptable record at entry {len(entries)}") from exc
        if len(record) < 33:
            raise LedgerFileError(f"record too short at entry {len(entries)}")
        body, digest = record[:-32], record[-32:]
        try:
            entries.append(_decode_entry(body, digest))
        except (LedgerError, ValueError, UnicodeDecodeError) as exc:
            # Includes domain-validation failures: a flipped bit that pushes a
            # stored reading outside the sensor envelope is still tampering.
            raise LedgerFileError(f"undecodable entry {len(entries)}: {exc}") from exc
    return entries
