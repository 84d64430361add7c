"""Append-only, hash-chained store of release records, plus accounts/fees.

Every answered query — including ones served verbatim from history — adds
exactly one record, so the file is a complete audit trail. Each record
carries the SHA-256 of its predecessor; flipping any byte of any persisted
record breaks either its own hash or the link to its neighbor, and
``verify`` reports the first index where that happens.

Hashing runs over a canonical binary encoding (fixed field order,
length-prefixed UTF-8 strings, IEEE-754 big-endian doubles, big-endian
64-bit integers, one presence byte per optional field) so the digest is
stable across platforms and independent of the on-disk text format.

On disk the ledger is one UTF-8 JSON object per line, fixed key order,
full double precision, digests as lowercase hex. The file is the source of
truth on restart. A trailing chunk without a final newline is an append
that never committed; readers ignore it (prefix-consistent view) and
recovery may truncate it when the commit journal vouches for it.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import secrets
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

from .queries import QueryDescriptor, canonical_bytes, canonical_key
from .reuse import ReuseKind

GENESIS_PREV_HASH = bytes(32)

HASH_HEX_LEN = 64


class LedgerCorruptError(Exception):
    """The persisted chain failed validation at ``first_bad_index``."""

    def __init__(self, first_bad_index: int, detail: str = ""):
        self.first_bad_index = first_bad_index
        msg = f"ledger broken at record {first_bad_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class UnknownAccountError(LookupError):
    def __init__(self, account_id: str):
        self.account_id = account_id
        super().__init__(f"unknown account {account_id!r}")


class InsufficientFundsError(Exception):
    def __init__(self, account_id: str, balance: float, fee: float):
        self.account_id = account_id
        self.balance = balance
        self.fee = fee
        super().__init__(
            f"account {account_id} has {balance} credits, needs {fee}"
        )


@dataclass(frozen=True)
class ReleaseRecord:
    """One ledger entry. All fields except ``record_hash`` are hashed."""

    index: int
    query_id: str
    query_key: bytes
    descriptor: QueryDescriptor
    sigma: float
    noisy_answer: float
    reuse_kind: str
    base_record_index: int | None
    requested_epsilon: float
    requested_delta: float
    charged_epsilon: float
    charged_delta: float
    fee: float
    account_id: str
    timestamp_ms: int
    prev_hash: bytes
    record_hash: bytes

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"index must be non-negative, got {self.index}")
        for name in ("query_key", "prev_hash", "record_hash"):
            v = getattr(self, name)
            if not isinstance(v, bytes) or len(v) != 32:
                raise ValueError(f"{name} must be 32 bytes")
        ReuseKind(self.reuse_kind)
        if self.fee < 0:
            raise ValueError(f"fee must be non-negative, got {self.fee}")
        for name in ("sigma", "noisy_answer", "requested_epsilon", "requested_delta",
                     "charged_epsilon", "charged_delta", "fee"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def _enc_bytes(b: bytes) -> bytes:
    return struct.pack(">I", len(b)) + b


def _enc_opt_i64(v: int | None) -> bytes:
    return b"\x00" if v is None else b"\x01" + struct.pack(">q", v)


def encode_for_hash(rec: ReleaseRecord) -> bytes:
    """Canonical binary form of every field except the record hash.

    Doubles and digests are fixed width, so the encoded size does not
    depend on their values; fees can be priced before the answer exists.
    """
    return b"".join(
        (
            struct.pack(">q", rec.index),
            _enc_str(rec.query_id),
            rec.query_key,
            _enc_bytes(canonical_bytes(rec.descriptor)),
            struct.pack(">d", rec.sigma),
            struct.pack(">d", rec.noisy_answer),
            _enc_str(rec.reuse_kind),
            _enc_opt_i64(rec.base_record_index),
            struct.pack(">d", rec.requested_epsilon),
            struct.pack(">d", rec.requested_delta),
            struct.pack(">d", rec.charged_epsilon),
            struct.pack(">d", rec.charged_delta),
            struct.pack(">d", rec.fee),
            _enc_str(rec.account_id),
            struct.pack(">q", rec.timestamp_ms),
            rec.prev_hash,
        )
    )


def compute_record_hash(rec: ReleaseRecord) -> bytes:
    return hashlib.sha256(encode_for_hash(rec)).digest()


def make_record(**fields: Any) -> ReleaseRecord:
    """Build a record, filling in its own hash (any passed hash is ignored)."""
    fields.pop("record_hash", None)
    rec = ReleaseRecord(record_hash=bytes(32), **fields)
    return ReleaseRecord(**{**rec.__dict__, "record_hash": compute_record_hash(rec)})


_JSON_FIELDS = (
    "index", "query_id", "query_key", "descriptor", "sigma", "noisy_answer",
    "reuse_kind", "base_record_index", "requested_epsilon", "requested_delta",
    "charged_epsilon", "charged_delta", "fee", "account_id", "timestamp_ms",
    "prev_hash", "record_hash",
)


def record_to_dict(rec: ReleaseRecord) -> dict[str, Any]:
    """Wire/persistence form: fixed key order, digests as lowercase hex."""
    return {
        "index": rec.index,
        "query_id": rec.query_id,
        "query_key": rec.query_key.hex(),
        "descriptor": rec.descriptor.to_dict(),
        "sigma": rec.sigma,
        "noisy_answer": rec.noisy_answer,
        "reuse_kind": rec.reuse_kind,
        "base_record_index": rec.base_record_index,
        "requested_epsilon": rec.requested_epsilon,
        "requested_delta": rec.requested_delta,
        "charged_epsilon": rec.charged_epsilon,
        "charged_delta": rec.charged_delta,
        "fee": rec.fee,
        "account_id": rec.account_id,
        "timestamp_ms": rec.timestamp_ms,
        "prev_hash": rec.prev_hash.hex(),
        "record_hash": rec.record_hash.hex(),
    }


def record_to_line(rec: ReleaseRecord) -> str:
    """Serialize to the on-disk JSON line (no trailing newline)."""
    return json.dumps(record_to_dict(rec), separators=(",", ":"))


def record_from_line(line: str) -> ReleaseRecord:
    """Parse one on-disk line; raises ValueError on any malformation."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValueError(f"unparseable record line: {e}") from e
    if not isinstance(obj, dict) or set(obj) != set(_JSON_FIELDS):
        raise ValueError("record line has wrong field set")
    base = obj["base_record_index"]
    return ReleaseRecord(
        index=int(obj["index"]),
        query_id=str(obj["query_id"]),
        query_key=bytes.fromhex(obj["query_key"]),
        descriptor=QueryDescriptor.from_dict(obj["descriptor"]),
        sigma=float(obj["sigma"]),
        noisy_answer=float(obj["noisy_answer"]),
        reuse_kind=str(obj["reuse_kind"]),
        base_record_index=None if base is None else int(base),
        requested_epsilon=float(obj["requested_epsilon"]),
        requested_delta=float(obj["requested_delta"]),
        charged_epsilon=float(obj["charged_epsilon"]),
        charged_delta=float(obj["charged_delta"]),
        fee=float(obj["fee"]),
        account_id=str(obj["account_id"]),
        timestamp_ms=int(obj["timestamp_ms"]),
        prev_hash=bytes.fromhex(obj["prev_hash"]),
        record_hash=bytes.fromhex(obj["record_hash"]),
    )


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    first_bad_index: int | None = None

    @classmethod
    def good(cls) -> VerifyResult:
        return cls(ok=True)

    @classmethod
    def broken(cls, index: int) -> VerifyResult:
        return cls(ok=False, first_bad_index=index)


def _split_complete_lines(blob: bytes) -> tuple[list[bytes], bytes | None]:
    """Split into newline-terminated lines plus any torn trailing chunk."""
    if not blob:
        return [], None
    parts = blob.split(b"\n")
    if parts[-1] == b"":
        return parts[:-1], None
    return parts[:-1], parts[-1]


def _validate_chain(lines: Iterable[bytes]) -> tuple[list[ReleaseRecord], int | None, str]:
    """Parse and check lines in order; stop at the first bad record.

    Returns (good_records, first_bad_index, detail); first_bad_index is
    None when every line checks out.
    """
    records: list[ReleaseRecord] = []
    prev = GENESIS_PREV_HASH
    for i, raw in enumerate(lines):
        try:
            rec = record_from_line(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as e:
            return records, i, str(e)
        # Byte-level canonicality: a stored line must be exactly the
        # serialization of what it parses to, so any single-byte edit is
        # caught even if it would survive a parse round-trip.
        if record_to_line(rec).encode("utf-8") != raw:
            return records, i, "non-canonical record serialization"
        if rec.index != i:
            return records, i, f"index {rec.index} at position {i}"
        if rec.prev_hash != prev:
            return records, i, "previous-hash link mismatch"
        if compute_record_hash(rec) != rec.record_hash:
            return records, i, "record hash mismatch"
        if canonical_key(rec.descriptor) != rec.query_key:
            return records, i, "query key does not match descriptor"
        records.append(rec)
        prev = rec.record_hash
    return records, None, ""


def verify_file(path: str | Path) -> VerifyResult:
    """Recompute every hash and link in the persisted chain.

    A trailing chunk with no final newline is an in-flight append and is
    ignored: readers see a prefix-consistent chain.
    """
    blob = Path(path).read_bytes()
    lines, _torn = _split_complete_lines(blob)
    _, bad, _ = _validate_chain(lines)
    return VerifyResult.good() if bad is None else VerifyResult.broken(bad)


def read_records(path: str | Path) -> list[ReleaseRecord]:
    """Strictly load a chain for offline processing; raises if broken."""
    blob = Path(path).read_bytes()
    lines, torn = _split_complete_lines(blob)
    records, bad, detail = _validate_chain(lines)
    if bad is not None:
        raise LedgerCorruptError(bad, detail)
    if torn is not None:
        raise LedgerCorruptError(len(records), "torn trailing record")
    return records


class Ledger:
    """Single-writer append-only chain bound to one file.

    The caller (the query service) serializes appends; readers may verify
    concurrently against the file and will see a clean prefix.
    """

    def __init__(self, path: str | Path, records: list[ReleaseRecord]):
        self.path = Path(path)
        self._records = records
        self._fh = open(self.path, "ab")

    @classmethod
    def open(
        cls, path: str | Path, truncate_torn_tail_at: int | None = None
    ) -> Ledger:
        """Load the chain, validating every record.

        A torn trailing chunk is truncated away only when
        ``truncate_torn_tail_at`` names exactly the position it occupies
        (i.e. the commit journal recorded that append as pending);
        otherwise it is corruption and raises.
        """
        path = Path(path)
        path.touch(exist_ok=True)
        blob = path.read_bytes()
        lines, torn = _split_complete_lines(blob)
        records, bad, detail = _validate_chain(lines)
        if bad is not None:
            raise LedgerCorruptError(bad, detail)
        if torn is not None:
            # A chunk with no final newline can only be an append that
            # crashed mid-write; anything else is corruption.
            if truncate_torn_tail_at != len(records):
                raise LedgerCorruptError(
                    len(records), "torn trailing record with no pending journal entry"
                )
            offset = sum(len(l) + 1 for l in lines)
            with open(path, "r+b") as fh:
                fh.truncate(offset)
                fh.flush()
                os.fsync(fh.fileno())
        return cls(path, records)

    def __len__(self) -> int:
        return len(self._records)

    @property
    def tip_hash(self) -> bytes:
        return self._records[-1].record_hash if self._records else GENESIS_PREV_HASH

    @property
    def next_index(self) -> int:
        return len(self._records)

    def records(self) -> list[ReleaseRecord]:
        return list(self._records)

    def record(self, index: int) -> ReleaseRecord:
        return self._records[index]

    def history(self, query_key: bytes) -> list[ReleaseRecord]:
        """All records for one query key, in append order."""
        return [r for r in self._records if r.query_key == query_key]

    def append(
        self, rec: ReleaseRecord, failpoint: Callable[[str], None] | None = None
    ) -> tuple[int, bytes]:
        """Durably persist one record; returns (index, record_hash).

        The record must already continue the chain (index, prev hash, own
        hash). The write is flushed and fsynced before returning: once this
        method returns, the record survives a crash.
        """
        if rec.index != self.next_index:
            raise ValueError(f"expected index {self.next_index}, got {rec.index}")
        if rec.prev_hash != self.tip_hash:
            raise ValueError("record does not link to the current tip")
        if compute_record_hash(rec) != rec.record_hash:
            raise ValueError("record hash does not match its contents")
        data = (record_to_line(rec) + "\n").encode("utf-8")
        half = len(data) // 2
        self._fh.write(data[:half])
        if failpoint is not None:
            self._fh.flush()
            failpoint("append-partial")
        self._fh.write(data[half:])
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._records.append(rec)
        return rec.index, rec.record_hash

    def verify(self) -> VerifyResult:
        """Re-read the file from disk and check the whole chain."""
        return verify_file(self.path)

    def close(self) -> None:
        self._fh.close()


# --- accounts and fees ------------------------------------------------------


@dataclass(frozen=True)
class FeeSchedule:
    """Flat-plus-linear append fee, in synthetic credits."""

    base_fee: float = 0.001
    per_byte_fee: float = 1e-6

    def __post_init__(self) -> None:
        if self.base_fee < 0 or self.per_byte_fee < 0:
            raise ValueError("fees must be non-negative")

    def price_of(self, record_size_bytes: int) -> float:
        if record_size_bytes < 0:
            raise ValueError(f"size must be non-negative, got {record_size_bytes}")
        return self.base_fee + self.per_byte_fee * record_size_bytes


def new_account_id() -> str:
    """Random 20-byte wallet-style address, hex with 0x prefix."""
    return "0x" + secrets.token_hex(20)


def atomic_write_json(path: str | Path, obj: Any) -> None:
    """Write JSON durably: temp file, fsync, rename over the target."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class AccountStore:
    """Balances keyed by account id, persisted as one small JSON file.

    Mutations are in-memory; the owner calls :meth:`save` at the point its
    write-ahead protocol dictates. Debits never drive a balance negative.
    """

    def __init__(self, path: str | Path, balances: dict[str, float]):
        self.path = Path(path)
        self._balances = dict(balances)

    @classmethod
    def load(cls, path: str | Path, initial: dict[str, float]) -> AccountStore:
        """Load the persisted store, falling back to ``initial`` balances."""
        path = Path(path)
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            return cls(path, {str(k): float(v) for k, v in data["balances"].items()})
        return cls(path, initial)

    def account_ids(self) -> list[str]:
        return list(self._balances)

    def balance(self, account_id: str) -> float:
        try:
            return self._balances[account_id]
        except KeyError:
            raise UnknownAccountError(account_id) from None

    def check_debit(self, account_id: str, fee: float) -> None:
        """Raise as debit would, without changing anything."""
        balance = self.balance(account_id)
        if fee > balance:
            raise InsufficientFundsError(account_id, balance, fee)

    def debit(self, account_id: str, fee: float) -> float:
        self.check_debit(account_id, fee)
        self._balances[account_id] -= fee
        return self._balances[account_id]

    def credit(self, account_id: str, amount: float) -> float:
        self.balance(account_id)
        self._balances[account_id] += amount
        return self._balances[account_id]

    def balances(self) -> dict[str, float]:
        return dict(self._balances)

    def replace_all(self, balances: dict[str, float]) -> None:
        self._balances = dict(balances)

    def save(self) -> None:
        atomic_write_json(self.path, {"balances": self._balances})
