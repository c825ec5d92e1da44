"""CDR ingestion: parse, validate, pseudonymize, partition.

The raw operator export is a 4-column CSV
(``user_id,timestamp,tower_id,event_type``).  Parsing never drops a row
silently: every malformed row is counted in a :class:`RejectReport` under
the first check it fails.  Raw subscriber identifiers exist only inside
:func:`pseudonymize`; everything downstream sees keyed-hash tokens.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np
import pandas as pd

from .config import EVENT_KINDS
from .errors import BadFileError, EmptyUserError, MissingSaltError

SALT_ENV_VAR = "PLASMOFLOW_SALT"

CDR_HEADER = ["user_id", "timestamp", "tower_id", "event_type"]
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

# Reject reasons, in the order the checks run; a row counts under the first
# check it fails.
REJECT_REASONS = (
    "bad_row",
    "empty_user",
    "bad_timestamp",
    "unknown_tower",
    "bad_event",
    "out_of_window",
)


class CdrRecord(NamedTuple):
    user: str               # pseudonymous token
    timestamp: dt.datetime  # UTC, second precision, tz-naive
    tower: str
    event: str


@dataclass
class RejectReport:
    input_rows: int = 0
    accepted: int = 0
    reasons: dict = field(default_factory=lambda: {r: 0 for r in REJECT_REASONS})

    @property
    def rejected(self) -> int:
        return sum(self.reasons.values())

    def __add__(self, other: "RejectReport") -> "RejectReport":
        merged = RejectReport(
            input_rows=self.input_rows + other.input_rows,
            accepted=self.accepted + other.accepted,
        )
        for r in REJECT_REASONS:
            merged.reasons[r] = self.reasons[r] + other.reasons[r]
        return merged


def require_salt() -> bytes:
    """Read the pipeline salt from the environment; abort if unset."""
    value = os.environ.get(SALT_ENV_VAR, "")
    if not value:
        raise MissingSaltError(f"{SALT_ENV_VAR} must be set to a nonempty secret")
    return value.encode("utf-8")


def pseudonymize(raw: str, salt: bytes) -> str:
    """Deterministic keyed one-way mapping from a raw subscriber id.

    Same (raw, salt) always yields the same token; without the salt the
    token reveals nothing about the raw id.
    """
    if not raw:
        raise EmptyUserError("raw user key is empty")
    if not salt:
        raise MissingSaltError("salt must be nonempty")
    return hashlib.blake2b(raw.encode("utf-8"), key=salt, digest_size=16).hexdigest()


def load_tower_registry(path: str | Path) -> pd.DataFrame:
    """Load the ``tower_id,lat,lon`` registry, validating coordinates."""
    try:
        df = pd.read_csv(path, dtype={"tower_id": str})
    except OSError as exc:
        raise BadFileError(f"cannot read tower registry: {exc}") from exc
    if list(df.columns) != ["tower_id", "lat", "lon"]:
        raise BadFileError(f"tower registry header must be tower_id,lat,lon, got {list(df.columns)}")
    if df["tower_id"].duplicated().any():
        dupes = df.loc[df["tower_id"].duplicated(), "tower_id"].tolist()
        raise BadFileError(f"duplicate tower ids in registry: {dupes[:5]}")
    if not ((df["lat"].between(-90, 90)) & (df["lon"].between(-180, 180))).all():
        raise BadFileError("tower coordinates out of range")
    return df.reset_index(drop=True)


def parse_cdr_table(
    path: str | Path,
    registry: pd.DataFrame,
    salt: bytes,
    window: tuple[dt.date, dt.date] | None = None,
    tz_offset_hours: float = 0.0,
) -> tuple[pd.DataFrame, RejectReport]:
    """Parse one CDR file into a validated, pseudonymized event table.

    Returns ``(events, report)`` where ``events`` has columns
    ``user`` (token), ``ts`` (datetime64[ns], UTC, tz-naive), ``tower``,
    ``event``.  ``window``, when given, is an inclusive local-date range;
    rows outside it are rejected as ``out_of_window`` using
    ``tz_offset_hours`` for the UTC-to-local conversion.
    """
    if not salt:
        raise MissingSaltError("salt must be nonempty")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise BadFileError(f"cannot read CDR file {path}: {exc}") from exc

    report = RejectReport()
    lines = text.splitlines()
    if not lines:
        return _empty_events(), report
    header = lines[0].split(",")
    if header != CDR_HEADER:
        raise BadFileError(f"CDR header must be {','.join(CDR_HEADER)}, got {lines[0]!r} in {path}")

    rows = [line.split(",") for line in lines[1:] if line]
    report.input_rows = len(rows)
    if not rows:
        return _empty_events(), report

    good = [r for r in rows if len(r) == 4]
    report.reasons["bad_row"] = len(rows) - len(good)
    if not good:
        return _empty_events(), report

    users = np.array([r[0] for r in good], dtype=object)
    ts_raw = pd.Series([r[1] for r in good], dtype=object)
    towers = np.array([r[2] for r in good], dtype=object)
    events = np.array([r[3] for r in good], dtype=object)

    ok = np.ones(len(good), dtype=bool)

    empty_user = users == ""
    report.reasons["empty_user"] = int(empty_user.sum())
    ok &= ~empty_user

    ts = pd.to_datetime(ts_raw, format=TIMESTAMP_FORMAT, errors="coerce", utc=True)
    ts = ts.dt.tz_localize(None)  # internal convention: tz-naive UTC
    bad_ts = ts.isna().to_numpy() & ok
    report.reasons["bad_timestamp"] = int(bad_ts.sum())
    ok &= ~bad_ts

    known = set(registry["tower_id"])
    unknown_tower = ~pd.Series(towers).isin(known).to_numpy() & ok
    report.reasons["unknown_tower"] = int(unknown_tower.sum())
    ok &= ~unknown_tower

    bad_event = ~pd.Series(events).isin(EVENT_KINDS).to_numpy() & ok
    report.reasons["bad_event"] = int(bad_event.sum())
    ok &= ~bad_event

    if window is not None:
        local_day = (ts + pd.Timedelta(hours=tz_offset_hours)).dt.date
        in_window = pd.Series(
            [(window[0] <= d <= window[1]) if isinstance(d, dt.date) else False for d in local_day]
        ).to_numpy()
        out = ~in_window & ok
        report.reasons["out_of_window"] = int(out.sum())
        ok &= ~out

    report.accepted = int(ok.sum())
    accepted_users = users[ok]
    codes, uniques = pd.factorize(accepted_users)
    tokens = np.array([pseudonymize(u, salt) for u in uniques], dtype=object)
    frame = pd.DataFrame(
        {
            "user": tokens[codes] if len(codes) else np.array([], dtype=object),
            "ts": ts.to_numpy()[ok],
            "tower": towers[ok],
            "event": events[ok],
        }
    )
    return frame, report


def _empty_events() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "user": pd.Series(dtype=object),
            "ts": pd.Series(dtype="datetime64[ns]"),
            "tower": pd.Series(dtype=object),
            "event": pd.Series(dtype=object),
        }
    )


def parse_cdr_file(
    path: str | Path,
    registry: pd.DataFrame,
    salt: bytes,
    window: tuple[dt.date, dt.date] | None = None,
    tz_offset_hours: float = 0.0,
) -> tuple[Iterator[CdrRecord], RejectReport]:
    """Record-stream view of :func:`parse_cdr_table`."""
    frame, report = parse_cdr_table(path, registry, salt, window, tz_offset_hours)

    def _records() -> Iterator[CdrRecord]:
        for user, ts, tower, event in zip(
            frame["user"], frame["ts"], frame["tower"], frame["event"]
        ):
            yield CdrRecord(user, ts.to_pydatetime(), tower, event)

    return _records(), report


def shard_of(user: str, shards: int) -> int:
    """Shard index for a user token; a pure function of (user, shards)."""
    return zlib.crc32(user.encode("utf-8")) % shards


def partition_by_user(records: Iterable[CdrRecord], shards: int) -> list[list[CdrRecord]]:
    """Split records into per-shard lists; all of a user's records land in one shard."""
    if shards < 1:
        raise ValueError("shards must be >= 1")
    out: list[list[CdrRecord]] = [[] for _ in range(shards)]
    for rec in records:
        out[shard_of(rec.user, shards)].append(rec)
    return out


def partition_table_by_user(events: pd.DataFrame, shards: int) -> list[pd.DataFrame]:
    """Frame-level partition used by the pipeline; same sharding function."""
    if shards < 1:
        raise ValueError("shards must be >= 1")
    if shards == 1 or events.empty:
        return [events] + [_empty_events() for _ in range(shards - 1)]
    idx = np.fromiter(
        (shard_of(u, shards) for u in events["user"]), dtype=np.int64, count=len(events)
    )
    return [events[idx == s].reset_index(drop=True) for s in range(shards)]
