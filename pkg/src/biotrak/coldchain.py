"""Temperature logger dumps, compliance evaluation, and on-chain sealing.

Dump format (bit-exact CSV profile standing in for vendor NFC exports):
header line ``biotrak-sensor,v1,<sensor_id>``, then one ``<unix_ts>,<temp_c>``
line per sample with the temperature as a decimal string with exactly one
fractional digit.  LF line endings, UTF-8, no trailing blank line.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from decimal import Decimal

from .errors import (
    InvariantError,
    MalformedHeader,
    MalformedSample,
    NonMonotonicTimestamps,
    OutOfBoundsTemperature,
    SerializationError,
    SeriesTooLarge,
)

TEMP_MIN = Decimal("-100.0")
TEMP_MAX = Decimal("150.0")
SERIES_VERSION = 0x01
MAX_SERIES_BYTES = 1 << 20

_HEADER_RE = re.compile(r"^biotrak-sensor,v1,([A-Z0-9.\-]{1,64})$")
_SAMPLE_RE = re.compile(r"^(0|[1-9][0-9]*),(-?(?:0|[1-9][0-9]*)\.[0-9])$")


def _to_tenths(temp: Decimal) -> int:
    tenths = temp * 10
    if tenths != int(tenths):
        raise InvariantError(f"temperature {temp} is not a 0.1-degree value")
    return int(tenths)


def _tenths_to_text(tenths: int) -> str:
    sign = "-" if tenths < 0 else ""
    mag = abs(tenths)
    return f"{sign}{mag // 10}.{mag % 10}"


def format_temp(temp: Decimal) -> str:
    """Dump-style text: one fractional digit, e.g. ``-18.5``."""
    return _tenths_to_text(_to_tenths(temp))


@dataclass(frozen=True)
class SensorSeries:
    sensor_id: str
    samples: tuple  # of (unix_ts, Decimal temperature)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple((int(t), Decimal(v)) for t, v in self.samples))
        if not _HEADER_RE.match(f"biotrak-sensor,v1,{self.sensor_id}"):
            raise InvariantError(f"bad sensor id {self.sensor_id!r}")
        if not self.samples:
            raise InvariantError("a sensor series needs at least one sample")
        prev = None
        for ts, temp in self.samples:
            if ts < 0:
                raise InvariantError("negative sample timestamp")
            if prev is not None and ts <= prev:
                raise InvariantError("sample timestamps must be strictly increasing")
            prev = ts
            if not TEMP_MIN <= temp <= TEMP_MAX:
                raise InvariantError(f"temperature {temp} outside physical bounds")
            _to_tenths(temp)


@dataclass(frozen=True)
class ColdChainPolicy:
    min_temp: Decimal
    max_temp: Decimal
    max_excursion_seconds: int

    def __post_init__(self):
        object.__setattr__(self, "min_temp", Decimal(self.min_temp))
        object.__setattr__(self, "max_temp", Decimal(self.max_temp))
        if self.min_temp >= self.max_temp:
            raise InvariantError("policy requires min_temp < max_temp")
        if self.max_excursion_seconds < 0:
            raise InvariantError("max_excursion_seconds must be nonnegative")

    def in_range(self, temp: Decimal) -> bool:
        return self.min_temp <= temp <= self.max_temp


@dataclass(frozen=True)
class Violation:
    start_ts: int
    end_ts: int
    extreme_temp: Decimal

    @property
    def duration(self) -> int:
        return self.end_ts - self.start_ts


@dataclass(frozen=True)
class ComplianceReport:
    compliant: bool
    violations: tuple
    total_excursion_seconds: int


def parse_sensor_dump(data: bytes) -> SensorSeries:
    """Parse and validate a dump; errors carry the offending line number."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedHeader("dump is not valid UTF-8", offset=exc.start)
    if text.endswith("\n"):
        raise MalformedSample(
            "trailing blank line", line=text.count("\n") + 1
        )
    lines = text.split("\n")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise MalformedHeader(f"bad header line {lines[0]!r}", line=1)
    sensor_id = m.group(1)
    if len(lines) < 2:
        raise MalformedSample("expected at least one sample line", line=2)
    samples = []
    prev_ts = None
    for lineno, line in enumerate(lines[1:], start=2):
        sm = _SAMPLE_RE.match(line)
        if sm is None:
            raise MalformedSample(f"bad sample line {line!r}", line=lineno)
        ts = int(sm.group(1))
        temp_text = sm.group(2)
        temp = Decimal(temp_text)
        if temp_text.startswith("-") and temp == 0:
            raise MalformedSample("negative zero temperature", line=lineno)
        if prev_ts is not None and ts <= prev_ts:
            raise NonMonotonicTimestamps(
                f"timestamp {ts} not after {prev_ts}", line=lineno
            )
        prev_ts = ts
        if not TEMP_MIN <= temp <= TEMP_MAX:
            raise OutOfBoundsTemperature(f"temperature {temp} out of bounds", line=lineno)
        samples.append((ts, temp))
    return SensorSeries(sensor_id=sensor_id, samples=tuple(samples))


def emit_sensor_dump(series: SensorSeries) -> bytes:
    lines = [f"biotrak-sensor,v1,{series.sensor_id}"]
    for ts, temp in series.samples:
        lines.append(f"{ts},{_tenths_to_text(_to_tenths(temp))}")
    return "\n".join(lines).encode("utf-8")


def evaluate_compliance(series: SensorSeries, policy: ColdChainPolicy) -> ComplianceReport:
    """Report maximal contiguous out-of-range runs.

    Interval durations span the first to the last out-of-range sample
    timestamp; single-sample excursions have duration zero.  Compliance
    breaks only when a violation lasts strictly longer than the tolerated
    excursion.
    """
    violations = []
    run: list | None = None

    def deviation(temp: Decimal) -> Decimal:
        if temp < policy.min_temp:
            return policy.min_temp - temp
        return temp - policy.max_temp

    def close(r) -> None:
        extreme = max(r, key=lambda s: deviation(s[1]))
        violations.append(
            Violation(start_ts=r[0][0], end_ts=r[-1][0], extreme_temp=extreme[1])
        )

    for ts, temp in series.samples:
        if policy.in_range(temp):
            if run:
                close(run)
                run = None
        else:
            run = run or []
            run.append((ts, temp))
    if run:
        close(run)

    total = sum(v.duration for v in violations)
    compliant = all(v.duration <= policy.max_excursion_seconds for v in violations)
    return ComplianceReport(
        compliant=compliant, violations=tuple(violations), total_excursion_seconds=total
    )


def seal_series_for_chain(series: SensorSeries) -> tuple:
    """Canonical bytes for the transaction payload plus their digest."""
    out = [SERIES_VERSION.to_bytes(1, "big")]
    sid = series.sensor_id.encode("utf-8")
    out.append(len(sid).to_bytes(4, "big"))
    out.append(sid)
    out.append(len(series.samples).to_bytes(4, "big"))
    for ts, temp in series.samples:
        out.append(ts.to_bytes(8, "big"))
        out.append(_to_tenths(temp).to_bytes(2, "big", signed=True))
    blob = b"".join(out)
    if len(blob) > MAX_SERIES_BYTES:
        raise SeriesTooLarge(
            f"canonical series is {len(blob)} bytes, cap is {MAX_SERIES_BYTES}"
        )
    return hashlib.sha256(blob).digest(), blob


def decode_series(blob: bytes) -> SensorSeries:
    """Inverse of seal_series_for_chain for serving stored payloads."""
    if len(blob) > MAX_SERIES_BYTES:
        raise SeriesTooLarge("stored series exceeds the 1 MiB cap")
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise SerializationError("truncated sensor payload", offset=pos)
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    if take(1)[0] != SERIES_VERSION:
        raise SerializationError("unsupported sensor payload version")
    sid = take(int.from_bytes(take(4), "big")).decode("utf-8")
    count = int.from_bytes(take(4), "big")
    samples = []
    for _ in range(count):
        ts = int.from_bytes(take(8), "big")
        tenths = int.from_bytes(take(2), "big", signed=True)
        samples.append((ts, Decimal(_tenths_to_text(tenths))))
    if pos != len(blob):
        raise SerializationError("trailing bytes after sensor payload", offset=pos)
    try:
        return SensorSeries(sensor_id=sid, samples=tuple(samples))
    except InvariantError as exc:
        raise SerializationError(f"stored series invalid: {exc}")
