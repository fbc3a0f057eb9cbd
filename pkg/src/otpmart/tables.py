"""Column-typed CSV tables shared by the source files and the mart files.

Every persisted table is described by a :class:`TableSpec`: the file name,
the ordered header, the row dataclass and a kind per column that fixes how
a Python value is serialized. Both directories use the same conventions:
UTF-8, comma separated, exact header on the first row, ``\\n`` line endings,
empty string for an absent optional value.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

SECONDS_PER_DAY = 86400

_TS_RE = re.compile(r"(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})Z\Z")


class TableFormatError(ValueError):
    """A CSV file could not be parsed. ``problems`` holds ``file:line: msg`` strings."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("\n".join(problems))


def parse_timestamp(text: str) -> datetime:
    m = _TS_RE.match(text)
    if m is None:
        raise ValueError(f"malformed timestamp {text!r}")
    try:
        return datetime(*map(int, m.groups()), tzinfo=timezone.utc)
    except ValueError as exc:
        raise ValueError(f"malformed timestamp {text!r}: {exc}") from None


def format_timestamp(ts: datetime) -> str:
    return (
        f"{ts.year:04d}-{ts.month:02d}-{ts.day:02d}"
        f"T{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d}Z"
    )


def seconds_between(later: datetime, earlier: datetime) -> int:
    """Signed whole seconds from ``earlier`` to ``later``."""
    delta = later - earlier
    return delta.days * SECONDS_PER_DAY + delta.seconds


def date_key(day: date) -> int:
    """YYYYMMDD integer key of a calendar date."""
    return day.year * 10000 + day.month * 100 + day.day


def time_key(ts: datetime | None) -> int:
    """Time-dimension key for a timestamp; 0 for an absent one."""
    if ts is None:
        return 0
    return ts.year * 10000 + ts.month * 100 + ts.day


def format_days(seconds: int) -> str:
    return f"{seconds / SECONDS_PER_DAY:.6f}"


def parse_days(text: str) -> int:
    # 6 decimals of a day is < 0.09 s, so rounding recovers the exact second
    return round(float(text) * SECONDS_PER_DAY)


def _parse_int(text: str) -> int:
    if not re.fullmatch(r"-?\d+", text):
        raise ValueError(f"not an integer: {text!r}")
    return int(text)


def _parse_flag(text: str) -> bool:
    if text == "1":
        return True
    if text == "0":
        return False
    raise ValueError(f"not a 0/1 flag: {text!r}")


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    return lambda text: None if text == "" else parse(text)


def _fmt_optional(fmt: Callable[[Any], str]) -> Callable[[Any], str]:
    return lambda value: "" if value is None else fmt(value)


# kind -> (parse, format)
KINDS: dict[str, tuple[Callable[[str], Any], Callable[[Any], str]]] = {
    "str": (str, str),
    "opt_str": (_optional(str), _fmt_optional(str)),
    "int": (_parse_int, str),
    "opt_int": (_optional(_parse_int), _fmt_optional(str)),
    "bool": (_parse_flag, lambda v: "1" if v else "0"),
    "ts": (parse_timestamp, format_timestamp),
    "opt_ts": (_optional(parse_timestamp), _fmt_optional(format_timestamp)),
    "days": (_optional(parse_days), _fmt_optional(format_days)),
}


@dataclass(frozen=True)
class Column:
    header: str
    attr: str
    kind: str = "str"


@dataclass(frozen=True)
class TableSpec:
    filename: str
    row_type: type
    columns: tuple[Column, ...]
    sort_key: Callable[[Any], Any]

    @property
    def header(self) -> list[str]:
        return [c.header for c in self.columns]

    def column(self, header: str) -> Column:
        for c in self.columns:
            if c.header == header:
                return c
        raise KeyError(header)

    def format_row(self, row: Any) -> list[str]:
        return [KINDS[c.kind][1](getattr(row, c.attr)) for c in self.columns]

    def render(self, rows: Iterable[Any]) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for row in sorted(rows, key=self.sort_key):
            writer.writerow(self.format_row(row))
        return buf.getvalue()

    def write(self, rows: Iterable[Any], directory: Path) -> Path:
        path = Path(directory) / self.filename
        path.write_text(self.render(rows), encoding="utf-8", newline="")
        return path

    def read(self, directory: Path) -> list[tuple[int, Any]]:
        """Parse ``directory/filename`` into ``(line_number, row)`` pairs.

        Raises FileNotFoundError when the file is missing and TableFormatError
        listing every unparseable line otherwise.
        """
        path = Path(directory) / self.filename
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TableFormatError([f"{self.filename}:1: missing header row"]) from None
            if header != self.header:
                raise TableFormatError(
                    [f"{self.filename}:1: header {header} != expected {self.header}"]
                )
            rows: list[tuple[int, Any]] = []
            problems: list[str] = []
            for values in reader:
                line = reader.line_num
                if len(values) != len(self.columns):
                    problems.append(
                        f"{self.filename}:{line}: expected {len(self.columns)} fields, got {len(values)}"
                    )
                    continue
                kwargs = {}
                try:
                    for col, text in zip(self.columns, values):
                        kwargs[col.attr] = KINDS[col.kind][0](text)
                except ValueError as exc:
                    problems.append(f"{self.filename}:{line}: {col.header}: {exc}")
                    continue
                rows.append((line, self.row_type(**kwargs)))
        if problems:
            raise TableFormatError(problems)
        return rows
