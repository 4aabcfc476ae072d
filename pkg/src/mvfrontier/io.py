"""Reading Ken French style industry-portfolio CSV files.

The library files carry a text preamble followed by one or more blocks, each
introduced by a title line (e.g. ``Average Value Weighted Returns -- Monthly``)
and a header row of portfolio names.  Data rows are keyed by ``YYYYMM``
(monthly) or ``YYYY`` (annual) and hold percent returns; ``-99.99`` and
``-999`` mark missing values.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SENTINELS = (-99.99, -999.0)
_MONTHLY_KEY = re.compile(r"^\d{6}$")
_ANNUAL_KEY = re.compile(r"^\d{4}$")


class CsvFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ReturnsPanel:
    """Monthly decimal returns with ``YYYYMM`` integer date stamps."""

    dates: tuple
    asset_names: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.dates), len(self.asset_names)):
            raise ValueError(
                f"values shape {values.shape} does not match {len(self.dates)} dates x "
                f"{len(self.asset_names)} assets"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("panel contains missing or non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", tuple(int(d) for d in self.dates))
        object.__setattr__(self, "asset_names", tuple(self.asset_names))

    @property
    def n_periods(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, ReturnsPanel):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.asset_names == other.asset_names
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _split_row(line: str) -> list[str]:
    return [c.strip() for c in line.rstrip("\r\n").split(",")]


def _blocks(lines: list[str]):
    """Yield (title, header, rows, first_line_number) for each data block."""
    i = 0
    title = None
    while i < len(lines):
        cells = _split_row(lines[i])
        if cells and cells[0] == "" and len(cells) > 1 and any(cells[1:]):
            header = [c for c in cells[1:]]
            start = i + 1
            rows = []
            j = start
            while j < len(lines):
                row = _split_row(lines[j])
                if not row or row[0] == "" and not any(row[1:]):
                    break
                if not (_MONTHLY_KEY.match(row[0]) or _ANNUAL_KEY.match(row[0])):
                    if re.match(r"^\d+$", row[0]):
                        raise CsvFormatError(f"line {j + 1}: malformed date key {row[0]!r}")
                    break
                rows.append((j + 1, row))
                j += 1
            yield title, header, rows, start
            title = None
            i = j
            continue
        text = lines[i].strip()
        if text and not re.match(r"^\d", text):
            title = text
        i += 1


def parse_industry_csv(path, *, block: int | None = None, missing: str = "reject") -> ReturnsPanel:
    """Parse the monthly block of an industry-portfolio file into decimal returns.

    Parameters
    ----------
    path : str or Path
    block : int, optional
        Index among the monthly blocks.  By default the first monthly block is
        used; files with several untitled monthly blocks need an explicit index.
    missing : {"reject", "drop"}
        What to do with rows holding sentinel values.
    """
    if missing not in ("reject", "drop"):
        raise ValueError(f"missing must be 'reject' or 'drop', got {missing!r}")
    lines = Path(path).read_text(encoding="utf-8-sig", errors="replace").splitlines()
    monthly = [
        b for b in _blocks(lines)
        if b[2] and all(_MONTHLY_KEY.match(r[0]) for _, r in b[2])
    ]
    if not monthly:
        raise CsvFormatError(f"{path}: no monthly data block found")
    if block is None:
        if len(monthly) > 1 and all(b[0] is None for b in monthly):
            raise CsvFormatError(
                f"{path}: {len(monthly)} untitled monthly blocks; select one with block="
            )
        block = 0
    if not 0 <= block < len(monthly):
        raise CsvFormatError(f"{path}: block {block} out of range (found {len(monthly)})")
    _, header, rows, _ = monthly[block]
    n = len(header)
    dates, values = [], []
    for lineno, row in rows:
        year, month = int(row[0][:4]), int(row[0][4:])
        if not 1 <= month <= 12:
            raise CsvFormatError(f"line {lineno}: malformed date key {row[0]!r}")
        cells = row[1:]
        if len(cells) != n:
            raise CsvFormatError(
                f"line {lineno}: ragged row with {len(cells)} values, header has {n}"
            )
        try:
            nums = [float(c) for c in cells]
        except ValueError as exc:
            raise CsvFormatError(f"line {lineno}: {exc}") from exc
        bad = [k for k, v in enumerate(nums) if any(np.isclose(v, s) for s in SENTINELS)]
        if len(bad) == n:
            raise CsvFormatError(f"line {lineno}: every value is a missing-value sentinel")
        if bad:
            if missing == "reject":
                raise CsvFormatError(
                    f"line {lineno} ({row[0]}), column {header[bad[0]]!r}: missing-value "
                    f"sentinel {cells[bad[0]]}"
                )
            continue
        dates.append(year * 100 + month)
        values.append([v / 100.0 for v in nums])
    if not dates:
        raise CsvFormatError(f"{path}: monthly block has no usable rows")
    return ReturnsPanel(tuple(dates), tuple(header), np.array(values))


def _percent_text(v: float) -> str:
    """Shortest percent string that parses back to ``v`` after division by 100.

    Some doubles are not ``x / 100`` for any double ``x``; those are written as
    the nearest percent value and read back within one ulp.
    """
    x = v * 100.0
    for digits in range(1, 18):
        text = f"{x:.{digits}g}"
        if float(text) / 100.0 == v:
            return text
    for cand in (np.nextafter(x, np.inf), np.nextafter(x, -np.inf)):
        if float(cand) / 100.0 == v:
            return repr(float(cand))
    return repr(float(x))


def write_industry_csv(panel: ReturnsPanel, path, *, title: str = "Average Value Weighted Returns -- Monthly"):
    """Write ``panel`` in the library layout (percent units)."""
    out = [
        "Synthetic or converted industry portfolio returns.",
        "",
        f"  {title}",
        "," + ",".join(panel.asset_names),
    ]
    for d, row in zip(panel.dates, panel.values):
        out.append(f"{d}," + ",".join(_percent_text(v) for v in row))
    out.append("")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def select_window(panel: ReturnsPanel, window=120) -> ReturnsPanel:
    """Contiguous sub-panel.

    ``window`` is a trailing month count (``120`` or ``"120"``) or an inclusive
    ``"YYYYMM:YYYYMM"`` range.
    """
    if isinstance(window, str) and ":" in window:
        lo, hi = (int(p) for p in window.split(":", 1))
        keep = [i for i, d in enumerate(panel.dates) if lo <= d <= hi]
        if not keep:
            raise ValueError(f"window {window} does not overlap {panel.dates[0]}..{panel.dates[-1]}")
        sl = slice(keep[0], keep[-1] + 1)
    else:
        k = int(window)
        if k < 1 or k > panel.n_periods:
            raise ValueError(f"window of {k} months exceeds the {panel.n_periods} available")
        sl = slice(panel.n_periods - k, panel.n_periods)
    return ReturnsPanel(panel.dates[sl], panel.asset_names, panel.values[sl])
