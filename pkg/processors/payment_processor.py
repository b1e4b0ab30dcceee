import csv
import io
import logging
import re
from collections import defaultdict
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, DecimalException, InvalidOperation
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, NamedTuple, Optional, Tuple, Union

import pandas as pd

from config import CSV_HEADER
from models import IndustryRoster, Month, PairTotals, PaymentRecord, Quarter, RejectedLine, quarter_range
from utils.errors import DataError

logger = logging.getLogger(__name__)

_DATE_RE = re.compile(r'^(\d{4})-(\d{2})$')
_PENCE = Decimal('1')
_MAX_PENCE = 2 ** 63 - 1


@dataclass(frozen=True)
class RosterPolicy:
    """How the industry roster is obtained: a fixed list, or inferred from the data"""
    mode: str = 'fixed'
    roster: Optional[IndustryRoster] = None

    def __post_init__(self):
        if self.mode not in ('fixed', 'infer'):
            raise DataError(f"unknown roster policy: {self.mode}")
        if self.mode == 'fixed' and self.roster is None:
            raise DataError("fixed roster policy needs a roster")


class ParseResult(NamedTuple):
    records: List[PaymentRecord]
    roster: Optional[IndustryRoster]
    rejects: List[RejectedLine]


def load_roster(path: Union[str, Path]) -> IndustryRoster:
    """
    Load an industry roster CSV with columns code[,name][,category]

    Args:
        path: Path to the roster file

    Returns:
        The roster in file order
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, comment='#')
    except FileNotFoundError:
        raise DataError(f"roster file not found: {path}")
    if 'code' not in frame.columns:
        raise DataError(f"roster file {path} has no 'code' column")
    codes = tuple(frame['code'].str.strip())
    names = tuple(frame['name']) if 'name' in frame.columns else ()
    categories = tuple(frame['category']) if 'category' in frame.columns else ()
    roster = IndustryRoster(codes, names, categories)
    logger.debug(f"Loaded roster of {roster.n} industries from {path}")
    return roster


def _text_lines(stream: Union[BinaryIO, bytes, str, io.TextIOBase]) -> Iterator[Optional[str]]:
    """Yield decoded lines; a byte line that is not valid UTF-8 yields None"""
    if isinstance(stream, str):
        yield from io.StringIO(stream, newline=None)
        return
    if isinstance(stream, io.TextIOBase):
        yield from stream
        return
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    first = True
    for chunk in stream:
        # splitlines also breaks on a bare '\r'
        for piece in chunk.splitlines():
            if first:
                piece = piece.removeprefix(b'\xef\xbb\xbf')
                first = False
            try:
                yield piece.decode('utf-8')
            except UnicodeDecodeError:
                yield None


def _parse_pence(text: str) -> int:
    try:
        amount = Decimal(text)
    except InvalidOperation:
        raise ValueError('non-numeric value')
    if not amount.is_finite():
        raise ValueError('non-numeric value')
    if amount <= 0:
        raise ValueError('non-positive value')
    try:
        pence = int((amount * 100).quantize(_PENCE, rounding=ROUND_HALF_UP))
    except DecimalException:
        raise ValueError('value out of range')
    if pence == 0:
        raise ValueError('rounds to zero pence')
    if pence > _MAX_PENCE:
        raise ValueError('value out of range')
    return pence


def parse_records(stream: Union[BinaryIO, bytes, str],
                  policy: RosterPolicy,
                  sample_range: Optional[Tuple[Quarter, Quarter]] = None) -> ParseResult:
    """
    Parse a payment CSV (header `date,source,dest,value`) into validated records

    Leading lines starting with '#' are skipped. Bad data lines are rejected
    with their line number and a reason; they never abort the parse.

    Args:
        stream: Byte stream (UTF-8), raw bytes or text
        policy: Roster policy; under 'fixed' unknown industries are rejected
        sample_range: Optional inclusive (first, last) quarter; records outside are rejected

    Returns:
        ParseResult(records, roster, rejects). The roster is None when inference
        finds fewer than two industries.
    """
    records: List[PaymentRecord] = []
    rejects: List[RejectedLine] = []
    months: Dict[str, Month] = {}
    fixed = policy.roster if policy.mode == 'fixed' else None
    header_seen = False

    for lineno, raw in enumerate(_text_lines(stream), start=1):
        if raw is None:
            if not header_seen:
                raise DataError(f"line {lineno} is not valid UTF-8")
            rejects.append(RejectedLine(lineno, 'invalid UTF-8'))
            continue
        line = raw.rstrip('\r\n')
        if not header_seen:
            if not line.strip() or line.lstrip().startswith('#'):
                continue
            header = [h.strip().lower() for h in next(csv.reader([line]))]
            if tuple(header) != CSV_HEADER:
                raise DataError(f"malformed header on line {lineno}: expected "
                                f"'{','.join(CSV_HEADER)}', got {line!r}")
            header_seen = True
            continue
        if not line.strip():
            continue

        # Data line
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != 4:
            rejects.append(RejectedLine(lineno, f"expected 4 fields, got {len(fields)}", line))
            continue
        date_text, source, dest, value_text = fields

        month = months.get(date_text)
        if month is None:
            match = _DATE_RE.match(date_text)
            if not match or not 1 <= int(match.group(2)) <= 12:
                rejects.append(RejectedLine(lineno, 'unparseable date', line))
                continue
            month = months.setdefault(date_text, Month(int(match.group(1)), int(match.group(2))))

        if not source or not dest:
            rejects.append(RejectedLine(lineno, 'missing industry code', line))
            continue
        # Value, then roster membership and sample range
        try:
            pence = _parse_pence(value_text)
        except ValueError as e:
            rejects.append(RejectedLine(lineno, str(e), line))
            continue
        if fixed is not None and (source not in fixed or dest not in fixed):
            unknown = source if source not in fixed else dest
            rejects.append(RejectedLine(lineno, f"unknown industry '{unknown}'", line))
            continue
        if sample_range is not None and not sample_range[0] <= month.quarter <= sample_range[1]:
            rejects.append(RejectedLine(lineno, 'period outside sample range', line))
            continue
        records.append(PaymentRecord(month, source, dest, pence))

    if not header_seen:
        raise DataError('input has no header line')

    # Roster: fixed list or sorted codes seen in accepted records
    if fixed is not None:
        roster: Optional[IndustryRoster] = fixed
    else:
        codes = sorted({r.source for r in records} | {r.dest for r in records})
        roster = IndustryRoster.from_codes(codes) if len(codes) >= 2 else None
        if roster is None:
            logger.warning(f"Roster inference found {len(codes)} industries; at least 2 are needed")

    for reject in rejects[:20]:
        logger.debug(f"Rejected line {reject.line}: {reject.reason}")
    if rejects:
        reasons: Dict[str, int] = defaultdict(int)
        for reject in rejects:
            reasons[reject.reason.split(" '")[0]] += 1
        summary = ', '.join(f"{k}: {v}" for k, v in sorted(reasons.items()))
        logger.warning(f"Rejected {len(rejects)} lines ({summary})")
    logger.info(f"Parsed {len(records)} payment records")
    return ParseResult(records, roster, rejects)


def aggregate_quarterly(records: Iterable[PaymentRecord],
                        roster: IndustryRoster,
                        keep_self_flows: bool = False) -> Dict[Quarter, PairTotals]:
    """
    Sum record values per quarter and ordered industry pair

    Args:
        records: Validated records
        roster: Roster covering every record's industries
        keep_self_flows: Keep i -> i payments instead of dropping them

    Returns:
        Quarter -> PairTotals, in quarter order; quarters without records are absent
    """
    sums: Dict[Quarter, Dict[Tuple[int, int], int]] = defaultdict(lambda: defaultdict(int))
    dropped = 0
    for record in records:
        i = roster.index(record.source)
        j = roster.index(record.dest)
        if i == j and not keep_self_flows:
            dropped += 1
            continue
        sums[record.quarter][(i, j)] += record.pence
    if dropped:
        logger.info(f"Dropped {dropped} self-flow records")
    return {q: PairTotals(q, dict(sums[q])) for q in sorted(sums)}


def fill_quarters(totals: Dict[Quarter, PairTotals],
                  start: Optional[Quarter] = None,
                  end: Optional[Quarter] = None) -> List[PairTotals]:
    """Contiguous PairTotals sequence from start to end; missing quarters are empty"""
    if not totals and (start is None or end is None):
        return []
    start = start or min(totals)
    end = end or max(totals)
    return [totals.get(q, PairTotals(q, {})) for q in quarter_range(start, end)]


def records_to_csv(records: Iterable[PaymentRecord]) -> str:
    """Canonical CSV text for records, values in pounds with two decimals"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([str(r.period), r.source, r.dest, f"{r.pence // 100}.{r.pence % 100:02d}"])
    return buffer.getvalue()
