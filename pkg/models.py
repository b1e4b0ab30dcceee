import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from utils.errors import DataError

_QUARTER_RE = re.compile(r'^\s*(\d{4})\s*-?\s*[Qq]([1-4])\s*$')


@dataclass(frozen=True, order=True)
class Month:
    """Calendar month of a payment record"""
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise DataError(f"month out of range: {self.month}")

    @property
    def quarter(self) -> 'Quarter':
        return Quarter(self.year, (self.month - 1) // 3 + 1)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


@dataclass(frozen=True, order=True)
class Quarter:
    """Calendar quarter; ordered by (year, q)"""
    year: int
    q: int

    def __post_init__(self):
        if not 1 <= self.q <= 4:
            raise DataError(f"quarter out of range: {self.q}")

    @classmethod
    def parse(cls, text: str) -> 'Quarter':
        """Parse labels such as '2017Q1' or '2017-Q1'"""
        match = _QUARTER_RE.match(str(text))
        if not match:
            raise DataError(f"unparseable quarter label: {text!r}")
        return cls(int(match.group(1)), int(match.group(2)))

    @classmethod
    def from_ordinal(cls, ordinal: int) -> 'Quarter':
        return cls(ordinal // 4, ordinal % 4 + 1)

    @property
    def ordinal(self) -> int:
        return self.year * 4 + (self.q - 1)

    def next(self) -> 'Quarter':
        return Quarter.from_ordinal(self.ordinal + 1)

    @property
    def months(self) -> Tuple[Month, Month, Month]:
        first = 3 * (self.q - 1) + 1
        return Month(self.year, first), Month(self.year, first + 1), Month(self.year, first + 2)

    @property
    def label(self) -> str:
        return f"{self.year}Q{self.q}"

    def __str__(self) -> str:
        return self.label


def quarter_range(start: Quarter, end: Quarter) -> List[Quarter]:
    """Inclusive list of quarters from start to end"""
    return [Quarter.from_ordinal(o) for o in range(start.ordinal, end.ordinal + 1)]


@dataclass(frozen=True)
class PaymentRecord:
    """
    One dated payment between two industries.

    The amount is held as integer pence so that aggregation is exact and
    independent of record order.
    """
    period: Month
    source: str
    dest: str
    pence: int

    def __post_init__(self):
        if self.pence <= 0:
            raise DataError(f"non-positive value: {self.pence} pence")

    @property
    def value(self) -> float:
        return self.pence / 100.0

    @property
    def quarter(self) -> Quarter:
        return self.period.quarter


@dataclass(frozen=True)
class RejectedLine:
    """Diagnostic for one input line that failed validation"""
    line: int
    reason: str
    text: str = ''


@dataclass(frozen=True)
class IndustryRoster:
    """Ordered industry codes with optional display names and category tags"""
    codes: Tuple[str, ...]
    names: Tuple[str, ...] = ()
    categories: Tuple[str, ...] = ()
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.codes)) != len(self.codes):
            raise DataError("industry codes must be unique")
        if len(self.codes) < 2:
            raise DataError(f"a roster needs at least 2 industries, got {len(self.codes)}")
        if self.names and len(self.names) != len(self.codes):
            raise DataError("roster names must align with codes")
        if self.categories and len(self.categories) != len(self.codes):
            raise DataError("roster categories must align with codes")
        self._index.update({code: i for i, code in enumerate(self.codes)})

    @classmethod
    def from_codes(cls, codes: Sequence[str]) -> 'IndustryRoster':
        return cls(tuple(codes))

    @property
    def n(self) -> int:
        return len(self.codes)

    def __len__(self) -> int:
        return len(self.codes)

    def __contains__(self, code: str) -> bool:
        return code in self._index

    def index(self, code: str) -> int:
        try:
            return self._index[code]
        except KeyError:
            raise DataError(f"unknown industry '{code}'")

    def name(self, i: int) -> str:
        return self.names[i] if self.names else self.codes[i]

    def category(self, i: int) -> Optional[str]:
        return self.categories[i] if self.categories else None

    def permuted(self, order: Sequence[int]) -> 'IndustryRoster':
        """Roster whose i-th industry is this roster's order[i]-th"""
        return IndustryRoster(
            tuple(self.codes[k] for k in order),
            tuple(self.names[k] for k in order) if self.names else (),
            tuple(self.categories[k] for k in order) if self.categories else (),
        )


@dataclass(frozen=True)
class PairTotals:
    """Summed quarterly payments per (source index, dest index), in pence"""
    quarter: Quarter
    totals: Dict[Tuple[int, int], int]

    def __post_init__(self):
        for key, pence in self.totals.items():
            if pence <= 0:
                raise DataError(f"non-positive pair total for {key} in {self.quarter}")

    def __len__(self) -> int:
        return len(self.totals)

    def value(self, source: int, dest: int) -> float:
        return self.totals.get((source, dest), 0) / 100.0

    def items(self) -> Iterator[Tuple[Tuple[int, int], int]]:
        return iter(sorted(self.totals.items()))
