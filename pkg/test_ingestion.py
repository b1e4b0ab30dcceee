"""
Tests for payment record parsing and quarterly aggregation
"""
import random

import pytest

from config import CSV_HEADER, ROSTER_PATH
from models import IndustryRoster, Month, PaymentRecord, Quarter
from processors.payment_processor import (RosterPolicy, aggregate_quarterly, fill_quarters,
                                          load_roster, parse_records, records_to_csv)
from utils.errors import DataError

HEADER = ','.join(CSV_HEADER) + '\n'


@pytest.fixture
def codes():
    return IndustryRoster.from_codes(['46', '64', 'A', 'B'])


def test_well_formed_line(codes):
    result = parse_records(HEADER + '2017-03,64,46,1000.0\n', RosterPolicy('fixed', codes))
    assert result.rejects == []
    assert result.records == [PaymentRecord(Month(2017, 3), '64', '46', 100000)]
    assert result.records[0].value == 1000.0


def test_non_positive_value_rejected(codes):
    result = parse_records(HEADER + '2017-03,64,46,-5\n', RosterPolicy('fixed', codes))
    assert result.records == []
    assert [(r.line, r.reason) for r in result.rejects] == [(2, 'non-positive value')]


def test_header_only_stream(codes):
    result = parse_records(HEADER, RosterPolicy('fixed', codes))
    assert result.records == []
    assert result.rejects == []


def test_bad_lines_are_rejected_not_fatal(codes):
    text = HEADER + '\n'.join([
        '2017-13,A,B,1',
        '2017-01,A,B',
        '2017-01,,B,1',
        '2017-01,A,B,abc',
        '2017-01,A,Z,1',
        '2016-12,A,B,1',
        '2017-01,A,B,2.50',
    ]) + '\n'
    result = parse_records(text, RosterPolicy('fixed', codes),
                           sample_range=(Quarter(2017, 1), Quarter(2024, 4)))
    reasons = [r.reason for r in result.rejects]
    assert reasons == ['unparseable date', 'expected 4 fields, got 3', 'missing industry code',
                       'non-numeric value', "unknown industry 'Z'", 'period outside sample range']
    assert [r.line for r in result.rejects] == [2, 3, 4, 5, 6, 7]
    assert len(result.records) == 1 and result.records[0].pence == 250


def test_malformed_header_is_fatal(codes):
    with pytest.raises(DataError):
        parse_records('when,from,to,amount\n2017-01,A,B,1\n', RosterPolicy('fixed', codes))


def test_comment_lines_before_header_are_skipped(codes):
    result = parse_records('# config_hash=abc seed=1\n' + HEADER + '2017-01,A,B,1\n',
                           RosterPolicy('fixed', codes))
    assert len(result.records) == 1


def test_values_round_half_up_to_pence(codes):
    result = parse_records(HEADER + '2017-01,A,B,0.005\n2017-01,A,B,1.234\n', RosterPolicy('fixed', codes))
    assert [r.pence for r in result.records] == [1, 123]


def test_sub_penny_value_rounds_to_zero(codes):
    result = parse_records(HEADER + '2017-01,A,B,0.004\n', RosterPolicy('fixed', codes))
    assert result.records == []
    assert [r.reason for r in result.rejects] == ['rounds to zero pence']


@pytest.mark.parametrize('value', ['1e30', '9' * 40, '1e17'])
def test_huge_value_is_rejected_not_fatal(codes, value):
    data = (HEADER + f'2017-03,64,46,{value}\n2017-03,64,46,10\n').encode()
    result = parse_records(data, RosterPolicy('fixed', codes))
    assert [r.pence for r in result.records] == [1000]
    assert [(r.line, r.reason) for r in result.rejects] == [(2, 'value out of range')]


def test_invalid_utf8_line_is_rejected(codes):
    data = HEADER.encode() + b'2017-01,A,\xff,1\n2017-01,A,B,1\r\n'
    result = parse_records(data, RosterPolicy('fixed', codes))
    assert len(result.records) == 1
    assert [(r.line, r.reason) for r in result.rejects] == [(2, 'invalid UTF-8')]


def test_invalid_utf8_header_is_a_data_error(codes):
    with pytest.raises(DataError):
        parse_records(b'date,\xffsource,dest,value\n2017-01,A,B,1\n', RosterPolicy('fixed', codes))


def test_byte_stream_with_bom_and_bare_carriage_returns(codes):
    data = b'\xef\xbb\xbf' + HEADER.strip().encode() + b'\r2017-01,A,B,1\r2017-02,A,B,2\r'
    result = parse_records(data, RosterPolicy('fixed', codes))
    assert [r.pence for r in result.records] == [100, 200]


def test_infer_policy_builds_sorted_roster():
    result = parse_records(HEADER + '2017-01,Z,B,1\n2017-02,B,M,1\n', RosterPolicy('infer'))
    assert result.roster.codes == ('B', 'M', 'Z')


def test_infer_policy_with_one_code_gives_no_roster():
    result = parse_records(HEADER + '2017-01,A,A,1\n', RosterPolicy('infer'))
    assert result.roster is None


def test_aggregation_is_additive(codes):
    records = [PaymentRecord(Month(2017, 1), 'A', 'B', 10000),
               PaymentRecord(Month(2017, 2), 'A', 'B', 5000)]
    totals = aggregate_quarterly(records, codes)
    a, b = codes.index('A'), codes.index('B')
    assert totals[Quarter(2017, 1)].value(a, b) == 150.0


def test_month_bucketing(codes):
    totals = aggregate_quarterly([PaymentRecord(Month(2017, 4), 'A', 'B', 1000)], codes)
    assert list(totals) == [Quarter(2017, 2)]


def test_self_flows_dropped_by_default(codes):
    records = [PaymentRecord(Month(2017, 1), 'A', 'A', 1000)]
    assert aggregate_quarterly(records, codes) == {}
    kept = aggregate_quarterly(records, codes, keep_self_flows=True)
    a = codes.index('A')
    assert kept[Quarter(2017, 1)].value(a, a) == 10.0


def test_aggregation_is_order_invariant_and_conserves_totals(codes):
    rng = random.Random(5)
    records = [PaymentRecord(Month(2017 + rng.randrange(2), rng.randrange(1, 13)),
                             rng.choice(codes.codes), rng.choice(codes.codes), rng.randrange(1, 10 ** 7))
               for _ in range(500)]
    records = [r for r in records if r.source != r.dest]
    shuffled = records[:]
    rng.shuffle(shuffled)
    first = aggregate_quarterly(records, codes)
    second = aggregate_quarterly(shuffled, codes)
    assert first == second
    assert sum(p for t in first.values() for _, p in t.items()) == sum(r.pence for r in records)


def test_fill_quarters_inserts_empty_quarters(codes):
    records = [PaymentRecord(Month(2017, 1), 'A', 'B', 100), PaymentRecord(Month(2017, 10), 'A', 'B', 100)]
    filled = fill_quarters(aggregate_quarterly(records, codes))
    assert [t.quarter.label for t in filled] == ['2017Q1', '2017Q2', '2017Q3', '2017Q4']
    assert len(filled[1]) == 0


def test_canonical_csv_reads_back(codes):
    records = [PaymentRecord(Month(2018, 6), 'A', 'B', 123456), PaymentRecord(Month(2018, 7), '64', '46', 5)]
    text = records_to_csv(records)
    assert text.splitlines()[1:] == ['2018-06,A,B,1234.56', '2018-07,64,46,0.05']
    assert parse_records(text, RosterPolicy('fixed', codes)).records == records


def test_committed_roster():
    roster = load_roster(ROSTER_PATH)
    assert roster.n == 89
    assert '00' in roster and '64' in roster
    assert all(roster.category(i) for i in range(roster.n))
