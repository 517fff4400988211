import pytest

from okmp.bench import CSV_HEADER, STAGES, BenchRow, bench_pair, run_bench, to_csv
from okmp.ffield import M61, PrimeField
from okmp.rand import SeededRandom


@pytest.fixture
def field():
    return PrimeField(M61, strict=False)


def test_six_rows_in_table_order(field):
    rows = bench_pair(30, 10, 2, SeededRandom(1), field)
    assert [r.stage for r in rows] == list(STAGES)
    assert all(r.m == 30 and r.n == 10 and r.median_ns > 0 for r in rows)


def test_stage_subset(field):
    rows = bench_pair(30, 10, 2, SeededRandom(1), field, stages=("Bcast",))
    assert [r.stage for r in rows] == ["Bcast"]


def test_users_exceeding_dims(field):
    with pytest.raises(ValueError):
        bench_pair(10, 11, 1, SeededRandom(1), field)


def test_run_bench_skips_invalid_pairs(field):
    rows = run_bench([20, 40], [10, 30], 1, SeededRandom(2), field)
    pairs = sorted({(r.m, r.n) for r in rows})
    assert pairs == [(20, 10), (40, 10), (40, 30)]
    assert len(rows) == 18


def test_csv_schema():
    text = to_csv([BenchRow("Bcast", 1000, 500, 1234)])
    assert text == ",".join(CSV_HEADER) + "\nBcast,1000,500,1234\n"


def test_csv_quotes_nothing_for_table_labels():
    text = to_csv([BenchRow(s, 1, 1, 1) for s in STAGES])
    assert "Client's setup,1,1,1" in text
    assert "Client removal + refresh,1,1,1" in text
