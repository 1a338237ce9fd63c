import datetime as dt

import numpy as np
import pytest

from stockcnn.market_data import RAW_COLUMNS, RawBar

HEADER = ",".join(RAW_COLUMNS)

# Four clean daily bars used as a reference sample; non-feature columns
# filled with neutral values (no dividend, no split, factor 1).
SAMPLE_ROWS = [
    (109.55, 110.1599, 109.13, 109.40, 8642514.0),
    (109.97, 110.8200, 109.34, 110.10, 10297133.0),
    (110.27, 110.5300, 108.60, 109.99, 13546110.0),
    (111.75, 112.9000, 109.59, 110.41, 16452412.0),
]


def csv_row(date, o, h, l, c, v, adj=None):
    ao, ah, al, ac, av = adj or (o, h, l, c, v)
    return f"{date},{o},{h},{l},{c},{v},0.0,1.0,{ao},{ah},{al},{ac},{av},1.0"


@pytest.fixture
def sample_csv():
    dates = ["2017-06-01", "2017-06-02", "2017-06-05", "2017-06-06"]
    return "\n".join([HEADER] + [csv_row(d, *r) for d, r in zip(dates, SAMPLE_ROWS)]) + "\n"


def make_bar(date, o=100.0, h=101.0, l=99.0, c=100.5, v=1000.0, adj=None):
    ao, ah, al, ac, av = adj or (o, h, l, c, v)
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    return RawBar(date, o, h, l, c, v, 0.0, 1.0, ao, ah, al, ac, av, 1.0)


def series_from_adj_close(closes, symbol="TEST", start=dt.date(2020, 1, 1)):
    """A TickerSeries whose ADJ_CLOSE (and CLOSE) follow ``closes``."""
    from stockcnn.market_data import build_series
    bars = []
    for i, c in enumerate(closes):
        c = float(c)
        bars.append(make_bar(start + dt.timedelta(days=i), c, c * 1.01, c * 0.99, c, 1000.0 + i))
    return build_series(symbol, bars)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import _acceptance_log

    if _acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_acceptance_log.LINES):
            terminalreporter.write_line(_acceptance_log.LINES[number])
