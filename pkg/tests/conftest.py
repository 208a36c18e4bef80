import numpy as np


def central_diff(f, x, h=1e-6):
    """Central differences of ``sum(f)`` at ``x``; batch entries are independent."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = float(np.sum(f(x)))
        flat[i] = old - h
        down = float(np.sum(f(x)))
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return g


def grad_close(analytic, numeric, rtol=1e-5):
    """``|a - n| <= rtol * (1 + |n|)`` in the sup norm."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(analytic - numeric))) <= rtol * (1.0 + float(np.max(np.abs(numeric))))


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
