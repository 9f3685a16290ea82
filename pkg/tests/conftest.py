import numpy as np
import pytest

from affectpipe import synth
from affectpipe.model import SamRating, SessionRecord, SignalKind, SignalTrace

T0 = 1_600_000_000_000.0


def make_session(kinds=tuple(SignalKind), n_int=6, interval_ms=20_000, sid="s01",
                 elicitation=None, seed=0):
    """Small valid session with noise traces on a uniform grid."""
    rng = np.random.default_rng(seed)
    end = T0 + 30_000 + n_int * interval_ms + 1_000
    traces = {}
    for k in kinds:
        rate = k.nominal_rate_hz
        n = int((end - T0) / 1000 * rate)
        traces[k] = SignalTrace(k, rate, T0, 5.0 + rng.normal(size=n))
    ints = tuple(SamRating(5, 5, 3, T0 + 30_000 + (i + 1) * interval_ms) for i in range(n_int))
    elic = elicitation or tuple((5, 5) for _ in range(16))
    return SessionRecord(sid, traces, (T0, T0 + 30_000), ints, tuple(elic))


@pytest.fixture
def session():
    return make_session()


@pytest.fixture(scope="session")
def small_study():
    return synth.generate_study(synth.SynthConfig(n_subjects=4, interval_s=20, seed=11))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
