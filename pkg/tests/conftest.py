import datetime as dt
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from plasmoflow.mobility import Trip


@pytest.fixture(autouse=True)
def salt_env(monkeypatch):
    monkeypatch.setenv("PLASMOFLOW_SALT", "test-suite-secret")


def mk_trip(user, home, dest, first, nights):
    """Trip with contiguous night dates starting at ``first``."""
    dates = tuple(first + dt.timedelta(days=i) for i in range(nights))
    return Trip(user, home, dest, dates[0], dates[-1], nights, dates)


def random_trip_scenario(seed=1234, n_sett=10, n_trips=200, start=dt.date(2025, 1, 5), span_days=85):
    """Deterministic multi-month trip + incidence scenario for risk tests."""
    rng = np.random.default_rng(seed)
    settlements = tuple(f"S{i:02d}" for i in range(n_sett))
    trips = []
    for t in range(n_trips):
        home, dest = rng.choice(n_sett, size=2, replace=False)
        first = start + dt.timedelta(days=int(rng.integers(0, span_days - 8)))
        nights = int(rng.integers(2, 8))
        trips.append(mk_trip(f"u{t:04d}", settlements[home], settlements[dest], first, nights))
    months = sorted(
        {(start + dt.timedelta(days=i)).strftime("%Y-%m") for i in range(span_days)}
    )
    values = rng.uniform(0.0005, 0.05, size=(n_sett, len(months)))
    values[rng.integers(0, n_sett)] = 0.0  # one already-eliminated settlement
    from plasmoflow.riskflow import IncidenceTable

    incidence = IncidenceTable(
        settlements, tuple(months), np.zeros_like(values, dtype=np.int64), values
    )
    return trips, incidence


@pytest.fixture(scope="session")
def trip_scenario():
    return random_trip_scenario()


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """The benchmark corpus: seed 42, 500 users, 25 towers, 90 days, defaults."""
    from plasmoflow.synth import SynthConfig, generate

    out = tmp_path_factory.mktemp("corpus42")
    truth = generate(SynthConfig(), out)
    return out, truth


@pytest.fixture(scope="session")
def corpus_snapshot(synth_corpus, tmp_path_factory):
    """One pipeline run over the benchmark corpus (shards=1)."""
    import os

    from plasmoflow.config import load_config
    from plasmoflow.pipeline import run_pipeline
    from plasmoflow.snapshots import load_snapshot

    out, truth = synth_corpus
    os.environ.setdefault("PLASMOFLOW_SALT", "test-suite-secret")
    snaps = tmp_path_factory.mktemp("snaps42")
    cfg = load_config(out / "pipeline_config.json")
    run_pipeline(cfg, snaps)
    return snaps, load_snapshot(snaps), truth
