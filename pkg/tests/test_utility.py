import os

from src.utility import THREADS_ENV, LapTimer, derive_seed, worker_count


class TestLapTimer:
    def test_counts_laps(self):
        timer = LapTimer()
        assert timer.avg == 0.0 and timer.rate == 0.0
        for _ in range(3):
            assert timer.lap() >= 0.0
        assert timer.n == 3
        assert timer.last_ms == timer.last * 1000.0
        assert timer.info().startswith("3 laps")

    def test_reset(self):
        timer = LapTimer()
        timer.lap()
        timer.reset()
        assert timer.n == 0


class TestSeeds:
    def test_deterministic(self):
        assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)

    def test_children_differ(self):
        seeds = {derive_seed(5, i) for i in range(100)}
        assert len(seeds) == 100
        assert derive_seed(5, 1) != derive_seed(6, 1)


class TestWorkerCount:
    def test_explicit(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert worker_count() == 3

    def test_auto(self, monkeypatch):
        for raw in ("0", "", "many"):
            monkeypatch.setenv(THREADS_ENV, raw)
            assert worker_count() == (os.cpu_count() or 1)
