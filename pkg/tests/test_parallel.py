"""Tests for the AOT_THREADS cap and the order-preserving map."""

import os
import threading

from amortot.parallel import ordered_map, thread_cap


class TestThreadCap:
    def test_reads_env(self, monkeypatch):
        monkeypatch.setenv("AOT_THREADS", "3")
        assert thread_cap() == 3

    def test_unset_falls_back_to_cpu_count(self, monkeypatch):
        monkeypatch.delenv("AOT_THREADS", raising=False)
        assert thread_cap() == (os.cpu_count() or 1)

    def test_invalid_values_fall_back(self, monkeypatch):
        for raw in ("zero", "0", "-2", ""):
            monkeypatch.setenv("AOT_THREADS", raw)
            assert thread_cap() == (os.cpu_count() or 1)


class TestOrderedMap:
    def test_preserves_input_order(self):
        assert ordered_map(lambda x: x * x, range(50), workers=4) == [x * x for x in range(50)]

    def test_single_worker_runs_inline(self):
        seen = []
        ordered_map(lambda _: seen.append(threading.get_ident()), range(5), workers=1)
        assert set(seen) == {threading.get_ident()}

    def test_env_cap_of_one_runs_inline(self, monkeypatch):
        monkeypatch.setenv("AOT_THREADS", "1")
        seen = []
        ordered_map(lambda _: seen.append(threading.get_ident()), range(5))
        assert set(seen) == {threading.get_ident()}

    def test_empty(self):
        assert ordered_map(lambda x: x, [], workers=8) == []
