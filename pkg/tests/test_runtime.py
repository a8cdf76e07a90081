import json
import logging
import threading

import pytest

from ahresonance.jobqueue import WorkerPool
from ahresonance.logging_setup import JsonFormatter, build_dict_config
from ahresonance.state import FAILED, SUCCEEDED, State


def test_state_runs_and_counter(tmp_path):
    st = State(str(tmp_path / "db" / "state.db"))
    a = st.start_run("h1", "scan")
    b = st.start_run("h1", "flow")
    st.finish_run(a, True)
    st.finish_run(b, False)
    assert [r["status"] for r in st.list_runs()] == [SUCCEEDED, FAILED]
    assert [r["id"] for r in st.list_runs("flow")] == [b]
    assert st._next_counter() == 1 and st._next_counter() == 2
    st.close()


def test_state_cache_entries(tmp_path):
    st = State(str(tmp_path / "state.db"))
    target = tmp_path / "x.bin"
    target.write_bytes(b"1")
    st.record_cache("k", str(target))
    assert st.cache_path("k") == str(target)
    target.unlink()
    assert st.cache_path("k") is None
    assert st.conn.execute("SELECT COUNT(*) FROM scan_cache").fetchone()[0] == 0
    assert st.cache_path("missing") is None


def test_state_thread_local_connections(tmp_path):
    st = State(str(tmp_path / "state.db"))
    ids = []

    def work():
        ids.append(st.start_run("h", "calculus"))
        st.close()
    threads = [threading.Thread(target=work) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(ids) == [r["id"] for r in st.list_runs("calculus")]


@pytest.mark.parametrize("workers", [1, 4])
def test_worker_pool_preserves_order(workers):
    with WorkerPool(workers) as pool:
        assert pool.map(lambda v: v * v, range(20)) == [v * v for v in range(20)]
        assert pool(str, [1, 2]) == ["1", "2"]


def test_worker_pool_stop():
    pool = WorkerPool(1)
    pool.stop()
    assert pool.stopped
    with pytest.raises(RuntimeError):
        pool.map(abs, [1])
    pool.close()


def test_logging_dict_config(tmp_path):
    cfg = build_dict_config({"level": "debug", "file": str(tmp_path / "logs" / "run.log"), "console": False,
                             "json": True})
    assert (tmp_path / "logs").is_dir()
    assert set(cfg["handlers"]) == {"file"}
    assert cfg["handlers"]["file"]["class"] == "logging.handlers.TimedRotatingFileHandler"
    assert cfg["loggers"][""]["level"] == "DEBUG"
    assert cfg["formatters"]["json"]["()"] == "ahresonance.logging_setup.JsonFormatter"


def test_json_formatter():
    rec = logging.LogRecord("ahresonance.x", logging.INFO, __file__, 1, "pole %s", ("1-2j",), None)
    data = json.loads(JsonFormatter().format(rec))
    assert data["msg"] == "pole 1-2j"
    assert data["level"] == "INFO" and data["logger"] == "ahresonance.x"
