import csv
import io
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from prbcast.errors import ConfigError
from prbcast.forecasters import train_model
from prbcast.metrics import mse
from prbcast.series import TraceGenConfig, format_timestamp, generate_prb_trace
from prbcast.service import SeriesStore, ServiceConfig, create_app, resolve_config

from crashsim import crash_trial


def points(n=600, seed=0, lo=0):
    s = generate_prb_trace(TraceGenConfig(length=n, seed=seed))
    return [{"timestamp": format_timestamp(t), "value": float(v)} for t, v in zip(s.timestamps(), s.values)][lo:]


@pytest.fixture
def client(tmp_path):
    with TestClient(create_app(ServiceConfig(data_dir=str(tmp_path), fsync=False))) as c:
        yield c


def _error_shape(r, status, code=None):
    assert r.status_code == status, r.text
    body = r.json()
    assert set(body) == {"code", "message", "detail"}
    if code:
        assert body["code"] == code
    return body


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200 and r.text == "ok"


def test_ingest_round_trip_and_idempotency(client):
    assert client.post("/v1/series/a/observations", json=[]).json()["accepted"] == 0
    batch = points(96)
    r = client.post("/v1/series/a/observations", json=batch)
    assert r.status_code == 202 and r.json()["accepted"] == 96
    w = client.get("/v1/series/a/window").json()
    assert w["points"] == batch
    r = client.post("/v1/series/a/observations", json=batch)
    assert r.status_code == 202 and r.json()["accepted"] == 0 and r.json()["duplicates"] == 96
    r = client.post("/v1/series/a/observations", json=points(100)[90:])
    assert r.json() == {"series_id": "a", "accepted": 4, "duplicates": 6, "length": 100}


def test_ingest_errors(client):
    batch = points(20)
    client.post("/v1/series/a/observations", json=batch[:10])
    _error_shape(client.post("/v1/series/a/observations", content=b"[{"), 400, "malformed")
    _error_shape(client.post("/v1/series/a/observations", json={"timestamp": "x"}), 400)
    bad = batch[10:15] + [{"timestamp": batch[15]["timestamp"], "value": 300.0}]
    body = _error_shape(client.post("/v1/series/a/observations", json=bad), 400, "invalid_batch")
    assert body["detail"]["index"] == 5
    repeat = batch[10:13] + [batch[11]]          # exact repeat inside a batch is a duplicate
    assert client.post("/v1/series/a/observations", json=repeat).json()["duplicates"] == 1
    early = batch[11]["timestamp"].replace(":00Z", ":01Z")
    regress = batch[13:15] + [{"timestamp": early, "value": 5.0}]
    body = _error_shape(client.post("/v1/series/a/observations", json=regress), 400)
    assert body["detail"]["index"] == 2 and "regression" in body["message"]
    back = [dict(batch[2], value=batch[2]["value"] + 1.0)]
    assert _error_shape(client.post("/v1/series/a/observations", json=back), 400)["detail"]["index"] == 0
    gap = [batch[14]]
    assert "irregular" in _error_shape(client.post("/v1/series/a/observations", json=gap), 400)["message"]
    assert _error_shape(client.post("/v1/series/a/observations", json=[{"timestamp": batch[10]["timestamp"],
                                                                       "value": True}]), 400)
    _error_shape(client.post("/v1/series/a/observations", json=points(10001)), 413, "batch_too_large")
    _error_shape(client.post("/v1/series/bad!id/observations", json=batch[:1]), 400)
    # nothing from rejected batches leaked in
    assert client.get("/v1/series/a/window").json()["length"] == 13


def test_train_errors(client):
    _error_shape(client.post("/v1/series/none/train", json={"kind": "sff"}), 404)
    client.post("/v1/series/a/observations", json=points(10))
    body = _error_shape(client.post("/v1/series/a/train", json={"kind": "deepar"}), 422, "insufficient_data")
    assert body["detail"] == {"required": 240, "available": 10}
    body = _error_shape(client.post("/v1/series/a/train", json={"kind": "sff", "epochz": 1}), 400, "bad_config")
    assert body["detail"]["field"] == "epochz"
    _error_shape(client.post("/v1/series/a/train", json=[1, 2]), 400)


def test_concurrent_train_conflicts(tmp_path):
    started, release = threading.Event(), threading.Event()

    def slow_train(series, cfg):
        started.set()
        release.wait(10)
        return train_model(series, cfg)

    app = create_app(ServiceConfig(data_dir=str(tmp_path), fsync=False), train_fn=slow_train)
    with TestClient(app) as c:
        c.post("/v1/series/a/observations", json=points(300))
        first = {}
        t = threading.Thread(target=lambda: first.setdefault("r", c.post(
            "/v1/series/a/train", json={"kind": "seasonal_naive"})))
        t.start()
        assert started.wait(10)
        _error_shape(c.post("/v1/series/a/train", json={"kind": "seasonal_naive"}), 409, "training_in_progress")
        release.set()
        t.join(10)
        assert first["r"].status_code == 200
        # lock released afterwards
        assert c.post("/v1/series/a/train", json={"kind": "seasonal_naive"}).status_code == 200


def test_forecast_point_model(client):
    pts = points(600)
    client.post("/v1/series/a/observations", json=pts)
    client.post("/v1/series/a/train", json={"kind": "seasonal_naive"})
    r = client.get("/v1/series/a/forecast", params={"horizon": 48, "levels": "0.5"})
    doc = r.json()
    assert r.status_code == 200 and doc["levels"] == [0.5]
    expected = [p["value"] for p in pts[600 - 96:600 - 48]]
    assert doc["quantiles"]["0.5"] == expected
    assert doc["start"] == format_timestamp(generate_prb_trace(TraceGenConfig(length=601)).timestamp(600))
    assert r.headers["x-model-hash"] == doc["model_hash"]


def test_forecast_probabilistic(client):
    client.post("/v1/series/a/observations", json=points(600))
    tr = client.post("/v1/series/a/train", json={"kind": "deepar", "epochs": 2, "hidden_size": 8,
                                                 "context_length": 96, "horizon": 24})
    assert tr.status_code == 200 and tr.json()["final_nll"] is not None
    a = client.get("/v1/series/a/forecast?horizon=24&levels=0.9,0.1,0.5&seed=7")
    b = client.get("/v1/series/a/forecast?horizon=24&levels=0.9,0.1,0.5&seed=7")
    c = client.get("/v1/series/a/forecast?horizon=24&levels=0.9,0.1,0.5&seed=8")
    assert a.content == b.content and a.content != c.content
    q = a.json()["quantiles"]
    assert list(q) == ["0.1", "0.5", "0.9"] and len(q["0.1"]) == 24
    assert np.all(np.array(q["0.1"]) <= np.array(q["0.5"])) and np.all(np.array(q["0.5"]) <= np.array(q["0.9"]))
    _error_shape(client.get("/v1/series/a/forecast?horizon=25"), 422, "horizon_too_long")
    _error_shape(client.get("/v1/series/a/forecast?levels=0,0.5"), 400, "bad_levels")
    _error_shape(client.get("/v1/series/a/forecast?levels=abc"), 400, "bad_levels")
    _error_shape(client.get("/v1/series/a/forecast?seed=x"), 400)
    _error_shape(client.get("/v1/series/zzz/forecast"), 404)


def test_holdout_report(client, tmp_path):
    _error_shape(client.get("/v1/series/a/report"), 404)
    client.post("/v1/series/a/observations", json=points(600))
    r = client.post("/v1/series/a/train", json={"kind": "sff", "epochs": 3, "holdout": True, "test_windows": 2})
    assert r.status_code == 200
    rep = client.get("/v1/series/a/report").json()
    for key in ("mse", "mae_eq2", "mase_scaled", "mape", "nd"):
        assert rep[key] is not None and rep[key] >= 0
    assert set(rep["quantile_loss"]) == set(rep["coverage"]) == {f"0.{k}" for k in range(1, 10)}
    assert rep["N"] == 96
    rows = list(csv.DictReader(io.StringIO((tmp_path / "series" / "a" / "forecast.csv").read_text())))
    recomputed = mse([float(x["true"]) for x in rows], [float(x["point"]) for x in rows])
    assert recomputed == pytest.approx(rep["mse"], rel=1e-12)
    # a point model's report leaves out quantile metrics
    client.post("/v1/series/a/train", json={"kind": "lstm", "epochs": 1, "hidden_size": 4, "holdout": True})
    rep = client.get("/v1/series/a/report").json()
    assert rep["quantile_loss"] is None and rep["coverage"] is None and rep["nd"] is None
    # training without holdout drops the stale report
    client.post("/v1/series/a/train", json={"kind": "seasonal_naive"})
    _error_shape(client.get("/v1/series/a/report"), 404)


def test_restart_restores_store_and_model(tmp_path):
    cfg = ServiceConfig(data_dir=str(tmp_path), fsync=False, snapshot_every=3)
    with TestClient(create_app(cfg)) as c:
        for k in range(0, 600, 50):
            c.post("/v1/series/a/observations", json=points(600)[k:k + 50])
        c.post("/v1/series/a/train", json={"kind": "sff", "epochs": 2})
        before = c.get("/v1/series/a/forecast?seed=3").content
        window = c.get("/v1/series/a/window").content
    with TestClient(create_app(cfg)) as c:
        assert c.get("/v1/series/a/window").content == window
        assert c.get("/v1/series/a/forecast?seed=3").content == before


def test_reads_never_see_partial_batches(tmp_path):
    store = SeriesStore(tmp_path, fsync=False)
    pts = points(2000)
    seen = set()
    done = threading.Event()

    def reader():
        while not done.is_set():
            w = store.window("a")
            if w is not None:
                seen.add(len(w))

    t = threading.Thread(target=reader)
    t.start()
    for k in range(0, 2000, 40):
        store.append("a", pts[k:k + 40])
    done.set()
    t.join()
    assert all(n % 40 == 0 for n in seen)


def test_crash_replay_trials(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(25):
        ok, desc = crash_trial(tmp_path / f"t{i}", rng)
        assert ok, desc


def test_torn_tail_is_discarded(tmp_path):
    store = SeriesStore(tmp_path, fsync=False)
    store.append("a", points(30))
    store.close()
    log = tmp_path / "series" / "a" / "log.ndjson"
    log.write_bytes(log.read_bytes() + b'{"seq": 2, "points": [[1, 2')
    again = SeriesStore(tmp_path)
    assert len(again.window("a")) == 30
    assert log.read_bytes().endswith(b"\n")
    assert again.append("a", points(40)[30:])["accepted"] == 10


def test_config_precedence(tmp_path):
    f = tmp_path / "svc.toml"
    f.write_text("[service]\nport = 7000\ncapacity = 100.0\ndata_dir = 'from-file'\n")
    env = {"PRBCAST_PORT": "7100", "PRBCAST_DATA_DIR": "from-env"}
    cfg = resolve_config({"port": 7200, "host": None}, env=env, config_file=f)
    assert (cfg.port, cfg.data_dir, cfg.capacity, cfg.host) == (7200, "from-env", 100.0, "127.0.0.1")
    assert resolve_config({}, env=env, config_file=f).port == 7100
    assert resolve_config({}, env={}, config_file=f).port == 7000
    assert resolve_config({}, env={}).port == 8080
    with pytest.raises(ConfigError):
        resolve_config({}, env={"PRBCAST_PORT": "abc"})
    f.write_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        resolve_config({}, env={}, config_file=f)
