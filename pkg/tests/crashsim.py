"""Injected-abort trials for the durable series store."""
import numpy as np

from prbcast.service.store import SeriesStore, SimulatedCrash

STAGES = ("before_write", "mid_write", "before_fsync", "after_fsync", "snapshot_write")
# stages at which the in-flight record is already complete in the log (or snapshot)
DURABLE = {"before_fsync", "after_fsync", "snapshot_write"}
T0 = 1_672_531_200     # 2023-01-01T00:00:00Z


def make_batches(rng, n_batches=8, step=900):
    batches, t = [], T0
    for _ in range(n_batches):
        k = int(rng.integers(1, 12))
        vals = np.round(rng.uniform(0, 273, k), 3)
        pts = []
        for v in vals:
            pts.append({"timestamp": _iso(t), "value": float(v)})
            t += step
        batches.append(pts)
    return batches


def _iso(t):
    import datetime as dt
    return dt.datetime.fromtimestamp(t, dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def crash_trial(root, rng) -> tuple[bool, str]:
    """One random abort; returns (ok, description)."""
    stage = STAGES[int(rng.integers(len(STAGES)))]
    hit_at = int(rng.integers(1, 6))
    snapshot_every = int(rng.integers(1, 4))
    hits = {"n": 0}

    def fault(s):
        if s == stage:
            hits["n"] += 1
            if hits["n"] == hit_at:
                raise SimulatedCrash(s)

    batches = make_batches(rng)
    store = SeriesStore(root, snapshot_every=snapshot_every, fsync=False, fault=fault)
    acked, inflight, crashed_at = [], None, None
    for i, b in enumerate(batches):
        try:
            store.append("cell", b)
            acked.extend(p["value"] for p in b)
        except SimulatedCrash:
            inflight, crashed_at = [p["value"] for p in b], i
            break
    store.close()
    expected = acked + (inflight if inflight is not None and stage in DURABLE else [])
    replayed = SeriesStore(root)
    w = replayed.window("cell")
    got = [] if w is None else w.values.tolist()
    ok = got == expected
    # the log must stay appendable after recovery, and a second replay must agree
    if ok and inflight is not None:
        for b in batches[crashed_at:]:
            replayed.append("cell", b)
        final = replayed.window("cell").values.tolist()
        replayed.close()
        again = SeriesStore(root)
        ok = again.window("cell").values.tolist() == final == [p["value"] for b in batches for p in b]
        again.close()
    else:
        replayed.close()
    return ok, f"stage={stage} hit={hit_at} snapshot_every={snapshot_every} acked={len(acked)} got={len(got)}"
