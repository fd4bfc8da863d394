import io
import json
import math
import socket
import threading
import time

import numpy as np
import pytest

from emergency_table import load_cases
from singularguard.ik import HOME
from singularguard.kinematics import sample_configs
from singularguard.metrics import compute_metrics
from singularguard.monitor import (Action, MonitorConfig, SafetyMonitor, SourceClosed,
                                   emergency_decision, monitor_loop)
from singularguard.service import (MonitorServer, RequestError, encode, handle_line, parse_hostport,
                                   parse_request, serve_stream, serve_timed)


def find_config(model, pred, seed=0):
    rng = np.random.default_rng(seed)
    for q in sample_configs(model, 5000, rng):
        m = compute_metrics(model, q)
        if pred(m):
            return q
    raise AssertionError("no configuration found")


@pytest.fixture(scope="module")
def warning_q(model):
    return find_config(model, lambda m: 0.01 <= m.mu < 0.05 and m.kappa <= 100)


@pytest.mark.parametrize("mu,kappa,qmax,expected,scale", [
    (0.004, 100, 0.0, Action.EMERGENCY_STOP, None),
    (0.008, 80, 0.6, Action.EMERGENCY_STOP, None),
    (0.008, 80, 0.3, Action.CRITICAL_WARNING, 0.10),
    (0.03, 40, 0.0, Action.WARNING, 0.50),
    (0.03, 40, 2.0, Action.WARNING, 0.50),
    (0.2, 10, 0.0, Action.NORMAL, None),
])
def test_decision_examples(mu, kappa, qmax, expected, scale):
    d = emergency_decision(mu, kappa, np.array([qmax, 0, 0, 0, 0, 0]))
    assert d.action is expected and d.velocity_scale == scale
    assert (d.monitor_hz == 20.0) == (expected is Action.WARNING)


def test_default_constants():
    c = MonitorConfig()
    assert (c.mu_stop, c.kappa_stop, c.mu_critical, c.kappa_critical, c.v_stop, c.mu_warning,
            c.kappa_warning) == (0.005, 500, 0.01, 100, 0.5, 0.05, 50)
    with pytest.raises(ValueError):
        MonitorConfig(f_monitor=0)
    with pytest.raises(ValueError):
        MonitorConfig.from_dict({"hz": 3})


def test_boundary_truth_table():
    cases = load_cases()
    assert len(cases) >= 200
    for i, (mu, kappa, v, expected) in enumerate(cases):
        qdot = np.zeros(6)
        qdot[i % 6] = -v if i % 2 else v
        assert emergency_decision(mu, kappa, qdot).action.value == expected, (mu, kappa, v)


def test_directive_present_only_for_middle_tiers(rng):
    for _ in range(500):
        d = emergency_decision(rng.uniform(0, 0.1), 10 ** rng.uniform(0, 3), rng.uniform(-1, 1, 6))
        has = d.velocity_scale is not None
        assert has == (d.action in (Action.CRITICAL_WARNING, Action.WARNING))


def test_first_tier_wins_even_with_slow_motion():
    assert emergency_decision(0.001, 80, np.zeros(6)).action is Action.EMERGENCY_STOP


def test_events_revalidate(model, engine, rng):
    mon = SafetyMonitor(model, engine)
    for q in sample_configs(model, 50, rng):
        qdot = rng.uniform(-1, 1, 6)
        ev = mon.evaluate(q, qdot)
        d = ev.to_dict()
        assert emergency_decision(d["mu"], d["kappa"], np.array(d["qdot"])).action.value == d["action"]


def test_non_finite_sample_is_a_data_fault(model, engine):
    mon = SafetyMonitor(model, engine)
    ev = mon.evaluate([0, 0, math.nan, 0, 0, 0], np.zeros(6))
    assert ev.action is Action.EMERGENCY_STOP and ev.data_fault
    d = ev.to_dict()
    assert d["q"][2] is None and d["notify_operator"]
    encode(d)  # no NaN reaches the wire


def test_emergency_event_precedes_velocity_warning(model, engine):
    order = []
    samples = [(np.zeros(6), np.full(6, 1.0))]

    def source():
        if not samples:
            raise SourceClosed()
        return samples.pop()

    n = monitor_loop(source, lambda ev: order.append(("event", ev.action)), SafetyMonitor(model, engine),
                     on_velocity_warning=lambda ev: order.append(("velocity", None)),
                     on_notify=lambda ev: order.append(("notify", None)))
    assert n == 1
    assert order == [("event", Action.EMERGENCY_STOP), ("notify", None), ("velocity", None)]


def test_frequency_escalation_and_hysteresis(model, engine, warning_q):
    mon = SafetyMonitor(model, engine)
    assert mon.hz == 10.0
    ev = mon.evaluate(warning_q, np.zeros(6))
    assert ev.action is Action.WARNING and ev.monitor_hz == 20.0
    for i in range(9):
        assert mon.evaluate(HOME, np.zeros(6)).monitor_hz == 20.0
    assert mon.evaluate(HOME, np.zeros(6)).monitor_hz == 10.0


def test_loop_stops_from_another_thread(model, engine):
    stop = threading.Event()
    mon = SafetyMonitor(model, engine, MonitorConfig(f_monitor=2.0))
    ticks = []
    t = threading.Thread(target=monitor_loop, args=(lambda: (HOME, np.zeros(6)), ticks.append, mon, stop))
    t.start()
    time.sleep(0.1)
    t0 = time.monotonic()
    stop.set()
    t.join(2.0)
    assert not t.is_alive() and time.monotonic() - t0 < 0.5
    assert len(ticks) == 1


def test_max_ticks(model, engine):
    got = []
    n = monitor_loop(lambda: (HOME, np.zeros(6)), got.append, SafetyMonitor(model, engine,
                     MonitorConfig(f_monitor=200.0)), max_ticks=5)
    assert n == 5 and [e.tick for e in got] == list(range(5))


def test_parse_request():
    q, qd = parse_request('{"q": [0,1,2,3,4,5], "qdot": [0,0,0,0,0,0]}')
    assert q == [0, 1, 2, 3, 4, 5]
    for bad in ["nope", "[]", '{"q": [1]}', '{"q": [0,0,0,0,0,0], "qdot": [0,0,0,0,0,"x"]}',
                '{"q": [0,0,0,0,0,0], "qdot": [0,0,0,0,0,true]}']:
        with pytest.raises(RequestError):
            parse_request(bad)


def test_stream_mode_one_response_per_request(model, engine):
    mon = SafetyMonitor(model, engine)
    req = json.dumps({"q": list(HOME), "qdot": [0] * 6})
    rfile = io.StringIO(f"{req}\n\ngarbage\n{req}\n")
    out = []
    assert serve_stream(mon, rfile, out.append) == 3
    recs = [json.loads(l) for l in out]
    assert recs[0]["action"] == "NORMAL" and "error" in recs[1] and recs[2]["tick"] == 1
    for key in ("ts", "tcp", "mu", "kappa", "sigma_min", "safety_level", "safety_score", "action",
                "monitor_hz"):
        assert key in recs[0]


def test_handle_line_reports_errors(model, engine):
    assert "error" in handle_line(SafetyMonitor(model, engine), "{}")


def _client(server, lines, n_expected, timeout=3.0):
    host, port = server.server_address
    with socket.create_connection((host, port), timeout=timeout) as s:
        s.sendall("".join(l + "\n" for l in lines).encode())
        f = s.makefile("r")
        return [json.loads(f.readline()) for _ in range(n_expected)]


def test_tcp_stream_service(model, engine):
    server = MonitorServer(("127.0.0.1", 0), model, engine)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    try:
        req = json.dumps({"q": [0] * 6, "qdot": [0] * 6})
        recs = _client(server, [req, "{bad"], 2)
        assert recs[0]["action"] == "EMERGENCY_STOP" and recs[0]["kappa"] == 1e6
        assert "error" in recs[1]
    finally:
        server.shutdown()
        server.server_close()


def test_timed_mode_marks_stale_samples(model, engine):
    cfg = MonitorConfig(f_monitor=50.0, f_elevated=100.0)
    mon = SafetyMonitor(model, engine, cfg)
    r, w = socket.socketpair()
    out = []
    stop = threading.Event()
    reader = r.makefile("r")
    t = threading.Thread(target=serve_timed, args=(mon, reader, out.append, stop), daemon=True)
    t.start()
    w.sendall((json.dumps({"q": list(HOME), "qdot": [0] * 6}) + "\n").encode())
    time.sleep(0.3)
    stop.set()
    t.join(2.0)
    w.close()
    r.close()
    recs = [json.loads(l) for l in out]
    ticks = [x for x in recs if "tick" in x and "action" in x and "type" not in x]
    assert len(ticks) >= 5
    assert not ticks[0]["stale"] and ticks[-1]["stale"]


def test_timed_mode_emits_notices(model, engine):
    mon = SafetyMonitor(model, engine, MonitorConfig(f_monitor=100.0, f_elevated=100.0))
    req = json.dumps({"q": [0] * 6, "qdot": [1.0] * 6})
    out = []
    serve_timed(mon, io.StringIO(req + "\n"), out.append)
    kinds = [json.loads(l).get("type") for l in out]
    assert "operator_notification" in kinds and "velocity_warning" in kinds


def test_parse_hostport():
    assert parse_hostport("0.0.0.0:9000") == ("0.0.0.0", 9000)
    assert parse_hostport(":9000") == ("127.0.0.1", 9000)
    with pytest.raises(ValueError):
        parse_hostport("localhost")
