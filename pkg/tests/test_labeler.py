import dataclasses
import json
import socket
import threading

import numpy as np
import pytest

from udl.data import sample_to_json
from udl.expert import select_expert_action
from udl.grid import DEFAULT_NOISE, NoiseSpec, reachable_mask
from udl.labeler import (
    PROTOCOL_VERSION,
    LabelingSession,
    SessionConfig,
    serve_labeling_session,
)
from udl.net import init_params, zeros_like_params
from udl.world import load_world
from udl.worlds import generate_world

NO_NOISE = NoiseSpec()

FRAME_KEYS = {
    "type", "version", "tick", "clean", "noisy", "reachable",
    "pose", "preview", "net", "gate", "samples", "awaiting_input",
}


def bc_session(seed=0, noise=NO_NOISE, max_ticks=400, **kw):
    w = generate_world(seed, "corridor")
    cfg = SessionConfig(mode="bc", max_ticks=max_ticks)
    return LabelingSession(w, noise, rng_seed=seed, config=cfg, **kw)


def confident_params():
    """Zero weights with biased heads: mean (0.5, ~0.88), variance e^-8."""
    p = zeros_like_params(init_params(0))
    p.fc2_b = np.array([0.0, 2.0, -8.0, -8.0], dtype=p.fc2_b.dtype)
    return p


def dagger_session(params, always_ask=False, max_ticks=40):
    w = generate_world(0, "corridor")
    cfg = SessionConfig(mode="dagger", always_ask=always_ask, max_ticks=max_ticks)
    return LabelingSession(w, NO_NOISE, rng_seed=0, config=cfg,
                           network_params=params)


def expert_click(session):
    clean, _, _ = session.engine.sense()
    a = select_expert_action(clean, session.engine.state)
    return {"type": "action", "ax": a.ax, "ay": a.ay}


# --- config -------------------------------------------------------------------

def test_session_config_validation():
    with pytest.raises(ValueError):
        SessionConfig(mode="teleop")
    with pytest.raises(ValueError):
        dagger_session(None)


# --- frame schema --------------------------------------------------------------

def test_bc_initial_frame_schema():
    s = bc_session()
    msgs = s.initial_messages()
    assert len(msgs) == 1
    f = msgs[0]
    assert set(f) == FRAME_KEYS
    assert f["type"] == "frame"
    assert f["version"] == PROTOCOL_VERSION
    assert f["tick"] == 0
    assert len(f["clean"]) == len(f["noisy"]) == len(f["reachable"]) == 625
    assert len(f["pose"]) == 3
    assert f["awaiting_input"] is True
    # bc mode: no network, so no preview and no measured gate values
    assert f["net"] is None
    assert f["preview"] == []
    assert f["gate"]["tau"] == pytest.approx(0.07)
    assert f["gate"]["chi"] == pytest.approx(0.1)
    assert f["gate"]["tau_hat"] is None and f["gate"]["chi_hat"] is None
    json.dumps(f)  # wire-serializable


def test_frame_grids_match_engine():
    s = bc_session(noise=dataclasses.replace(DEFAULT_NOISE, rng_seed=3))
    f = s.initial_messages()[0]
    clean, noisy, _ = s.engine.sense()
    assert f["clean"] == [int(v) for v in clean.cells.ravel()]
    assert f["noisy"] == [int(v) for v in noisy.cells.ravel()]
    assert f["reachable"] == [int(v) for v in reachable_mask(clean).ravel()]


# --- bc happy path ---------------------------------------------------------------

def test_accepted_click_advances_and_records():
    s = bc_session()
    s.initial_messages()
    msgs = s.handle_message(expert_click(s))
    assert msgs[0] == {"type": "ack", "tick": 0}
    assert msgs[1]["type"] == "frame"
    assert msgs[1]["tick"] == 1
    assert msgs[1]["samples"] == 1  # the accepted click counted exactly once
    assert len(s.dataset) == 1
    smp = s.dataset.samples[0]
    assert smp.src == "bc"
    assert smp.tau == 0.0


def test_n_clicks_n_samples():
    s = bc_session()
    s.initial_messages()
    n = 25
    for _ in range(n):
        msgs = s.handle_message(expert_click(s))
        assert msgs[0]["type"] == "ack"
    assert len(s.dataset) == n
    assert all(x.src == "bc" and x.tau == 0.0 for x in s.dataset.samples)


def test_sample_grid_is_the_noisy_grid():
    s = bc_session(noise=dataclasses.replace(DEFAULT_NOISE, rng_seed=9))
    s.initial_messages()
    _, noisy, _ = s.engine.sense()
    before = noisy.cells.copy()
    s.handle_message(expert_click(s))
    assert np.array_equal(s.dataset.samples[0].grid, before)


def test_replaying_message_log_reproduces_dataset():
    noise = dataclasses.replace(DEFAULT_NOISE, rng_seed=5)
    a = bc_session(noise=noise)
    a.initial_messages()
    log = []
    for _ in range(20):
        msg = expert_click(a)
        log.append(msg)
        a.handle_message(msg)
    b = bc_session(noise=noise)
    b.initial_messages()
    for msg in log:
        b.handle_message(msg)
    dump_a = "\n".join(sample_to_json(x) for x in a.dataset.samples)
    dump_b = "\n".join(sample_to_json(x) for x in b.dataset.samples)
    assert dump_a == dump_b


def test_incremental_dataset_file(tmp_path):
    path = tmp_path / "session.jsonl"
    s = bc_session(dataset_path=path)
    s.initial_messages()
    for _ in range(5):
        s.handle_message(expert_click(s))
    lines = path.read_text().splitlines()
    assert lines == [sample_to_json(x) for x in s.dataset.samples]


# --- rejection paths --------------------------------------------------------------

def test_action_before_frame_rejected():
    s = bc_session()
    msgs = s.handle_message({"type": "action", "ax": 0.5, "ay": 0.5})
    assert len(msgs) == 1
    assert msgs[0]["type"] == "reject"
    assert "no input awaited" in msgs[0]["reason"]


def test_non_numeric_action_rejected():
    s = bc_session()
    s.initial_messages()
    for bad in ({"type": "action"}, {"type": "action", "ax": "left", "ay": 0.5},
                {"type": "action", "ax": None, "ay": 0.1}):
        msgs = s.handle_message(bad)
        assert [m["type"] for m in msgs] == ["reject"]
    assert len(s.dataset) == 0


def test_out_of_range_click_rejected_with_frame_resend():
    s = bc_session()
    s.initial_messages()
    msgs = s.handle_message({"type": "action", "ax": 1.2, "ay": 0.5})
    assert msgs[0]["type"] == "reject"
    assert msgs[1]["type"] == "frame"
    assert msgs[1]["tick"] == 0  # state unchanged
    assert len(s.dataset) == 0


def test_occupied_click_rejected():
    s = bc_session()
    s.initial_messages()
    clean, _, _ = s.engine.sense()
    occ = np.argwhere(clean.cells == 1)[0]
    ax, ay = clean.frame.cell_to_normalized(int(occ[0]), int(occ[1]))
    msgs = s.handle_message({"type": "action", "ax": ax, "ay": ay})
    assert msgs[0]["type"] == "reject"
    assert "occupied" in msgs[0]["reason"]
    assert msgs[1]["type"] == "frame"
    assert s.engine.tick == 0 and len(s.dataset) == 0


def pocket_world():
    """Corridor plus a drivable pocket sealed off from it."""
    width, height, cs = 60, 24, 0.5
    rows = []
    for j in range(height - 1, -1, -1):
        row = ["#"] * width
        if 6 <= j <= 11:
            for i in range(4, 56):
                row[i] = "."
        if 15 <= j <= 17:  # disconnected pocket above the corridor
            for i in range(20, 26):
                row[i] = "."
        rows.append("".join(row))
    text = (
        f"UDLW v1\ncells: {width} {height}\ncell_size: {cs}\n"
        + "\n".join(rows)
        + "\nstart: 4.0 4.5 0.0\nref: 2\n4.0 4.5\n26.0 4.5\n"
    )
    return load_world(text)


def test_unreachable_click_rejected():
    w = pocket_world()
    s = LabelingSession(w, NO_NOISE, rng_seed=0, config=SessionConfig(mode="bc"))
    s.initial_messages()
    clean, _, _ = s.engine.sense()
    free = clean.cells == 0
    unreachable = free & ~reachable_mask(clean).astype(bool)
    assert unreachable.any()  # the pocket is inside the sensor window
    r, c = np.argwhere(unreachable)[0]
    ax, ay = clean.frame.cell_to_normalized(int(r), int(c))
    msgs = s.handle_message({"type": "action", "ax": ax, "ay": ay})
    assert msgs[0]["type"] == "reject"
    assert "reachable" in msgs[0]["reason"]
    assert msgs[1]["type"] == "frame"
    assert len(s.dataset) == 0


def test_unknown_messages_rejected():
    s = bc_session()
    s.initial_messages()
    assert s.handle_message({"type": "telemetry"})[0]["type"] == "reject"
    assert s.handle_message({})[0]["type"] == "reject"
    assert s.handle_message({"type": "control", "cmd": "warp"})[0]["type"] == "reject"


# --- control flow ---------------------------------------------------------------

def test_pause_resume_resends_frame():
    s = bc_session()
    first = s.initial_messages()[0]
    assert s.handle_message({"type": "control", "cmd": "pause"}) == []
    assert s.paused
    msgs = s.handle_message({"type": "control", "cmd": "resume"})
    assert msgs[0]["type"] == "frame"
    assert msgs[0]["tick"] == first["tick"]


def test_abort_emits_episode_end():
    s = bc_session()
    s.initial_messages()
    s.handle_message(expert_click(s))
    msgs = s.handle_message({"type": "control", "cmd": "abort"})
    assert msgs[0]["type"] == "episode_end"
    m = msgs[0]["metrics"]
    assert m["samples"] == 1
    assert m["finished"] is False
    assert set(m) == {"collision_rate", "safe_ratio", "mean_speed",
                      "samples", "finished"}


def test_resumed_session_resends_without_advancing():
    s = bc_session()
    s.initial_messages()
    again = s.initial_messages()  # e.g. client reconnected
    assert again[0]["type"] == "frame"
    assert again[0]["tick"] == 0
    assert s.engine.tick == 0


# --- dagger mode ----------------------------------------------------------------

def test_dagger_confident_network_drives_to_end():
    s = dagger_session(confident_params(), max_ticks=30)
    msgs = s.initial_messages()
    # tiny variance everywhere: never asks, runs out the tick budget
    assert [m["type"] for m in msgs] == ["episode_end"]
    assert s.engine.tick == 30
    assert len(s.dataset) == 0


def test_dagger_uncertain_network_asks_and_records_tau():
    params = zeros_like_params(init_params(0))  # variance 1.0 >= chi
    s = dagger_session(params, max_ticks=200)
    f = s.initial_messages()[0]
    assert f["type"] == "frame" and f["awaiting_input"] is True
    assert f["net"]["mean"] == [0.5, 0.5]
    assert f["gate"]["chi_hat"] == [1.0, 1.0]
    assert len(f["preview"]) > 0
    click = expert_click(s)
    s.handle_message(click)
    smp = s.dataset.samples[0]
    assert smp.src == "dagger-human"
    expected_tau = float(np.hypot(click["ax"] - 0.5, click["ay"] - 0.5))
    assert smp.tau == pytest.approx(expected_tau)


def test_dagger_always_ask_overrides_gate():
    s = dagger_session(confident_params(), always_ask=True, max_ticks=30)
    f = s.initial_messages()[0]
    assert f["type"] == "frame" and f["awaiting_input"] is True


# --- socket service ---------------------------------------------------------------

def recv_lines(fh, n):
    return [json.loads(fh.readline()) for _ in range(n)]


def test_serve_labeling_session_over_tcp(capsys):
    s = bc_session(max_ticks=300)
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    t = threading.Thread(
        target=serve_labeling_session, args=(s, "127.0.0.1", port), daemon=True
    )
    t.start()
    for _ in range(50):  # wait for the listener
        try:
            conn = socket.create_connection(("127.0.0.1", port), timeout=0.2)
            break
        except OSError:
            continue
    with conn:
        fh = conn.makefile("rb")
        frame = recv_lines(fh, 1)[0]
        assert frame["type"] == "frame"
        conn.sendall(b"not json\n")
        assert recv_lines(fh, 1)[0]["type"] == "reject"
        click = expert_click(s)
        conn.sendall((json.dumps(click) + "\n").encode())
        ack, nxt = recv_lines(fh, 2)
        assert ack == {"type": "ack", "tick": 0}
        assert nxt["type"] == "frame"
        conn.sendall(b'{"type":"control","cmd":"abort"}\n')
        assert recv_lines(fh, 1)[0]["type"] == "episode_end"
    t.join(timeout=5.0)
    assert not t.is_alive()
    assert len(s.dataset) == 1
