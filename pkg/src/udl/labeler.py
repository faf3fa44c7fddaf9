"""Human labeling sessions over a line-delimited JSON socket protocol.

The session logic lives in LabelingSession, a plain message-in/message-out
state machine with no I/O of its own, so recorded message logs replay into
identical datasets.  serve_labeling_session wraps it in a single-client TCP
loop for the browser frontend (which connects through a local bridge).
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass
from typing import Optional

from udl.dagger import DaggerConfig, gate
from udl.data import Dataset, Sample, sample_to_json
from udl.grid import LookAheadAction, NoiseSpec, reachable_mask
from udl.net import NetworkParams, forward
from udl.sim import EpisodeEngine, metrics_from_trace
from udl.vehicle import VehicleParams, rollout_to_point
from udl.world import WorldMap

PROTOCOL_VERSION = 1


@dataclass
class SessionConfig:
    mode: str = "bc"  # bc | dagger
    always_ask: bool = False
    max_ticks: int = 2000
    rollout_preview_horizon: float = 3.0

    def __post_init__(self) -> None:
        if self.mode not in ("bc", "dagger"):
            raise ValueError(f"unknown session mode {self.mode!r}")


class LabelingSession:
    """One episode driven by a human expert (optionally gated by a network).

    ``handle_message`` consumes one decoded client message and returns the
    list of messages to send back.  ``initial_messages`` yields the first
    frame.  In dagger mode the network drives confident ticks by itself and
    only pauses for input when its variance trips the gate threshold (the
    action-discrepancy arm needs the human label, so it is measured after
    the click and recorded with the sample).
    """

    def __init__(
        self,
        world: WorldMap,
        noise: NoiseSpec,
        rng_seed: int,
        config: SessionConfig = SessionConfig(),
        network_params: Optional[NetworkParams] = None,
        dagger_config: DaggerConfig = DaggerConfig(),
        params: VehicleParams = VehicleParams(),
        dataset_path=None,
    ) -> None:
        if config.mode == "dagger" and network_params is None:
            raise ValueError("dagger mode requires network parameters")
        self.config = config
        self.network_params = network_params
        self.dagger_config = dagger_config
        self.params = params
        self.dataset = Dataset()
        self.dataset_path = dataset_path
        self.engine = EpisodeEngine(
            world, noise, rng_seed, params, config.max_ticks
        )
        self.paused = False
        self.aborted = False
        self.awaiting_input = False
        self._net_out = None

    # -- frame construction ------------------------------------------------

    def _build_frame(self) -> dict:
        clean, noisy, _ = self.engine.sense()
        pose = self.engine.state.pose
        net = None
        preview: list[list[float]] = []
        gate_state: dict = {
            "tau": self.dagger_config.tau,
            "chi": self.dagger_config.chi,
            "tau_hat": None,
            "chi_hat": None,
        }
        if self._net_out is not None:
            net = {
                "mean": list(self._net_out.mean),
                "variance": list(self._net_out.variance),
            }
            gate_state["chi_hat"] = list(self._net_out.variance)
            action = LookAheadAction(self._net_out.mean[0], self._net_out.mean[1])
            roll = rollout_to_point(
                self.engine.state, action,
                self.config.rollout_preview_horizon, self.params,
                self.engine.frame,
            )
            anchor = self.engine.anchor()
            for p in roll.poses:
                f, r = anchor.to_local(p.x, p.y)
                preview.append([round(f, 4), round(r, 4)])
        return {
            "type": "frame",
            "version": PROTOCOL_VERSION,
            "tick": self.engine.tick,
            "clean": [int(v) for v in clean.cells.ravel()],
            "noisy": [int(v) for v in noisy.cells.ravel()],
            "reachable": [int(v) for v in reachable_mask(clean).ravel()],
            "pose": [pose.x, pose.y, pose.theta],
            "preview": preview,
            "net": net,
            "gate": gate_state,
            "samples": len(self.dataset),
            "awaiting_input": self.awaiting_input,
        }

    def _episode_end(self) -> dict:
        m = metrics_from_trace(self.engine.trace, self.engine.world.path_length)
        return {
            "type": "episode_end",
            "metrics": {
                "collision_rate": m.collision_rate,
                "safe_ratio": m.safe_ratio,
                "mean_speed": m.mean_speed,
                "samples": len(self.dataset),
                "finished": self.engine.trace.finished,
            },
        }

    # -- stepping ----------------------------------------------------------

    def _needs_human(self) -> bool:
        if self.config.mode == "bc" or self.config.always_ask:
            return True
        self._net_out = forward(self.network_params, self.engine.sense()[1])
        return max(self._net_out.variance) >= self.dagger_config.chi

    def _pump(self) -> list[dict]:
        """Advance network-driven ticks until input is needed or the run ends."""
        out: list[dict] = []
        while not self.engine.done and not self.paused and not self.aborted:
            self._net_out = None
            if self._needs_human():
                self.awaiting_input = True
                out.append(self._build_frame())
                return out
            action = LookAheadAction(self._net_out.mean[0], self._net_out.mean[1])
            self.engine.apply_action(action)
        if self.engine.done or self.aborted:
            out.append(self._episode_end())
        return out

    def initial_messages(self) -> list[dict]:
        if self.awaiting_input:
            return [self._build_frame()]  # resumed session: resend, don't advance
        return self._pump()

    def handle_message(self, msg: dict) -> list[dict]:
        mtype = msg.get("type")
        if mtype == "control":
            return self._handle_control(msg)
        if mtype == "action":
            return self._handle_action(msg)
        return [{"type": "reject", "reason": f"unknown message type {mtype!r}"}]

    def _handle_control(self, msg: dict) -> list[dict]:
        cmd = msg.get("cmd")
        if cmd == "pause":
            self.paused = True
            return []
        if cmd == "resume":
            self.paused = False
            if self.awaiting_input:
                return [self._build_frame()]
            return self._pump()
        if cmd == "abort":
            self.aborted = True
            return [self._episode_end()]
        return [{"type": "reject", "reason": f"unknown control {cmd!r}"}]

    def _handle_action(self, msg: dict) -> list[dict]:
        if not self.awaiting_input:
            return [{"type": "reject", "reason": "no input awaited"}]
        try:
            ax, ay = float(msg["ax"]), float(msg["ay"])
        except (KeyError, TypeError, ValueError):
            return [{"type": "reject", "reason": "action needs numeric ax and ay"}]
        if not (0.0 <= ax <= 1.0 and 0.0 <= ay <= 1.0):
            return [
                {"type": "reject", "reason": "action out of [0, 1] range"},
                self._build_frame(),
            ]
        clean, noisy, _ = self.engine.sense()
        row, col = clean.frame.normalized_to_cell(ax, ay)
        if clean.cells[row, col]:
            return [
                {"type": "reject", "reason": "clicked cell is occupied"},
                self._build_frame(),
            ]
        if not reachable_mask(clean)[row, col]:
            return [
                {"type": "reject", "reason": "clicked cell is not reachable"},
                self._build_frame(),
            ]

        action = LookAheadAction(ax, ay)
        tau_hat = 0.0
        src = "bc"
        if self.config.mode == "dagger" and self._net_out is not None:
            decision = gate(self._net_out, action, self.dagger_config)
            tau_hat = decision.tau_hat
            src = "dagger-human"
        sample = Sample(noisy.cells, ax, ay, tau_hat, src)
        self.dataset.append(sample)
        if self.dataset_path is not None:
            with open(self.dataset_path, "a", encoding="utf-8", newline="\n") as fh:
                fh.write(sample_to_json(sample) + "\n")

        self.awaiting_input = False
        self.engine.apply_action(action)
        return [{"type": "ack", "tick": self.engine.tick - 1}] + self._pump()


def serve_labeling_session(
    session: LabelingSession, host: str = "127.0.0.1", port: int = 0
) -> None:
    """Serve one session over TCP, one client at a time.

    A disconnect pauses the simulation; the next client resumes from the
    same frame.  Returns when the episode ends or the session is aborted.
    Pass port 0 to let the OS choose (the bound port is printed).
    """
    srv = socket.create_server((host, port))
    print(f"labeling session on {srv.getsockname()[0]}:{srv.getsockname()[1]}", flush=True)
    try:
        while not (session.engine.done or session.aborted):
            conn, _ = srv.accept()
            try:
                _send_all(conn, session.initial_messages())
                file = conn.makefile("rb")
                for raw in file:
                    raw = raw.strip()
                    if not raw:
                        continue
                    try:
                        msg = json.loads(raw.decode("utf-8"))
                    except (UnicodeDecodeError, json.JSONDecodeError):
                        _send_all(conn, [{"type": "reject", "reason": "malformed JSON line"}])
                        continue
                    replies = session.handle_message(msg)
                    _send_all(conn, replies)
                    if session.engine.done or session.aborted:
                        break
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                conn.close()
    finally:
        srv.close()


def _send_all(conn: socket.socket, messages: list[dict]) -> None:
    for msg in messages:
        conn.sendall(json.dumps(msg, separators=(",", ":")).encode() + b"\n")
