import { describe, expect, it } from "vitest";

import { LabelerClient } from "../src/client.js";
import { cellToCanvas, makeTransform } from "../src/transform.js";
import { makeFrame } from "./helpers.js";

const T = makeTransform(600, 600);

function wired() {
  const sent: string[] = [];
  const client = new LabelerClient((line) => sent.push(line));
  return { client, sent };
}

function feedFrame(client: LabelerClient, overrides = {}) {
  client.receive(JSON.stringify(makeFrame(overrides)) + "\n");
}

describe("LabelerClient", () => {
  it("applies frames in arrival order", () => {
    const { client } = wired();
    feedFrame(client, { tick: 0 });
    feedFrame(client, { tick: 1 });
    expect(client.state.frame?.tick).toBe(1);
  });

  it("keeps the last good frame on a malformed line", () => {
    const { client } = wired();
    feedFrame(client, { tick: 5 });
    client.receive("}{ nonsense\n");
    expect(client.state.frame?.tick).toBe(5);
    expect(client.state.lastError).toMatch(/JSON/);
    feedFrame(client, { tick: 6 });
    expect(client.state.frame?.tick).toBe(6);
    expect(client.state.lastError).toBeNull();
  });

  it("never fabricates actions: nothing is sent without a click", () => {
    const { client, sent } = wired();
    feedFrame(client);
    feedFrame(client, { tick: 1 });
    expect(sent).toHaveLength(0);
  });

  it("sends a snapped action on click and tracks the ack", () => {
    const { client, sent } = wired();
    feedFrame(client);
    const target = cellToCanvas(20, 12, T);
    const action = client.click(target.x + 1, target.y - 1, T);
    expect(action).toEqual({ ax: 0.5, ay: 4 / 24 });
    expect(JSON.parse(sent[0])).toEqual({ type: "action", ax: 0.5, ay: 4 / 24 });
    expect(client.state.pendingClick).toEqual(action);
    // a second click while one is in flight is ignored
    expect(client.click(target.x, target.y, T)).toBeNull();
    client.receive('{"type":"ack","tick":0}\n');
    expect(client.state.pendingClick).toBeNull();
    expect(client.state.lastExpert).toEqual(action);
  });

  it("ignores clicks when not awaiting input", () => {
    const { client, sent } = wired();
    feedFrame(client, { awaiting_input: false });
    expect(client.clickable).toBe(false);
    expect(client.click(300, 300, T)).toBeNull();
    expect(sent).toHaveLength(0);
  });

  it("ignores clicks outside the grid area", () => {
    const { client, sent } = wired();
    const t = makeTransform(700, 600, 30);
    feedFrame(client);
    expect(client.click(2, 2, t)).toBeNull();
    expect(sent).toHaveLength(0);
  });

  it("clears the pending click and records the reason on reject", () => {
    const { client } = wired();
    feedFrame(client);
    client.click(300, 300, T);
    client.receive('{"type":"reject","reason":"clicked cell is occupied"}\n');
    expect(client.state.pendingClick).toBeNull();
    expect(client.state.lastError).toBe("clicked cell is occupied");
    expect(client.clickable).toBe(true); // may try again
  });

  it("pause blocks clicking until resume", () => {
    const { client, sent } = wired();
    feedFrame(client);
    client.pause();
    expect(JSON.parse(sent.at(-1)!)).toEqual({ type: "control", cmd: "pause" });
    expect(client.clickable).toBe(false);
    client.resume();
    expect(JSON.parse(sent.at(-1)!)).toEqual({ type: "control", cmd: "resume" });
    expect(client.clickable).toBe(true);
  });

  it("stores episode metrics and stops accepting clicks", () => {
    const { client } = wired();
    feedFrame(client);
    client.receive(
      '{"type":"episode_end","metrics":{"collision_rate":0,"safe_ratio":1,"mean_speed":1.2,"samples":7,"finished":true}}\n',
    );
    expect(client.state.episodeEnd?.samples).toBe(7);
    expect(client.clickable).toBe(false);
  });

  it("notifies on every applied update", () => {
    const { client } = wired();
    let n = 0;
    client.onUpdate = () => n++;
    feedFrame(client);
    client.receive('{"type":"ack","tick":0}\n');
    expect(n).toBe(2);
  });
});
