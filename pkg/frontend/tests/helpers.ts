import { GRID_CELLS, SessionFrame } from "../src/protocol.js";

export function makeFrame(overrides: Partial<SessionFrame> = {}): SessionFrame {
  return {
    type: "frame",
    version: 1,
    tick: 0,
    clean: new Array(GRID_CELLS).fill(0),
    noisy: new Array(GRID_CELLS).fill(0),
    reachable: new Array(GRID_CELLS).fill(1),
    pose: [0, 0, 0],
    preview: [],
    net: null,
    gate: { tau: 0.07, chi: 0.1, tau_hat: null, chi_hat: null },
    samples: 0,
    awaiting_input: true,
    ...overrides,
  };
}
