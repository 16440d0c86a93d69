// Panel renderers are pure string builders; assert on the markup they emit.

import { describe, expect, it } from "vitest";

import {
  esc,
  renderBehaviorBoard,
  renderBusTail,
  renderDeployPanel,
  renderHistory,
  renderKbResults,
  renderWidgets,
  renderWorldMap,
} from "../src/render.js";
import type { BehaviorView, StateFrame, WorldMeta } from "../src/types.js";

const META: WorldMeta = {
  width: 4,
  height: 3,
  obstacles: [[1, 1]],
  tags: [{ tag_id: "keys", cell: [3, 2] }],
  dock: [0, 2],
};

function frame(overrides: Partial<StateFrame> = {}): StateFrame {
  return {
    tick: 9,
    time_of_day: "12:01",
    active: {
      instance_id: "bi-1",
      behavior_id: "http://example.org/mario#beh/music",
      goal_id: "http://example.org/mario#goal/play-music",
      state: "Active",
      pc: 2,
      started_at: 8,
      remaining_ticks: 55,
      bindings: {},
    },
    suspended: [],
    report: {
      tick: 9,
      fulfilled: [],
      decision: { kind: "none", goal: null },
      transitions: [],
      step: { kind: "Progressed" },
      warnings: [],
    },
    world: {
      robot: { x: 2, y: 0, heading: 0 },
      user: { x: 0, y: 0, heading: 0 },
      battery: 99.8,
      widgets: [
        { widget_id: "music-controls", kind: "button_row", buttons: ["stop"] },
      ],
    },
    bundles: [
      {
        bundle_id: "music-player",
        version: "1.0.0",
        kind: "behavior",
        state: "Started",
        autostart: true,
        requires: [],
        unresolved: [],
      },
    ],
    envelopes: [
      {
        g: 1,
        topic: "speech/out",
        seq: 1,
        tick: 9,
        publisher: "cap:t2s",
        payload: { text: "la la" },
      },
    ],
    journal_len: 1,
    ...overrides,
  };
}

const BEHAVIORS: BehaviorView[] = [
  {
    behavior_id: "http://example.org/mario#beh/music",
    achieves: "http://example.org/mario#goal/play-music",
    priority: 60,
    preemptive: true,
    plan_length: 6,
    timeout_ticks: 60,
    required_capabilities: ["cap:t2s"],
  },
];

describe("world map", () => {
  it("marks robot, user, obstacles, dock, and tags", () => {
    const html = renderWorldMap(frame(), META);
    expect(html).toContain('class="cell robot" data-x="2" data-y="0"');
    expect(html).toContain('class="cell user" data-x="0" data-y="0"');
    expect(html).toContain('class="cell obstacle" data-x="1" data-y="1"');
    expect(html).toContain('class="cell dock"');
    expect(html).toContain('title="tag keys"');
    expect(html).toContain("battery 99.8%");
    expect(html).toContain("tick 9");
  });
});

describe("behavior board", () => {
  it("shows the active instance with its priority", () => {
    const html = renderBehaviorBoard(frame(), BEHAVIORS);
    expect(html).toContain("Active");
    expect(html).toContain("music");
    expect(html).toContain("pri 60");
    expect(html).toContain('data-goal="http://example.org/mario#goal/play-music"');
  });

  it("renders the suspension stack top-first", () => {
    const base = frame();
    const html = renderBehaviorBoard(
      frame({
        suspended: [
          { ...base.active!, instance_id: "bi-7", behavior_id: "b#one" },
          { ...base.active!, instance_id: "bi-8", behavior_id: "b#two" },
        ],
      }),
      BEHAVIORS,
    );
    expect(html.indexOf("bi-8")).toBeLessThan(html.indexOf("bi-7"));
  });

  it("shows idle when nothing is active", () => {
    expect(renderBehaviorBoard(frame({ active: null }), [])).toContain("idle");
  });
});

describe("bus tail and kb results", () => {
  it("renders newest envelope first with topic and payload", () => {
    const html = renderBusTail(frame().envelopes);
    expect(html).toContain("speech/out");
    expect(html).toContain("la la");
  });

  it("renders bindings as rows and escapes values", () => {
    const html = renderKbResults([{ x: "mario:<u1>" }], 7);
    expect(html).toContain("?x = mario:&lt;u1&gt;");
    expect(html).toContain("version 7");
    expect(renderKbResults([], 7)).toContain("no bindings");
  });
});

describe("deploy panel and widgets", () => {
  it("offers stop for started bundles and start otherwise", () => {
    const started = renderDeployPanel(frame().bundles);
    expect(started).toContain('data-op="stop"');
    const stopped = renderDeployPanel([
      { ...frame().bundles[0], state: "Stopped" },
    ]);
    expect(stopped).toContain('data-op="start"');
  });

  it("flags unresolved requirements", () => {
    const html = renderDeployPanel([
      { ...frame().bundles[0], unresolved: ["cap:tts2"] },
    ]);
    expect(html).toContain("unresolved: cap:tts2");
  });

  it("renders widget buttons as pressable", () => {
    const html = renderWidgets(frame());
    expect(html).toContain('data-widget="music-controls"');
    expect(html).toContain('data-action="stop"');
  });
});

describe("history and escaping", () => {
  it("renders command acks with application ticks", () => {
    const html = renderHistory([
      {
        journal_index: 0,
        kind: "inject_utterance",
        args: {},
        status: "applied",
        applied_tick: 12,
      },
      {
        journal_index: 1,
        kind: "force_goal",
        args: {},
        status: "failed",
        applied_tick: 13,
        error: "NoBehaviorForGoal",
      },
    ]);
    expect(html).toContain("#0 inject_utterance → applied @ tick 12");
    expect(html).toContain("NoBehaviorForGoal");
  });

  it("escapes markup in untrusted strings", () => {
    expect(esc('<script>"&')).toBe("&lt;script&gt;&quot;&amp;");
  });
});
