// Panel renderers: pure (frame, meta) -> HTML string functions.
// Keeping them DOM-free makes every panel testable without a browser.

import type {
  BehaviorView,
  BundleView,
  EnvelopeView,
  StateFrame,
  WorldMeta,
} from "./types.js";
import type { HistoryEntry } from "./session.js";

export function esc(text: unknown): string {
  return String(text)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function short(iri: string): string {
  const idx = iri.lastIndexOf("/");
  return idx >= 0 ? iri.slice(idx + 1) : iri;
}

export function renderWorldMap(frame: StateFrame, meta: WorldMeta): string {
  const obstacles = new Set(meta.obstacles.map(([x, y]) => `${x},${y}`));
  const tags = new Map(meta.tags.map((t) => [`${t.cell[0]},${t.cell[1]}`, t.tag_id]));
  const robot = `${Math.round(frame.world.robot.x)},${Math.round(frame.world.robot.y)}`;
  const user = `${Math.round(frame.world.user.x)},${Math.round(frame.world.user.y)}`;
  const dock = meta.dock ? `${meta.dock[0]},${meta.dock[1]}` : null;
  const rows: string[] = [];
  for (let y = 0; y < meta.height; y++) {
    const cells: string[] = [];
    for (let x = 0; x < meta.width; x++) {
      const key = `${x},${y}`;
      let cls = "cell";
      let label = "";
      let title = `(${x},${y})`;
      if (obstacles.has(key)) {
        cls += " obstacle";
        label = "";
      } else if (key === robot) {
        cls += " robot";
        label = "R";
        title = "robot";
      } else if (key === user) {
        cls += " user";
        label = "U";
        title = "user (click elsewhere to move)";
      } else if (dock === key) {
        cls += " dock";
        label = "D";
        title = "dock";
      } else if (tags.has(key)) {
        cls += " tag";
        label = "t";
        title = `tag ${tags.get(key)}`;
      }
      cells.push(
        `<div class="${cls}" data-x="${x}" data-y="${y}" title="${esc(title)}">${label}</div>`,
      );
    }
    rows.push(`<div class="map-row">${cells.join("")}</div>`);
  }
  const battery = `battery ${frame.world.battery.toFixed(1)}%`;
  return `<div class="map" data-tick="${frame.tick}">${rows.join("")}</div>` +
    `<div class="map-meta">tick ${frame.tick} · ${esc(frame.time_of_day)} · ${esc(battery)}</div>`;
}

export function renderBehaviorBoard(
  frame: StateFrame,
  behaviors: BehaviorView[],
): string {
  const byGoal = new Map(behaviors.map((b) => [b.achieves, b]));
  const row = (slot: string, inst: StateFrame["active"]) => {
    if (!inst) return `<div class="inst none">${slot}: idle</div>`;
    const priority = byGoal.get(inst.goal_id)?.priority ?? "?";
    return (
      `<div class="inst ${slot.toLowerCase()}" data-instance="${esc(inst.instance_id)}">` +
      `<b>${slot}</b> ${esc(short(inst.behavior_id))} ` +
      `<span class="goal">${esc(short(inst.goal_id))}</span> ` +
      `<span class="pri">pri ${esc(priority)}</span> ` +
      `<span class="pc">step ${inst.pc}</span> ` +
      `<span class="state">${esc(inst.state)}</span></div>`
    );
  };
  const suspended = frame.suspended
    .slice()
    .reverse() // top of the resume stack first
    .map((inst) => row("Suspended", inst))
    .join("");
  const registered = behaviors
    .map(
      (b) =>
        `<div class="beh" data-behavior="${esc(b.behavior_id)}">` +
        `${esc(short(b.behavior_id))} → ${esc(short(b.achieves))} ` +
        `<span class="pri">pri ${esc(b.priority ?? "?")}${b.preemptive ? " ⚡" : ""}</span>` +
        `<button class="force-goal" data-goal="${esc(b.achieves)}">force</button></div>`,
    )
    .join("");
  return (
    `<div class="board">${row("Active", frame.active)}${suspended}</div>` +
    `<div class="registered">${registered || "no behaviors registered"}</div>`
  );
}

export function renderBusTail(envelopes: EnvelopeView[], limit = 25): string {
  const rows = envelopes
    .slice(-limit)
    .reverse()
    .map(
      (e) =>
        `<div class="env"><span class="tick">${e.tick}</span>` +
        `<span class="topic">${esc(e.topic)}</span>` +
        `<span class="payload">${esc(JSON.stringify(e.payload))}</span></div>`,
    )
    .join("");
  return rows || '<div class="empty">no envelopes yet</div>';
}

export function renderKbResults(
  bindings: Array<Record<string, string>>,
  version: number,
): string {
  if (!bindings.length) {
    return `<div class="empty">no bindings (version ${version})</div>`;
  }
  const rows = bindings
    .map(
      (b) =>
        "<tr>" +
        Object.keys(b)
          .sort()
          .map((k) => `<td>?${esc(k)} = ${esc(b[k])}</td>`)
          .join("") +
        "</tr>",
    )
    .join("");
  return `<table class="kb">${rows}</table>` +
    `<div class="kb-meta">${bindings.length} bindings · version ${version}</div>`;
}

export function renderDeployPanel(bundles: BundleView[]): string {
  if (!bundles.length) return '<div class="empty">no bundles</div>';
  return bundles
    .map((b) => {
      const toggles =
        b.state === "Started"
          ? `<button class="bundle-op" data-op="stop" data-bundle="${esc(b.bundle_id)}">stop</button>`
          : `<button class="bundle-op" data-op="start" data-bundle="${esc(b.bundle_id)}">start</button>`;
      const unresolved = b.unresolved.length
        ? ` <span class="warn">unresolved: ${esc(b.unresolved.join(", "))}</span>`
        : "";
      return (
        `<div class="bundle state-${esc(b.state)}" data-bundle="${esc(b.bundle_id)}">` +
        `<b>${esc(b.bundle_id)}</b> ${esc(b.version)} · ${esc(b.kind)} · ` +
        `<span class="state">${esc(b.state)}</span>${unresolved} ${toggles}</div>`
      );
    })
    .join("");
}

export function renderWidgets(frame: StateFrame): string {
  const widgets = frame.world.widgets;
  if (!widgets.length) return '<div class="empty">screen is blank</div>';
  return widgets
    .map((w) => {
      const buttons = Array.isArray(w["buttons"])
        ? (w["buttons"] as string[])
            .map(
              (b) =>
                `<button class="widget-press" data-widget="${esc(w.widget_id)}" ` +
                `data-action="${esc(b)}">${esc(b)}</button>`,
            )
            .join("")
        : `<button class="widget-press" data-widget="${esc(w.widget_id)}" ` +
          `data-action="press">press</button>`;
      return (
        `<div class="widget kind-${esc(w.kind)}">` +
        `<span class="wid">${esc(w.widget_id)}</span> (${esc(w.kind)}) ${buttons}</div>`
      );
    })
    .join("");
}

export function renderHistory(entries: HistoryEntry[], limit = 20): string {
  const rows = entries
    .slice(-limit)
    .reverse()
    .map((e) => {
      const where =
        e.applied_tick === null ? "pending" : `tick ${e.applied_tick}`;
      const err = e.error ? ` <span class="warn">${esc(e.error)}</span>` : "";
      return (
        `<div class="cmd status-${esc(e.status)}">#${e.journal_index} ` +
        `${esc(e.kind)} → ${esc(e.status)} @ ${esc(where)}${err}</div>`
      );
    })
    .join("");
  return rows || '<div class="empty">no commands sent</div>';
}
