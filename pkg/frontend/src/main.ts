// Browser bootstrap: wires the gateway client and session state to the
// panel DOM. All logic lives in client/session/render; this file only
// routes events.

import { GatewayClient } from "./client.js";
import { ConsoleSession } from "./session.js";
import {
  renderBehaviorBoard,
  renderBusTail,
  renderDeployPanel,
  renderHistory,
  renderKbResults,
  renderWidgets,
  renderWorldMap,
} from "./render.js";
import type { BehaviorView, CommandKind, OperatorCommand } from "./types.js";

let client: GatewayClient | null = null;
let session: ConsoleSession | null = null;
let behaviors: BehaviorView[] = [];

const $ = (id: string) => document.getElementById(id) as HTMLElement;

function setStatus(text: string, cls: string): void {
  const el = $("status");
  el.textContent = text;
  el.className = cls;
}

async function issue(kind: CommandKind, args: Record<string, unknown>) {
  if (!client || !session) return;
  const command: OperatorCommand = {
    kind,
    args,
    operator_id: session.operatorId,
  };
  try {
    const ack = await client.command(kind, args);
    session.recordAck(command, ack);
  } catch (err) {
    setStatus(`command failed: ${err}`, "err");
  }
  $("history").innerHTML = renderHistory(session.commandHistory());
}

function redraw(): void {
  if (!session?.frame || !session.worldMeta) return;
  const frame = session.frame;
  $("map").innerHTML = renderWorldMap(frame, session.worldMeta);
  $("board").innerHTML = renderBehaviorBoard(frame, behaviors);
  $("bus").innerHTML = renderBusTail(frame.envelopes);
  $("widgets").innerHTML = renderWidgets(frame);
  $("bundles").innerHTML = renderDeployPanel(frame.bundles);
  $("history").innerHTML = renderHistory(session.commandHistory());
}

async function refreshBehaviors(): Promise<void> {
  if (!client) return;
  behaviors = (await client.behaviors()).behaviors;
}

function connect(): void {
  const url = ($("gateway-url") as HTMLInputElement).value;
  session = new ConsoleSession(url);
  client = new GatewayClient(url, {
    operatorId: session.operatorId,
    onFrame: (frame) => {
      if (session!.acceptFrame(frame)) redraw();
    },
    onStatus: (state) => {
      session!.setConnection(state);
      setStatus(state, state);
      if (state === "open") {
        // journal history survives disconnections: refetch and merge
        client!
          .journal()
          .then((r) => session!.mergeJournal(r.journal))
          .then(() => refreshBehaviors())
          .then(redraw)
          .catch(() => undefined);
      }
    },
  });
  client.world().then((meta) => {
    session!.worldMeta = meta;
    client!.connect();
  });
}

function wireActions(): void {
  $("connect").addEventListener("click", connect);

  $("say").addEventListener("click", () => {
    const box = $("utterance") as HTMLInputElement;
    if (box.value.trim()) {
      issue("inject_utterance", { text: box.value.trim() });
      box.value = "";
    }
  });

  $("set-clock").addEventListener("click", () => {
    const box = $("clock") as HTMLInputElement;
    if (box.value) issue("set_clock", { time: box.value });
  });

  $("terminate").addEventListener("click", () => issue("force_terminate", {}));

  $("kb-run").addEventListener("click", async () => {
    if (!client) return;
    const pattern = ($("kb-pattern") as HTMLInputElement).value.trim();
    if (!pattern) return;
    try {
      const result = await client.kbQuery([pattern]);
      $("kb-results").innerHTML = renderKbResults(
        result.bindings,
        result.version,
      );
    } catch (err) {
      $("kb-results").textContent = `query failed: ${err}`;
    }
  });

  const affordanceArgs = () => ({
    s: ($("aff-situation") as HTMLInputElement).value.trim(),
    p: "mario:afford",
    o: ($("aff-goal") as HTMLInputElement).value.trim(),
  });
  $("aff-assert").addEventListener("click", () =>
    issue("kb_assert", affordanceArgs()),
  );
  $("aff-retract").addEventListener("click", () =>
    issue("kb_retract", affordanceArgs()),
  );

  // delegated clicks: map cells move the user; boards carry action buttons
  document.body.addEventListener("click", (ev) => {
    const el = ev.target as HTMLElement;
    if (el.classList.contains("cell") && !el.classList.contains("obstacle")) {
      issue("move_user", { x: Number(el.dataset.x), y: Number(el.dataset.y) });
    } else if (el.classList.contains("force-goal")) {
      issue("force_goal", { goal: el.dataset.goal });
    } else if (el.classList.contains("widget-press")) {
      issue("press_widget", {
        widget_id: el.dataset.widget,
        action: el.dataset.action,
      });
    } else if (el.classList.contains("bundle-op") && client) {
      client
        .deployOp(el.dataset.op!, { bundle_id: el.dataset.bundle })
        .then(() => refreshBehaviors())
        .then(redraw)
        .catch((err) => setStatus(`deploy failed: ${err}`, "err"));
    }
  });
}

document.addEventListener("DOMContentLoaded", wireActions);
