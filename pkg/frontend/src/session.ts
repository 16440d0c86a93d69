// Console session state: the single source every panel renders from.
//
// Rendered state derives solely from StateFrames and command acks. Frames
// must arrive with strictly increasing ticks; anything stale is discarded.
// Command history mirrors the server journal and survives reconnects by
// merging the refetched journal over the locally recorded acks.

import type {
  CommandAck,
  ConnectionState,
  JournalEntry,
  OperatorCommand,
  StateFrame,
  WorldMeta,
} from "./types.js";

export interface HistoryEntry {
  journal_index: number;
  kind: string;
  args: Record<string, unknown>;
  status: string;
  applied_tick: number | null;
  error?: string | null;
}

export class ConsoleSession {
  readonly gatewayUrl: string;
  readonly operatorId: string;
  connection: ConnectionState = "closed";
  frame: StateFrame | null = null;
  lastTick = -1;
  staleDropped = 0;
  worldMeta: WorldMeta | null = null;
  private history = new Map<number, HistoryEntry>();

  constructor(gatewayUrl: string, operatorId = "wizard") {
    this.gatewayUrl = gatewayUrl;
    this.operatorId = operatorId;
  }

  /** Accept a frame if it advances the tick; returns whether it rendered. */
  acceptFrame(frame: StateFrame): boolean {
    if (frame.tick <= this.lastTick) {
      this.staleDropped += 1;
      return false;
    }
    this.lastTick = frame.tick;
    this.frame = frame;
    return true;
  }

  setConnection(state: ConnectionState): void {
    this.connection = state;
  }

  recordAck(command: OperatorCommand, ack: CommandAck): HistoryEntry {
    const entry: HistoryEntry = {
      journal_index: ack.journal_index,
      kind: command.kind,
      args: command.args,
      status: ack.status,
      applied_tick: ack.applied_tick,
      error: ack.error ?? null,
    };
    this.history.set(entry.journal_index, entry);
    return entry;
  }

  /** Merge the server journal (authoritative) over local history. */
  mergeJournal(entries: JournalEntry[]): void {
    for (const entry of entries) {
      this.history.set(entry.index, {
        journal_index: entry.index,
        kind: entry.kind,
        args: entry.args,
        status: entry.status,
        applied_tick: entry.applied_tick ?? null,
        error: entry.error ?? null,
      });
    }
  }

  commandHistory(): HistoryEntry[] {
    return [...this.history.values()].sort(
      (a, b) => a.journal_index - b.journal_index,
    );
  }
}
