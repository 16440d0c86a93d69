// Wire types mirroring the gateway's JSON payloads.

export interface Pose {
  x: number;
  y: number;
  heading: number;
}

export interface InstanceSummary {
  instance_id: string;
  behavior_id: string;
  goal_id: string;
  state: string;
  pc: number;
  started_at: number;
  remaining_ticks: number;
  bindings: Record<string, string>;
}

export interface DecisionView {
  kind: string;
  goal: string | null;
}

export interface TickReportView {
  tick: number;
  fulfilled: Array<[string, Record<string, string>]>;
  decision: DecisionView;
  transitions: Array<Record<string, unknown>>;
  step: { kind: string; reason?: string } | null;
  warnings: Array<{ kind: string; detail: string }>;
}

export interface EnvelopeView {
  g: number;
  topic: string;
  seq: number;
  tick: number;
  publisher: string;
  payload: Record<string, unknown>;
}

export interface WidgetView {
  widget_id: string;
  kind: string;
  [extra: string]: unknown;
}

export interface BundleView {
  bundle_id: string;
  version: string;
  kind: string;
  state: string;
  autostart: boolean;
  requires: string[];
  unresolved: string[];
}

export interface StateFrame {
  tick: number;
  time_of_day: string;
  active: InstanceSummary | null;
  suspended: InstanceSummary[];
  report: TickReportView;
  world: {
    robot: Pose;
    user: Pose;
    battery: number;
    widgets: WidgetView[];
  };
  bundles: BundleView[];
  envelopes: EnvelopeView[];
  journal_len: number;
}

export interface WorldMeta {
  width: number;
  height: number;
  obstacles: Array<[number, number]>;
  tags: Array<{ tag_id: string; cell: [number, number] }>;
  dock: [number, number] | null;
}

export interface BehaviorView {
  behavior_id: string;
  achieves: string;
  priority: number | null;
  preemptive: boolean | null;
  plan_length: number;
  timeout_ticks: number;
  required_capabilities: string[];
}

export type CommandKind =
  | "inject_utterance"
  | "press_widget"
  | "move_user"
  | "set_clock"
  | "force_goal"
  | "force_terminate"
  | "force_suspend"
  | "force_resume"
  | "kb_assert"
  | "kb_retract"
  | "deploy_op";

export interface OperatorCommand {
  kind: CommandKind;
  args: Record<string, unknown>;
  operator_id: string;
}

export interface CommandAck {
  journal_index: number;
  status: "applied" | "failed" | "accepted" | "rejected";
  applied_tick: number | null;
  error?: string | null;
}

export interface JournalEntry {
  index: number;
  kind: string;
  args: Record<string, unknown>;
  operator_id: string;
  issued_tick: number;
  status: string;
  applied_tick?: number;
  error?: string;
}

export interface KbQueryResult {
  version: number;
  bindings: Array<Record<string, string>>;
}

export type ConnectionState = "connecting" | "open" | "closed";
