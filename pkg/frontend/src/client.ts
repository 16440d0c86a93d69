// Gateway client: one WebSocket frame stream plus JSON commands.
//
// The socket and fetch implementations are injectable so the client runs
// identically in the browser and under tests/e2e (node + ws).

import type {
  BehaviorView,
  BundleView,
  CommandAck,
  CommandKind,
  ConnectionState,
  JournalEntry,
  KbQueryResult,
  StateFrame,
  WorldMeta,
} from "./types.js";

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;
export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{ ok: boolean; status: number; json(): Promise<unknown>; text(): Promise<string> }>;

export interface GatewayClientOptions {
  operatorId?: string;
  socketFactory?: SocketFactory;
  fetchImpl?: FetchLike;
  backoffMs?: number[];
  onFrame?: (frame: StateFrame) => void;
  onStatus?: (state: ConnectionState) => void;
  setTimeoutImpl?: (fn: () => void, ms: number) => unknown;
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 5000];

export class GatewayError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

export class GatewayClient {
  readonly baseUrl: string;
  readonly operatorId: string;
  private readonly socketFactory: SocketFactory;
  private readonly fetchImpl: FetchLike;
  private readonly backoffMs: number[];
  private readonly setTimeoutImpl: (fn: () => void, ms: number) => unknown;
  private socket: SocketLike | null = null;
  private attempts = 0;
  private closed = false;
  onFrame: (frame: StateFrame) => void;
  onStatus: (state: ConnectionState) => void;

  constructor(baseUrl: string, options: GatewayClientOptions = {}) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.operatorId = options.operatorId ?? "wizard";
    this.socketFactory =
      options.socketFactory ??
      ((url: string) => new WebSocket(url) as unknown as SocketLike);
    this.fetchImpl = options.fetchImpl ?? (fetch as unknown as FetchLike);
    this.backoffMs = options.backoffMs ?? DEFAULT_BACKOFF;
    this.setTimeoutImpl =
      options.setTimeoutImpl ?? ((fn, ms) => setTimeout(fn, ms));
    this.onFrame = options.onFrame ?? (() => undefined);
    this.onStatus = options.onStatus ?? (() => undefined);
  }

  get streamUrl(): string {
    return this.baseUrl.replace(/^http/, "ws") + "/stream";
  }

  connect(): void {
    if (this.closed) return;
    this.onStatus("connecting");
    const socket = this.socketFactory(this.streamUrl);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.onStatus("open");
    };
    socket.onmessage = (ev) => {
      try {
        this.onFrame(JSON.parse(String(ev.data)) as StateFrame);
      } catch {
        // a malformed frame never kills the stream
      }
    };
    socket.onclose = () => {
      this.onStatus("closed");
      if (this.closed) return;
      const delay =
        this.backoffMs[Math.min(this.attempts, this.backoffMs.length - 1)];
      this.attempts += 1;
      this.setTimeoutImpl(() => this.connect(), delay);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path);
    if (!response.ok) {
      throw new GatewayError(await response.text(), response.status);
    }
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      throw new GatewayError(await response.text(), response.status);
    }
    return (await response.json()) as T;
  }

  async command(
    kind: CommandKind,
    args: Record<string, unknown> = {},
  ): Promise<CommandAck> {
    return this.post<CommandAck>("/command", {
      kind,
      args,
      operator_id: this.operatorId,
    });
  }

  async deployOp(
    op: string,
    args: Record<string, unknown> = {},
  ): Promise<{ bundles: BundleView[] }> {
    return this.post("/deploy", { op, ...args, operator_id: this.operatorId });
  }

  async health(): Promise<{ status: string; tick: number }> {
    return this.get("/health");
  }

  async world(): Promise<WorldMeta> {
    return this.get("/world");
  }

  async behaviors(): Promise<{ behaviors: BehaviorView[] }> {
    return this.get("/behaviors");
  }

  async bundles(): Promise<{ bundles: BundleView[] }> {
    return this.get("/bundles");
  }

  async journal(): Promise<{ journal: JournalEntry[] }> {
    return this.get("/journal");
  }

  async kbQuery(patterns: string[]): Promise<KbQueryResult> {
    const qs = patterns
      .map((p) => "pattern=" + encodeURIComponent(p))
      .join("&");
    return this.get(`/kb/query?${qs}`);
  }
}
