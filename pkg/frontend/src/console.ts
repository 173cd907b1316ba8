import { StaleQueryError, type ConsoleApi } from "./api.js";
import { render, type ConsoleState } from "./render.js";
import { SessionStats } from "./stats.js";

export interface ConsoleOptions {
  pollIntervalMs?: number;
  maxBackoffMs?: number;
}

const DEFAULT_POLL_MS = 1000;
const DEFAULT_MAX_BACKOFF_MS = 10000;

/**
 * Polling loop plus label submission. Reads are free; the only mutation is
 * POST /labels, and at most one is in flight at a time.
 */
export class LabelConsole {
  private readonly state: ConsoleState = {
    query: null,
    stats: new SessionStats(),
    banner: null,
    notice: null,
    busy: false,
  };
  private readonly pollMs: number;
  private readonly maxBackoffMs: number;
  private delayMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = true;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ConsoleApi,
    options: ConsoleOptions = {},
  ) {
    this.pollMs = options.pollIntervalMs ?? DEFAULT_POLL_MS;
    this.maxBackoffMs = options.maxBackoffMs ?? DEFAULT_MAX_BACKOFF_MS;
    this.delayMs = this.pollMs;
  }

  start(): void {
    if (!this.stopped) return;
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  /** Current retry delay; grows while the service is unreachable. */
  get currentDelayMs(): number {
    return this.delayMs;
  }

  private async tick(): Promise<void> {
    try {
      const [pending, metrics] = await Promise.all([
        this.api.pendingQuery(),
        this.api.metrics(),
      ]);
      this.state.stats.update(metrics);
      this.state.query = pending;
      this.state.banner = null;
      this.delayMs = this.pollMs;
    } catch {
      this.delayMs = Math.min(this.delayMs * 2, this.maxBackoffMs);
      this.state.banner = `service unreachable, retrying in ${Math.round(this.delayMs / 1000)}s`;
    }
    this.draw();
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), this.delayMs);
    }
  }

  async submit(index: number, label: string): Promise<void> {
    if (this.state.busy) return;
    this.state.busy = true;
    this.draw();
    try {
      await this.api.submitLabel(index, label);
      this.state.query = null;
      this.state.notice = null;
    } catch (error) {
      if (error instanceof StaleQueryError) {
        // somebody else resolved it, or it expired; drop the stale view
        this.state.query = null;
        this.state.notice = `label not applied: ${error.message}`;
      } else {
        this.state.notice = "label submit failed, try again";
      }
    } finally {
      this.state.busy = false;
      this.draw();
    }
  }

  private draw(): void {
    render(this.root, this.state, {
      onAssign: (index, label) => void this.submit(index, label),
      onNewPerson: (index, name) => void this.submit(index, name),
    });
  }
}
