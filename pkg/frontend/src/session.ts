import { ApiError, ReviewApi } from "./api.js";
import { OfflineQueue } from "./queue.js";
import { PendingItem, Progress, Verdict } from "./types.js";

export type SessionPhase = "loading" | "reviewing" | "done";

export interface SessionView {
  phase: SessionPhase;
  current: PendingItem | null;
  progress: Progress | null;
  queued: number;
  online: boolean;
  lastError: string;
}

export interface SessionOptions {
  queue?: OfflineQueue;
  annotator?: string;
  onChange?: () => void;
}

/**
 * One annotator's pass over the pending queue.
 *
 * Operations are serialized on an internal promise chain, so a burst of key
 * presses is applied one decision at a time in press order. Decisions apply
 * optimistically: local state advances immediately, delivery goes through
 * the offline queue, and the displayed progress is reconciled against
 * /api/progress after every successful exchange. An item that has been
 * decided in this session is never shown again except through an explicit
 * undo, which re-surfaces the item so the next verdict re-posts over the
 * old one (the service keeps the last write per id).
 */
export class ReviewSession {
  private readonly api: ReviewApi;
  private readonly queue: OfflineQueue;
  private readonly annotator: string;
  private readonly onChange: () => void;

  private chain: Promise<void> = Promise.resolve();
  private pendingCache: PendingItem[] = [];
  private decided = new Map<string, Verdict>(); // local truth, last write per id
  private baseline = new Map<string, Verdict>(); // decisions reflected in syncedProgress
  private history: PendingItem[] = [];
  private currentItem: PendingItem | null = null;
  private phase: SessionPhase = "loading";
  private syncedProgress: Progress | null = null;
  private isOnline = true;
  private lastError = "";

  constructor(api: ReviewApi, options: SessionOptions = {}) {
    this.api = api;
    this.queue = options.queue ?? new OfflineQueue();
    this.annotator = options.annotator ?? "";
    this.onChange = options.onChange ?? (() => {});
  }

  view(): SessionView {
    return {
      phase: this.phase,
      current: this.currentItem,
      progress: this.optimisticProgress(),
      queued: this.queue.size,
      online: this.isOnline,
      lastError: this.lastError,
    };
  }

  /** Resolves once every operation issued so far has settled. */
  idle(): Promise<void> {
    return this.chain;
  }

  start(): Promise<void> {
    return this.run(async () => {
      await this.refresh();
      this.advance();
    });
  }

  keep(): Promise<void> {
    return this.decideCurrent("keep");
  }

  drop(): Promise<void> {
    return this.decideCurrent("drop");
  }

  /** Re-surface the most recently decided item so it can be re-posted. */
  undo(): Promise<void> {
    return this.run(async () => {
      const item = this.history.pop();
      if (item === undefined) return;
      this.currentItem = item;
      this.phase = "reviewing";
      this.notify();
    });
  }

  /** Deliver anything queued, then reconcile; used after coming back online. */
  sync(): Promise<void> {
    return this.run(async () => {
      await this.flush();
      if (this.isOnline) {
        await this.refresh();
      }
      this.advance();
    });
  }

  private decideCurrent(verdict: Verdict): Promise<void> {
    return this.run(async () => {
      const item = this.currentItem;
      if (item === null) return;
      this.decided.set(item.id, verdict);
      this.history.push(item);
      this.queue.enqueue({ id: item.id, verdict, annotator: this.annotator });
      this.currentItem = null;
      this.notify();
      await this.flush();
      if (this.isOnline) {
        await this.refresh();
      }
      this.advance();
    });
  }

  private run(op: () => Promise<void>): Promise<void> {
    const step = () =>
      op().catch((error) => {
        this.lastError = error instanceof Error ? error.message : String(error);
        this.notify();
      });
    this.chain = this.chain.then(step, step);
    return this.chain;
  }

  /** Fill the slot with the first cached pending item not yet decided here. */
  private advance(): void {
    if (this.currentItem === null) {
      this.currentItem = this.pendingCache.find((item) => !this.decided.has(item.id)) ?? null;
    }
    this.phase = this.currentItem === null ? "done" : "reviewing";
    this.notify();
  }

  private async refresh(): Promise<void> {
    try {
      const pending = await this.api.pending();
      const progress = await this.api.progress();
      this.pendingCache = pending;
      this.syncedProgress = progress;
      this.baseline = new Map(this.decided);
      this.isOnline = true;
    } catch (error) {
      if (error instanceof ApiError) throw error;
      this.isOnline = false;
    }
    this.notify();
  }

  private async flush(): Promise<void> {
    try {
      await this.queue.drain((decision) =>
        this.api.decide(decision.id, decision.verdict, decision.annotator).then(() => {}),
      );
      this.isOnline = true;
    } catch (error) {
      if (error instanceof ApiError) {
        // The server received and refused this decision; the same payload
        // cannot succeed on retry. Surface it and unblock the queue.
        const bad = this.queue.discardHead();
        this.lastError = `decision for ${bad?.id ?? "?"} rejected: ${error.message}`;
      } else {
        this.isOnline = false;
      }
    }
    this.notify();
  }

  /**
   * Last reconciled progress plus everything decided locally since then.
   *
   * The session is the only writer, so folding its own later decisions over
   * the synced counts predicts exactly what /api/progress will report once
   * the queue drains.
   */
  private optimisticProgress(): Progress | null {
    if (this.syncedProgress === null) return null;
    const progress = { ...this.syncedProgress };
    const seen = new Map(this.baseline);
    for (const [id, verdict] of this.decided) {
      const previous = seen.get(id);
      if (previous === verdict) continue;
      if (previous === undefined) {
        progress.decided += 1;
      } else if (previous === "keep") {
        progress.kept -= 1;
      } else {
        progress.dropped -= 1;
      }
      if (verdict === "keep") {
        progress.kept += 1;
      } else {
        progress.dropped += 1;
      }
      seen.set(id, verdict);
    }
    return progress;
  }

  private notify(): void {
    this.onChange();
  }
}
