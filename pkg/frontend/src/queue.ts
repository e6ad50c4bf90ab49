import { Verdict } from "./types.js";

export interface QueuedDecision {
  id: string;
  verdict: Verdict;
  annotator: string;
}

/**
 * FIFO buffer for decisions that have not reached the server yet.
 *
 * drain() posts from the head and removes an item only after its post
 * resolves, so a failure leaves that item and the whole tail queued in
 * order for the next attempt: a decision is delivered or still queued,
 * never lost silently.
 */
export class OfflineQueue {
  private items: QueuedDecision[] = [];

  get size(): number {
    return this.items.length;
  }

  enqueue(decision: QueuedDecision): void {
    this.items.push(decision);
  }

  snapshot(): QueuedDecision[] {
    return [...this.items];
  }

  /** Remove and return the head item; used when the server refused it. */
  discardHead(): QueuedDecision | undefined {
    return this.items.shift();
  }

  async drain(post: (decision: QueuedDecision) => Promise<void>): Promise<number> {
    let delivered = 0;
    while (this.items.length > 0) {
      const head = this.items[0];
      if (head === undefined) break;
      await post(head);
      this.items.shift();
      delivered += 1;
    }
    return delivered;
  }
}
