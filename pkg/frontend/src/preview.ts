/** Debounced preview orchestration: ephemeral identify + segment.
 *
 * Preview requests fire as the user clicks; bursts are collapsed by a
 * debounce window and responses arriving out of order are dropped (the
 * latest request wins). Failures surface through onError without touching
 * the session.
 */

import type { ApiClient } from "./api.js";
import type { PointsPayload, SegmentResponse } from "./types.js";

export interface PreviewResult {
  bundleId: string;
  segment: SegmentResponse;
}

export interface PreviewRequest {
  image: Blob;
  mask: Blob;
  points: PointsPayload;
  /** frame to preview against; defaults to the reference image */
  target?: Blob;
  task?: string;
}

type Scheduler = (fn: () => void, ms: number) => unknown;
type Canceller = (handle: unknown) => void;

export class Previewer {
  private timer: unknown = null;
  private requestCounter = 0;

  onResult: (result: PreviewResult) => void = () => {};
  onError: (error: unknown) => void = () => {};

  constructor(
    private api: ApiClient,
    private debounceMs = 250,
    private schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
    private cancel: Canceller = (h) => clearTimeout(h as number),
  ) {}

  /** Queue a preview; earlier pending requests are superseded. */
  request(req: PreviewRequest): void {
    if (this.timer !== null) this.cancel(this.timer);
    const token = ++this.requestCounter;
    this.timer = this.schedule(() => {
      this.timer = null;
      void this.run(req, token);
    }, this.debounceMs);
  }

  private async run(req: PreviewRequest, token: number): Promise<void> {
    try {
      const identified = await this.api.identify({
        image: req.image,
        mask: req.mask,
        points: req.points,
        task: req.task ?? "preview",
        ephemeral: true,
      });
      if (token !== this.requestCounter) return; // superseded mid-flight
      const segment = await this.api.segment({
        bundleId: identified.bundle_id,
        image: req.target ?? req.image,
      });
      if (token !== this.requestCounter) return;
      this.onResult({ bundleId: identified.bundle_id, segment });
    } catch (error) {
      if (token !== this.requestCounter) return;
      this.onError(error);
    }
  }
}
