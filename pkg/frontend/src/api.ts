/** Typed client for the segmentation service's HTTP API.
 *
 * Every numeric result shown in the UI comes from these endpoints; the UI
 * itself never computes features.
 */

import type {
  AdaptResponse,
  BundleSummary,
  IdentifyResponse,
  PointsPayload,
  SegmentResponse,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function raise(resp: Response): Promise<never> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") detail = body.error;
    else if (body && body.detail) detail = JSON.stringify(body.detail);
  } catch {
    /* non-JSON error body */
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private baseUrl = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) await raise(resp);
    return (await resp.json()) as T;
  }

  async healthz(): Promise<{ status: string; backend: string }> {
    return this.json("/healthz");
  }

  async listBundles(): Promise<BundleSummary[]> {
    const body = await this.json<{ bundles: BundleSummary[] }>("/api/bundles");
    return body.bundles;
  }

  async identify(args: {
    image: Blob;
    mask: Blob;
    points: PointsPayload;
    task?: string;
    ephemeral?: boolean;
  }): Promise<IdentifyResponse> {
    const form = new FormData();
    form.append("image", args.image, "reference.png");
    form.append("mask", args.mask, "mask.png");
    form.append("points", JSON.stringify(args.points));
    if (args.task) form.append("task", args.task);
    if (args.ephemeral) form.append("ephemeral", "true");
    return this.json("/api/identify", { method: "POST", body: form });
  }

  async segment(args: {
    bundleId: string;
    image: Blob;
    debug?: boolean;
  }): Promise<SegmentResponse> {
    const form = new FormData();
    form.append("bundle_id", args.bundleId);
    form.append("image", args.image, "frame.png");
    if (args.debug) form.append("debug", "true");
    return this.json("/api/segment", { method: "POST", body: form });
  }

  async adapt(args: { bundleId: string; steps?: number; lr?: number }): Promise<AdaptResponse> {
    return this.json("/api/adapt", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ bundle_id: args.bundleId, steps: args.steps, lr: args.lr }),
    });
  }

  /** 16-bit grayscale similarity heatmap as a PNG blob. */
  async similarity(args: {
    bundleId: string;
    objectId: number;
    kind: "type1" | "type2";
    index?: number;
    image: Blob;
  }): Promise<Blob> {
    const form = new FormData();
    form.append("bundle_id", args.bundleId);
    form.append("object_id", String(args.objectId));
    form.append("kind", args.kind);
    form.append("index", String(args.index ?? 0));
    form.append("image", args.image, "frame.png");
    const resp = await this.fetchImpl(this.baseUrl + "/api/similarity", {
      method: "POST",
      body: form,
    });
    if (!resp.ok) await raise(resp);
    return resp.blob();
  }
}
