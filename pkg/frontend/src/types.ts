/** Wire formats of the segmentation service. */

export interface PackedMask {
  width: number;
  height: number;
  /** base64 of a row-major 1-bit-per-pixel field, most significant bit first */
  bits: string;
}

export interface IdentifyResponse {
  bundle_id: string;
  objects: number;
}

export interface SegmentResponse {
  union_mask: PackedMask;
  object_masks: PackedMask[];
  masked_image_png: string; // base64 PNG
  diagnostics?: unknown;
}

export interface AdaptResponse {
  w1: number;
  w2: number;
  initial_loss: number;
  final_loss: number;
}

export interface BundleSummary {
  bundle_id: string;
  task_name: string;
  objects: number;
  weights: { w1: number; w2: number };
}

export interface PointsPayload {
  objects: { object_id: number; points: [number, number][] }[];
}
