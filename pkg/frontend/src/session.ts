/** Annotation session state: the one-time labeling of a reference image.
 *
 * Holds the reference dimensions, per-object masks (for click validation
 * mirroring the server's rule) and the clicked points, at most 3 per object.
 * Committing is possible only when every object has exactly 3 points inside
 * its mask.
 */

import type { PointsPayload } from "./types.js";

export const POINTS_PER_OBJECT = 3;

export interface PickResult {
  ok: boolean;
  reason?: "complete" | "outside-image" | "outside-mask" | "no-reference";
}

export type SessionListener = () => void;

export class AnnotationSession {
  width = 0;
  height = 0;
  private objectMasks: Uint8Array[] = [];
  /** per object, clicked points as [x, y] in reference-image pixels */
  private points: [number, number][][] = [];
  private listeners: SessionListener[] = [];

  onChange(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const l of this.listeners) l();
  }

  get objectCount(): number {
    return this.objectMasks.length;
  }

  get hasReference(): boolean {
    return this.objectMasks.length > 0;
  }

  setReference(width: number, height: number, objectMasks: Uint8Array[]): void {
    if (objectMasks.length === 0) throw new Error("reference mask selects no objects");
    for (const m of objectMasks) {
      if (m.length !== width * height) throw new Error("object mask does not match image size");
    }
    this.width = width;
    this.height = height;
    this.objectMasks = objectMasks;
    this.points = objectMasks.map(() => []);
    this.emit();
  }

  objectMask(objectId: number): Uint8Array {
    return this.objectMasks[objectId];
  }

  pointsFor(objectId: number): readonly [number, number][] {
    return this.points[objectId] ?? [];
  }

  /** Try to place a point for an object; rejects out-of-mask clicks. */
  pickPoint(objectId: number, x: number, y: number): PickResult {
    if (!this.hasReference) return { ok: false, reason: "no-reference" };
    const pts = this.points[objectId];
    if (pts.length >= POINTS_PER_OBJECT) return { ok: false, reason: "complete" };
    x = Math.floor(x);
    y = Math.floor(y);
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      return { ok: false, reason: "outside-image" };
    }
    if (!this.objectMasks[objectId][y * this.width + x]) {
      return { ok: false, reason: "outside-mask" };
    }
    pts.push([x, y]);
    this.emit();
    return { ok: true };
  }

  /** Remove the object's most recent point. */
  undo(objectId: number): boolean {
    const pts = this.points[objectId];
    if (!pts || pts.length === 0) return false;
    pts.pop();
    this.emit();
    return true;
  }

  /** True once every object carries exactly 3 in-mask points. */
  canCommit(): boolean {
    return (
      this.hasReference &&
      this.points.every((pts) => pts.length === POINTS_PER_OBJECT)
    );
  }

  /** True once at least one point is placed (enough for a preview). */
  canPreview(): boolean {
    return this.canCommit();
  }

  pointsPayload(): PointsPayload {
    return {
      objects: this.points.map((pts, objectId) => ({
        object_id: objectId,
        points: pts.map(([x, y]) => [x, y] as [number, number]),
      })),
    };
  }
}
