/** Canvas drawing helpers: reference view, mask tints, point markers. */

import { maskToOverlay } from "./mask.js";

export const OBJECT_COLORS: [number, number, number, number][] = [
  [255, 140, 0, 110],
  [0, 200, 120, 110],
  [200, 60, 255, 110],
  [0, 170, 255, 110],
  [255, 220, 0, 110],
];

/** Decode an uploaded image file into raw pixels via an offscreen canvas. */
export async function decodeImageFile(file: Blob): Promise<ImageData> {
  const bitmap = await createImageBitmap(file);
  const canvas = document.createElement("canvas");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  return ctx.getImageData(0, 0, bitmap.width, bitmap.height);
}

/** Grayscale plane from decoded pixels (labeled masks arrive as gray PNGs). */
export function toGray(image: ImageData): Uint8Array {
  const out = new Uint8Array(image.width * image.height);
  for (let i = 0; i < out.length; i++) out[i] = image.data[4 * i];
  return out;
}

export class AnnotationCanvas {
  readonly scale: number;

  constructor(
    private canvas: HTMLCanvasElement,
    private width: number,
    private height: number,
    displayWidth = 420,
  ) {
    this.scale = Math.max(1, Math.floor(displayWidth / width));
    canvas.width = width * this.scale;
    canvas.height = height * this.scale;
    canvas.style.imageRendering = "pixelated";
  }

  /** Canvas click position -> reference-image pixel coordinates. */
  toImageCoords(event: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    const x = Math.floor(((event.clientX - rect.left) / rect.width) * this.width);
    const y = Math.floor(((event.clientY - rect.top) / rect.height) * this.height);
    return { x, y };
  }

  draw(args: {
    reference: ImageData | null;
    overlays: { mask: Uint8Array; color: [number, number, number, number] }[];
    markers: { x: number; y: number; color: string }[];
    previewUnion?: Uint8Array | null;
  }): void {
    const ctx = this.canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (args.reference) {
      ctx.drawImage(imageDataToCanvas(args.reference), 0, 0, this.canvas.width, this.canvas.height);
    }
    for (const overlay of args.overlays) {
      const pixels = new ImageData(maskToOverlay(overlay.mask, overlay.color), this.width, this.height);
      ctx.drawImage(imageDataToCanvas(pixels), 0, 0, this.canvas.width, this.canvas.height);
    }
    if (args.previewUnion) {
      const outline = new ImageData(
        maskToOverlay(args.previewUnion, [255, 255, 255, 70]),
        this.width,
        this.height,
      );
      ctx.drawImage(imageDataToCanvas(outline), 0, 0, this.canvas.width, this.canvas.height);
    }
    for (const m of args.markers) {
      ctx.beginPath();
      ctx.arc((m.x + 0.5) * this.scale, (m.y + 0.5) * this.scale, Math.max(3, this.scale / 2), 0, 2 * Math.PI);
      ctx.fillStyle = m.color;
      ctx.fill();
      ctx.lineWidth = 1.5;
      ctx.strokeStyle = "#111";
      ctx.stroke();
    }
  }
}

function imageDataToCanvas(image: ImageData): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = image.width;
  canvas.height = image.height;
  canvas.getContext("2d")!.putImageData(image, 0, 0);
  return canvas;
}
