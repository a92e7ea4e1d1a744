/** Annotation tool wiring: upload, click 3 points per object, preview, commit. */

import { ApiClient, ApiError } from "./api.js";
import { decodePackedMask, iou, labeledToObjectMasks } from "./mask.js";
import { Previewer } from "./preview.js";
import { AnnotationCanvas, decodeImageFile, OBJECT_COLORS, toGray } from "./render.js";
import { AnnotationSession, POINTS_PER_OBJECT } from "./session.js";

const api = new ApiClient("");
const session = new AnnotationSession();
const previewer = new Previewer(api);

const el = {
  imageInput: document.getElementById("image-input") as HTMLInputElement,
  maskInput: document.getElementById("mask-input") as HTMLInputElement,
  frameInput: document.getElementById("frame-input") as HTMLInputElement,
  canvas: document.getElementById("canvas") as HTMLCanvasElement,
  objects: document.getElementById("objects") as HTMLDivElement,
  undo: document.getElementById("undo") as HTMLButtonElement,
  commit: document.getElementById("commit") as HTMLButtonElement,
  status: document.getElementById("status") as HTMLDivElement,
  banner: document.getElementById("banner") as HTMLDivElement,
  preview: document.getElementById("preview") as HTMLImageElement,
  previewIou: document.getElementById("preview-iou") as HTMLDivElement,
  heatmaps: document.getElementById("heatmaps") as HTMLDivElement,
  task: document.getElementById("task") as HTMLInputElement,
};

let reference: ImageData | null = null;
let referenceBlob: Blob | null = null;
let maskBlob: Blob | null = null;
let labeledGray: Uint8Array | null = null;
let testFrameBlob: Blob | null = null;
let activeObject = 0;
let view: AnnotationCanvas | null = null;
let previewUnion: Uint8Array | null = null;

function setStatus(text: string, warn = false): void {
  el.status.textContent = text;
  el.status.className = warn ? "warn" : "";
}

function setOffline(offline: boolean, detail = ""): void {
  el.banner.hidden = !offline;
  if (offline) el.banner.textContent = `service unreachable — clicks are kept, retry will resume (${detail})`;
}

function redraw(): void {
  if (!view || !reference) return;
  const overlays = [];
  const markers = [];
  for (let i = 0; i < session.objectCount; i++) {
    overlays.push({ mask: session.objectMask(i), color: OBJECT_COLORS[i % OBJECT_COLORS.length] });
    const [r, g, b] = OBJECT_COLORS[i % OBJECT_COLORS.length];
    for (const [x, y] of session.pointsFor(i)) {
      markers.push({ x, y, color: `rgb(${r},${g},${b})` });
    }
  }
  view.draw({ reference, overlays, markers, previewUnion });
}

function renderObjectButtons(): void {
  el.objects.innerHTML = "";
  for (let i = 0; i < session.objectCount; i++) {
    const btn = document.createElement("button");
    const placed = session.pointsFor(i).length;
    btn.textContent = `object ${i} (${placed}/${POINTS_PER_OBJECT})`;
    btn.className = i === activeObject ? "active" : "";
    btn.onclick = () => {
      activeObject = i;
      renderObjectButtons();
    };
    el.objects.appendChild(btn);
  }
}

async function maybeLoadReference(): Promise<void> {
  const imageFile = el.imageInput.files?.[0];
  const maskFile = el.maskInput.files?.[0];
  if (!imageFile || !maskFile) return;
  reference = await decodeImageFile(imageFile);
  const maskImage = await decodeImageFile(maskFile);
  if (maskImage.width !== reference.width || maskImage.height !== reference.height) {
    setStatus("mask dimensions do not match the reference image", true);
    return;
  }
  referenceBlob = imageFile;
  maskBlob = maskFile;
  labeledGray = toGray(maskImage);
  const objects = labeledToObjectMasks(labeledGray);
  if (objects.length === 0) {
    setStatus("mask selects no objects", true);
    return;
  }
  session.setReference(reference.width, reference.height, objects);
  activeObject = 0;
  previewUnion = null;
  view = new AnnotationCanvas(el.canvas, reference.width, reference.height);
  setStatus(`loaded ${reference.width}x${reference.height} reference with ${objects.length} object(s); click ${POINTS_PER_OBJECT} points per object`);
  renderObjectButtons();
  redraw();
}

function firePreview(): void {
  if (!session.canPreview() || !referenceBlob || !maskBlob) return;
  previewer.request({
    image: referenceBlob,
    mask: maskBlob,
    points: session.pointsPayload(),
    target: testFrameBlob ?? undefined,
    task: el.task.value || "preview",
  });
}

previewer.onResult = async (result) => {
  setOffline(false);
  el.preview.src = `data:image/png;base64,${result.segment.masked_image_png}`;
  previewUnion = decodePackedMask(result.segment.union_mask);
  // on the reference frame the uploaded mask is the ground truth
  if (!testFrameBlob && labeledGray) {
    const gt = Uint8Array.from(labeledGray, (v) => (v !== 0 ? 1 : 0));
    el.previewIou.textContent = `preview IoU vs reference mask: ${iou(previewUnion, gt).toFixed(4)}`;
  } else {
    el.previewIou.textContent = "previewing uploaded test frame";
  }
  redraw();
  await renderHeatmaps(result.bundleId);
};

previewer.onError = (error) => {
  if (error instanceof ApiError) setStatus(`preview failed: ${error.message}`, true);
  else setOffline(true, String(error));
};

async function renderHeatmaps(bundleId: string): Promise<void> {
  if (!referenceBlob) return;
  el.heatmaps.innerHTML = "";
  const target = testFrameBlob ?? referenceBlob;
  for (let objectId = 0; objectId < session.objectCount; objectId++) {
    for (const [kind, index] of [["type1", 0], ["type2", 0], ["type2", 1], ["type2", 2]] as const) {
      try {
        const blob = await api.similarity({ bundleId, objectId, kind, index, image: target });
        const img = document.createElement("img");
        img.src = URL.createObjectURL(blob);
        img.title = `object ${objectId} ${kind}[${index}]`;
        el.heatmaps.appendChild(img);
      } catch {
        return; // ephemeral bundle may have been evicted; previews refresh on next click
      }
    }
  }
}

el.imageInput.onchange = () => void maybeLoadReference();
el.maskInput.onchange = () => void maybeLoadReference();
el.frameInput.onchange = () => {
  testFrameBlob = el.frameInput.files?.[0] ?? null;
  firePreview();
};

el.canvas.onclick = (event) => {
  if (!view) return;
  const { x, y } = view.toImageCoords(event);
  const result = session.pickPoint(activeObject, x, y);
  if (!result.ok) {
    const reasons: Record<string, string> = {
      complete: `object ${activeObject} already has ${POINTS_PER_OBJECT} points (undo to replace)`,
      "outside-mask": "that click is outside the object's mask — rejected",
      "outside-image": "click is outside the image",
      "no-reference": "load a reference image and mask first",
    };
    setStatus(reasons[result.reason ?? ""] ?? "click rejected", true);
    return;
  }
  setStatus(`placed point ${session.pointsFor(activeObject).length}/${POINTS_PER_OBJECT} on object ${activeObject}`);
  renderObjectButtons();
  redraw();
  firePreview();
};

el.undo.onclick = () => {
  if (session.undo(activeObject)) {
    setStatus(`removed last point of object ${activeObject}`);
    renderObjectButtons();
    redraw();
    firePreview();
  }
};

el.commit.onclick = async () => {
  if (!session.canCommit() || !referenceBlob || !maskBlob) return;
  el.commit.disabled = true;
  try {
    const result = await api.identify({
      image: referenceBlob,
      mask: maskBlob,
      points: session.pointsPayload(),
      task: el.task.value || "task",
    });
    setOffline(false);
    setStatus(`committed bundle ${result.bundle_id}`);
  } catch (error) {
    if (error instanceof ApiError) setStatus(`commit failed: ${error.message}`, true);
    else setOffline(true, String(error));
  } finally {
    el.commit.disabled = !session.canCommit();
  }
};

session.onChange(() => {
  el.commit.disabled = !session.canCommit();
});

void api
  .healthz()
  .then((h) => setStatus(`connected — backend: ${h.backend}`))
  .catch((e) => setOffline(true, String(e)));
