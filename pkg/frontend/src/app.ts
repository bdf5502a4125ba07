// Three-view single page app: Classify, Contribute, Stats. All data
// comes from the service; the browser never computes a verdict itself.

import {
  ClassifyResponse,
  DeepwasteApi,
  LABELS,
  Label,
  ServiceError,
  validateUpload,
} from "./api";

const VIEWS = ["classify", "contribute", "stats"] as const;
type View = (typeof VIEWS)[number];

/** The service sorts predictions by confidence descending, so the first
 * entry is the argmax; on exact ties it is the first-listed one. */
export function verdictOf(resp: ClassifyResponse): Label {
  return resp.predictions[0].label;
}

/** Flag near-ties so a verdict like 34/33/33 is not presented as sure. */
export function isLowConfidence(resp: ClassifyResponse): boolean {
  const [a, b] = resp.predictions;
  return b !== undefined && a.confidence - b.confidence < 0.01;
}

export function formatPct(confidence: number): string {
  return `${(confidence * 100).toFixed(1)}%`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

interface Draft {
  file: File;
  label: Label | null;
  notes: string;
}

export function createApp(root: HTMLElement, api: DeepwasteApi): void {
  root.innerHTML = "";

  const header = el("header");
  header.appendChild(el("h1", {}, "deepwaste"));
  const nav = el("nav", { "aria-label": "views" });
  const tabs: Record<View, HTMLButtonElement> = {} as Record<View, HTMLButtonElement>;
  const sections: Record<View, HTMLElement> = {} as Record<View, HTMLElement>;
  for (const view of VIEWS) {
    const b = el("button", { "data-tab": view }, view);
    b.addEventListener("click", () => showView(view));
    tabs[view] = b;
    nav.appendChild(b);
  }
  header.appendChild(nav);
  root.appendChild(header);

  const main = el("main");
  root.appendChild(main);

  function showView(view: View): void {
    for (const v of VIEWS) {
      sections[v].hidden = v !== view;
      tabs[v].setAttribute("aria-current", v === view ? "page" : "false");
    }
    if (view === "stats") void loadStats();
  }

  // ---- classify -------------------------------------------------------

  const classify = el("section", { id: "view-classify", "aria-label": "classify" });
  sections.classify = classify;

  const fileInput = el("input", {
    type: "file",
    id: "classify-file",
    accept: "image/png,image/jpeg",
    "aria-label": "choose an image to classify",
  });
  const cameraButton = el("button", { id: "camera-button" }, "use camera");
  const captureButton = el("button", { id: "capture-button", hidden: "" }, "capture");
  const cameraNote = el("p", { id: "camera-note", class: "muted", hidden: "" });
  const video = el("video", { id: "camera-video", hidden: "", autoplay: "" });
  const preview = el("img", { id: "classify-preview", alt: "selected image", hidden: "" });
  const spinner = el("p", { id: "classify-spinner", role: "status", hidden: "" }, "classifying…");
  const errorBanner = el("div", { id: "classify-error", role: "alert", hidden: "" });
  const errorText = el("span");
  const retryButton = el("button", { id: "classify-retry" }, "retry");
  errorBanner.append(errorText, " ", retryButton);

  const result = el("div", { id: "classify-result", hidden: "" });
  const verdict = el("p", { id: "verdict", class: "verdict" });
  const hint = el("p", { id: "low-confidence-hint", class: "muted", hidden: "" },
    "low confidence: the top classes are nearly tied");
  const note = el("p", { id: "label-note", class: "note", hidden: "" });
  const bars = el("ul", { id: "confidence-bars", class: "bars" });
  const barFills: Record<Label, HTMLElement> = {} as Record<Label, HTMLElement>;
  const barValues: Record<Label, HTMLElement> = {} as Record<Label, HTMLElement>;
  for (const label of LABELS) {
    const item = el("li", { "data-label": label });
    item.appendChild(el("span", { class: "bar-label" }, label));
    const track = el("div", { class: "bar-track" });
    const fill = el("div", { class: "bar-fill", role: "meter", "aria-label": label });
    track.appendChild(fill);
    item.appendChild(track);
    const value = el("span", { class: "bar-value" });
    item.appendChild(value);
    barFills[label] = fill;
    barValues[label] = value;
    bars.appendChild(item);
  }
  const meta = el("p", { id: "classify-meta", class: "muted" });
  const latencySpan = el("span", { id: "latency" });
  const modelSpan = el("code", { id: "model-id" });
  meta.append(latencySpan, " · model ", modelSpan);
  result.append(verdict, hint, note, bars, meta);

  classify.append(fileInput, cameraButton, cameraNote, video, captureButton,
    preview, spinner, errorBanner, result);

  let inFlight = false;
  let queued: File | null = null;
  let lastFile: File | null = null;

  function renderResult(resp: ClassifyResponse): void {
    errorBanner.hidden = true;
    const byLabel = new Map(resp.predictions.map((p) => [p.label, p.confidence]));
    for (const label of LABELS) {
      const confidence = byLabel.get(label) ?? 0;
      barFills[label].style.width = `${Math.round(confidence * 100)}%`;
      barValues[label].textContent = formatPct(confidence);
    }
    verdict.textContent = verdictOf(resp);
    hint.hidden = !isLowConfidence(resp);
    note.textContent = resp.note ?? "";
    note.hidden = resp.note == null;
    latencySpan.textContent = `${resp.latency_ms.toFixed(0)} ms`;
    modelSpan.textContent = resp.model_id;
    result.hidden = false;
  }

  function renderClassifyError(message: string): void {
    result.hidden = true; // a failed request must not leave a stale verdict
    errorText.textContent = message;
    errorBanner.hidden = false;
  }

  async function startClassify(file: File): Promise<void> {
    if (inFlight) {
      queued = file; // latest capture wins once the pending request lands
      return;
    }
    lastFile = file;
    inFlight = true;
    spinner.hidden = false;
    try {
      renderResult(await api.classify(file, file.name));
    } catch (e) {
      renderClassifyError(e instanceof Error ? e.message : "service unreachable");
    } finally {
      inFlight = false;
      spinner.hidden = true;
      if (queued) {
        const next = queued;
        queued = null;
        void startClassify(next);
      }
    }
  }

  function acceptFile(file: File): void {
    const problem = validateUpload(file);
    if (problem) {
      renderClassifyError(problem);
      return;
    }
    preview.src = URL.createObjectURL(file);
    preview.hidden = false;
    void startClassify(file);
  }

  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file) acceptFile(file);
  });
  retryButton.addEventListener("click", () => {
    if (lastFile) void startClassify(lastFile);
  });

  const mediaDevices = navigator.mediaDevices;
  if (!mediaDevices?.getUserMedia) {
    cameraButton.hidden = true;
    cameraNote.textContent = "camera not available in this browser; use the file picker";
    cameraNote.hidden = false;
  }
  cameraButton.addEventListener("click", async () => {
    try {
      const stream = await mediaDevices.getUserMedia({ video: true });
      video.srcObject = stream;
      video.hidden = false;
      captureButton.hidden = false;
    } catch {
      cameraButton.hidden = true;
      cameraNote.textContent = "camera permission denied; you can still upload a file";
      cameraNote.hidden = false;
    }
  });
  captureButton.addEventListener("click", () => {
    const canvas = document.createElement("canvas");
    canvas.width = video.videoWidth;
    canvas.height = video.videoHeight;
    canvas.getContext("2d")?.drawImage(video, 0, 0);
    canvas.toBlob((blob) => {
      if (blob) acceptFile(new File([blob], "capture.png", { type: "image/png" }));
    }, "image/png");
  });

  // ---- contribute -----------------------------------------------------

  const contribute = el("section", { id: "view-contribute", "aria-label": "contribute", hidden: "" });
  sections.contribute = contribute;

  const draft: Draft = { file: null as unknown as File, label: null, notes: "" };
  let hasFile = false;
  let submitting = false;

  const contributeInput = el("input", {
    type: "file",
    id: "contribute-file",
    accept: "image/png,image/jpeg",
    "aria-label": "choose an image to contribute",
  });
  const contributePreview = el("img", { id: "contribute-preview", alt: "draft image", hidden: "" });
  const labelSet = el("fieldset", { id: "label-choices" });
  labelSet.appendChild(el("legend", {}, "label"));
  for (const label of LABELS) {
    const wrap = el("label", { class: "radio" });
    const radio = el("input", { type: "radio", name: "label", value: label });
    radio.addEventListener("change", () => {
      draft.label = label;
      syncSubmit();
    });
    wrap.append(radio, label);
    labelSet.appendChild(wrap);
  }
  const notesInput = el("input", {
    type: "text",
    id: "contribute-notes",
    placeholder: "notes (optional)",
    "aria-label": "notes",
  });
  const submitButton = el("button", { id: "contribute-submit", disabled: "" }, "contribute");
  const toast = el("p", { id: "contribute-toast", role: "status", hidden: "" });
  const contributeError = el("div", { id: "contribute-error", role: "alert", hidden: "" });
  const contributeErrorText = el("span");
  const contributeRetry = el("button", { id: "contribute-retry" }, "retry");
  contributeError.append(contributeErrorText, " ", contributeRetry);

  contribute.append(contributeInput, contributePreview, labelSet, notesInput,
    submitButton, toast, contributeError);

  function syncSubmit(): void {
    submitButton.disabled = submitting || !hasFile || draft.label === null;
  }

  contributeInput.addEventListener("change", () => {
    const file = contributeInput.files?.[0];
    if (!file) return;
    const problem = validateUpload(file);
    if (problem) {
      contributeErrorText.textContent = problem;
      contributeError.hidden = false;
      return;
    }
    contributeError.hidden = true;
    draft.file = file;
    hasFile = true;
    contributePreview.src = URL.createObjectURL(file);
    contributePreview.hidden = false;
    syncSubmit();
  });
  notesInput.addEventListener("input", () => {
    draft.notes = notesInput.value;
  });

  async function submitContribution(): Promise<void> {
    if (submitting || !hasFile || draft.label === null) return;
    submitting = true;
    syncSubmit();
    toast.hidden = true;
    try {
      const resp = await api.contribute(draft.file, draft.label, draft.notes);
      contributeError.hidden = true;
      toast.textContent = resp.created
        ? `added to the dataset as ${resp.id}`
        : `already in the dataset as ${resp.id}`;
      toast.hidden = false;
      statsStale = true;
    } catch (e) {
      // the draft stays as-is so the user can retry without re-picking
      contributeErrorText.textContent =
        e instanceof Error ? e.message : "service unreachable";
      contributeError.hidden = false;
    } finally {
      submitting = false;
      syncSubmit();
    }
  }

  submitButton.addEventListener("click", () => void submitContribution());
  contributeRetry.addEventListener("click", () => void submitContribution());

  // ---- stats ----------------------------------------------------------

  const stats = el("section", { id: "view-stats", "aria-label": "stats", hidden: "" });
  sections.stats = stats;
  let statsStale = true;

  const statsList = el("ul", { id: "stats-list" });
  const statsCounts: Record<Label, HTMLElement> = {} as Record<Label, HTMLElement>;
  for (const label of LABELS) {
    const item = el("li", { "data-label": label });
    item.appendChild(el("span", { class: "stat-label" }, label));
    const count = el("span", { class: "stat-count" }, "0");
    item.appendChild(count);
    statsCounts[label] = count;
    statsList.appendChild(item);
  }
  const totalLine = el("p", { id: "stats-total" }, "total 0");
  const offlineNotice = el("p", { id: "offline-notice", role: "alert", hidden: "" },
    "service unreachable; counts may be stale");
  const refreshButton = el("button", { id: "stats-refresh" }, "refresh");
  refreshButton.addEventListener("click", () => void loadStats(true));
  stats.append(refreshButton, statsList, totalLine, offlineNotice);

  async function loadStats(force = false): Promise<void> {
    if (!force && !statsStale) return;
    try {
      const data = await api.stats();
      for (const label of LABELS) statsCounts[label].textContent = String(data.counts[label]);
      totalLine.textContent = `total ${data.total}`;
      offlineNotice.hidden = true;
      statsStale = false;
    } catch (e) {
      if (e instanceof ServiceError) {
        offlineNotice.textContent = e.message;
      }
      offlineNotice.hidden = false;
    }
  }

  main.append(classify, contribute, stats);
  showView("classify");
}
