import { fetchAnnotations, fetchManifest, frameUrl, postDecision } from "./api.js";
import {
  CORRECTED_COLOR,
  ORIGINAL_COLOR,
  centerDelta,
  formatDelta,
  rectOnFrame,
  strokeRect,
} from "./overlay.js";
import {
  ViewState,
  badgeLabel,
  cycleRate,
  initialState,
  selectVideo,
  stepFrame,
  tick,
  toggleOverlay,
  togglePlay,
  withDecision,
} from "./state.js";
import type { Choice, ManifestEntry, TrackJson } from "./types.js";

const TICK_MS = 33; // ~30 fps playback at rate 1

let state: ViewState = initialState();
let manifest: ManifestEntry[] = [];
let original: TrackJson | null = null;
let corrected: TrackJson | null = null;
let frameImage: HTMLImageElement | null = null;
let frameBroken = false;

const app = document.querySelector("#app") as HTMLElement;

const banner = el("div", "banner hidden");
const sidebar = el("div", "sidebar");
const viewer = el("div", "viewer");
const canvas = document.createElement("canvas");
canvas.className = "frame";
const statusLine = el("div", "status");
const controls = el("div", "controls");
app.append(banner, sidebar, viewer);
viewer.append(canvas, statusLine, controls);

const toggles = {
  original: checkbox("original (green)", true, () => {
    state = toggleOverlay(state, "original");
    draw();
  }),
  corrected: checkbox("corrected (red)", true, () => {
    state = toggleOverlay(state, "corrected");
    draw();
  }),
};
const operatorInput = document.createElement("input");
operatorInput.placeholder = "operator";
operatorInput.value = localStorage.getItem("annolab-operator") ?? "";
operatorInput.onchange = () => localStorage.setItem("annolab-operator", operatorInput.value);

const keepButton = button("keep original", () => submit("original"));
const useButton = button("use corrected", () => submit("corrected"));
const playButton = button("play", () => {
  state = togglePlay(state);
  playButton.textContent = state.playing ? "pause" : "play";
});
const rateButton = button("rate 1x", () => {
  state = cycleRate(state);
  rateButton.textContent = `rate ${state.rate}x`;
});
controls.append(toggles.original.wrapper, toggles.corrected.wrapper, playButton,
  rateButton, operatorInput, keepButton, useButton);

function el(tag: string, className: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  return node;
}

function button(label: string, onClick: () => void): HTMLButtonElement {
  const node = document.createElement("button");
  node.textContent = label;
  node.onclick = onClick;
  return node;
}

function checkbox(label: string, checked: boolean, onChange: () => void) {
  const wrapper = el("label", "toggle");
  const input = document.createElement("input");
  input.type = "checkbox";
  input.checked = checked;
  input.onchange = onChange;
  wrapper.append(input, document.createTextNode(label));
  return { wrapper, input };
}

function showBanner(message: string, retry: (() => void) | null): void {
  banner.textContent = message;
  banner.classList.remove("hidden");
  if (retry) {
    const again = button("retry", () => {
      banner.classList.add("hidden");
      retry();
    });
    banner.append(" ", again);
  }
}

function renderSidebar(): void {
  sidebar.replaceChildren();
  if (manifest.length === 0) {
    const empty = el("div", "empty");
    empty.textContent = "no videos in dataset";
    sidebar.append(empty);
    return;
  }
  for (const entry of manifest) {
    const row = el("div", "video-row" + (entry.video_id === state.videoId ? " active" : ""));
    const name = el("span", "video-name");
    name.textContent = `${entry.video_id} (${entry.frame_count})`;
    const badge = el("span", `badge badge-${entry.decision}`);
    badge.textContent = badgeLabel(entry.decision);
    row.append(name, badge);
    row.onclick = () => void openVideo(entry);
    sidebar.append(row);
  }
}

async function openVideo(entry: ManifestEntry): Promise<void> {
  state = selectVideo(state, entry);
  original = null;
  corrected = null;
  renderSidebar();
  try {
    original = await fetchAnnotations(entry.video_id, "original");
    corrected = entry.corrected_available
      ? await fetchAnnotations(entry.video_id, "corrected")
      : null;
  } catch (err) {
    showBanner(`failed to load annotations: ${err}`, () => void openVideo(entry));
    return;
  }
  loadFrame();
}

function loadFrame(): void {
  if (state.videoId === null) {
    return;
  }
  const image = new Image();
  const wanted = `${state.videoId}#${state.frame}`;
  image.onload = () => {
    if (`${state.videoId}#${state.frame}` === wanted) {
      frameImage = image;
      frameBroken = false;
      draw();
    }
  };
  image.onerror = () => {
    frameImage = null;
    frameBroken = true;
    draw();
  };
  image.src = frameUrl(state.videoId, state.frame);
}

function draw(): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    return;
  }
  let zoom = 1;
  if (frameImage !== null) {
    zoom = Math.min(2, Math.max(1, Math.floor(960 / frameImage.width)));
    canvas.width = frameImage.width * zoom;
    canvas.height = frameImage.height * zoom;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(frameImage, 0, 0, canvas.width, canvas.height);
  } else {
    canvas.width = 640;
    canvas.height = 360;
    ctx.fillStyle = "#222";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#bbb";
    ctx.fillText(frameBroken ? "frame unavailable" : "select a video", 20, 30);
  }

  const originalRect = rectOnFrame(original, state.frame);
  const correctedRect = rectOnFrame(corrected, state.frame);
  if (frameImage !== null && state.showOriginal && originalRect !== null) {
    strokeRect(ctx, originalRect, zoom, ORIGINAL_COLOR);
  }
  if (frameImage !== null && state.showCorrected && correctedRect !== null) {
    strokeRect(ctx, correctedRect, zoom, CORRECTED_COLOR);
  }
  statusLine.textContent =
    `${state.videoId ?? "-"}  frame ${state.frame}/${state.frameCount}  ` +
    formatDelta(centerDelta(originalRect, correctedRect));
}

async function submit(choice: Choice): Promise<void> {
  if (state.videoId === null) {
    return;
  }
  const videoId = state.videoId;
  const before = manifest;
  manifest = withDecision(manifest, videoId, choice); // optimistic
  renderSidebar();
  try {
    await postDecision(videoId, choice, operatorInput.value);
  } catch (err) {
    manifest = before; // rollback: decision must not stick locally
    renderSidebar();
    showBanner(`decision failed: ${err}`, null);
  }
}

document.addEventListener("keydown", (event) => {
  if (event.target === operatorInput) {
    return;
  }
  if (event.key === "ArrowLeft" || event.key === "ArrowRight") {
    const step = (event.key === "ArrowRight" ? 1 : -1) * (event.shiftKey ? 10 : 1);
    state = stepFrame(state, step);
    loadFrame();
    event.preventDefault();
  } else if (event.key === " ") {
    state = togglePlay(state);
    playButton.textContent = state.playing ? "pause" : "play";
    event.preventDefault();
  }
});

setInterval(() => {
  const next = tick(state);
  if (next !== state) {
    state = next;
    if (!state.playing) {
      playButton.textContent = "play";
    }
    loadFrame();
  }
}, TICK_MS);

async function boot(): Promise<void> {
  try {
    manifest = await fetchManifest();
  } catch (err) {
    showBanner(`cannot reach review service: ${err}`, () => void boot());
    return;
  }
  renderSidebar();
}

void boot();
