// DOM wiring for the tuner: upload a frame, pick LBP/histogram parameters,
// Apply, and inspect every channel next to its histograms and LBP preview.

import { TuneClient } from "./api.js";
import { drawHistogram } from "./charts.js";
import {
  POINT_CHOICES,
  RADIUS_MAX,
  RADIUS_MIN,
  TunerState,
  canApply,
  initialState,
  paramsFromQuery,
  paramsToQuery,
  validateParams,
} from "./state.js";

const state: TunerState = initialState(paramsFromQuery(location.search));
const serviceInput = el<HTMLInputElement>("service-url");
let client = new TuneClient(serviceInput.value);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function syncControls() {
  (el<HTMLSelectElement>("points")).value = String(state.params.points);
  (el<HTMLInputElement>("radius")).value = String(state.params.radius);
  el("radius-value").textContent = String(state.params.radius);
  (el<HTMLInputElement>("hsv")).checked = state.params.hsv;
  (el<HTMLInputElement>("ycbcr")).checked = state.params.ycbcr;
  (el<HTMLInputElement>("m1")).value = String(state.params.colorBuckets);
  (el<HTMLInputElement>("m2")).value = String(state.params.lbpBuckets);

  const bad = validateParams(state.params);
  for (const field of ["points", "radius", "hsv", "m1", "m2"]) {
    el(field).classList.remove("bad");
  }
  for (const field of bad) {
    if (field === "spaces") {
      el("hsv").classList.add("bad");
      el("ycbcr").classList.add("bad");
    } else if (field === "colorBuckets") {
      el("m1").classList.add("bad");
    } else if (field === "lbpBuckets") {
      el("m2").classList.add("bad");
    } else {
      el(field).classList.add("bad");
    }
  }
  for (const name of state.badParams) el(name)?.classList.add("bad");

  (el<HTMLButtonElement>("apply")).disabled = !canApply(state);
  el("status").textContent = state.inFlight
    ? "computing..."
    : state.error
      ? state.error
      : state.timingMs !== null
        ? `${state.timingMs.toFixed(1)} ms`
        : "";
  el("status").className = state.error ? "status error" : "status";
  (el<HTMLButtonElement>("retry")).hidden = !(state.error && !state.inFlight);
}

function renderPanel() {
  const grid = el("grid");
  grid.textContent = "";
  if (!state.response) return;
  for (const channel of state.response.channels) {
    const card = document.createElement("div");
    card.className = "channel";
    card.innerHTML = `
      <h3>${channel.label}</h3>
      <div class="pair">
        <figure><img alt="${channel.label} plane"><figcaption>channel</figcaption></figure>
        <figure><canvas width="200" height="90"></canvas><figcaption>color histogram</figcaption></figure>
      </div>
      <div class="pair">
        <figure><img alt="${channel.label} LBP codes" class="lbp"><figcaption>LBP codes</figcaption></figure>
        <figure><canvas width="200" height="90" class="lbp"></canvas><figcaption>LBP histogram</figcaption></figure>
      </div>`;
    const [img, lbpImg] = Array.from(card.querySelectorAll("img"));
    img.src = `data:image/png;base64,${channel.image_b64}`;
    lbpImg.src = `data:image/png;base64,${channel.lbp_image_b64}`;
    const [colorCanvas, lbpCanvas] = Array.from(card.querySelectorAll("canvas"));
    drawHistogram(colorCanvas, channel.color_histogram, "#4a90d9");
    drawHistogram(lbpCanvas, channel.lbp_histogram, "#d97a4a");
    grid.appendChild(card);
  }
  el("meta").textContent =
    `${state.response.width}×${state.response.height}, ` +
    `feature dim ${state.response.feature_dim}`;
}

async function apply() {
  if (!canApply(state)) return;
  state.inFlight = true;
  state.error = null;
  state.badParams = [];
  syncControls();

  const request = state.params; // snapshot: response swaps in atomically
  const outcome = await client.tune(state.imageB64 as string, request);
  if (outcome.cancelled) return; // a newer apply owns the UI now
  state.inFlight = false;
  if (outcome.ok && outcome.response) {
    state.response = outcome.response;
    state.shownParams = { ...request };
    state.timingMs = outcome.timingMs ?? null;
    history.replaceState(null, "", `?${paramsToQuery(request)}`);
    renderPanel();
  } else {
    state.error = outcome.error ?? "request failed";
    if (outcome.status !== undefined && outcome.status >= 400 && outcome.status < 500) {
      state.badParams = validateParams(request);
    }
  }
  syncControls();
}

function bindControls() {
  const points = el<HTMLSelectElement>("points");
  for (const p of POINT_CHOICES) {
    const option = document.createElement("option");
    option.value = String(p);
    option.textContent = String(p);
    points.appendChild(option);
  }
  points.addEventListener("change", () => {
    state.params.points = Number(points.value);
    syncControls();
  });

  const radius = el<HTMLInputElement>("radius");
  radius.min = String(RADIUS_MIN);
  radius.max = String(RADIUS_MAX);
  radius.addEventListener("input", () => {
    state.params.radius = Number(radius.value);
    syncControls();
  });

  el<HTMLInputElement>("hsv").addEventListener("change", (ev) => {
    state.params.hsv = (ev.target as HTMLInputElement).checked;
    syncControls();
  });
  el<HTMLInputElement>("ycbcr").addEventListener("change", (ev) => {
    state.params.ycbcr = (ev.target as HTMLInputElement).checked;
    syncControls();
  });
  el<HTMLInputElement>("m1").addEventListener("input", (ev) => {
    state.params.colorBuckets = Number((ev.target as HTMLInputElement).value);
    syncControls();
  });
  el<HTMLInputElement>("m2").addEventListener("input", (ev) => {
    state.params.lbpBuckets = Number((ev.target as HTMLInputElement).value);
    syncControls();
  });

  el<HTMLInputElement>("frame").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => {
      const url = reader.result as string;
      state.imageB64 = url.slice(url.indexOf(",") + 1);
      state.imageName = file.name;
      el("frame-name").textContent = file.name;
      syncControls();
    };
    reader.readAsDataURL(file);
  });

  serviceInput.addEventListener("change", () => {
    client = new TuneClient(serviceInput.value.replace(/\/+$/, ""));
  });

  el<HTMLButtonElement>("apply").addEventListener("click", apply);
  el<HTMLButtonElement>("retry").addEventListener("click", apply);
}

bindControls();
syncControls();
