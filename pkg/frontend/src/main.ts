/** DOM glue: two planning panes with server PNGs + contour overlays, pose
 * gesture wiring, and the four-viewport AR stage after commit. */

import { ApiClient } from "./api";
import { ArStore, WebSocketLike } from "./ar";
import { PlanningStore } from "./planning";
import { VIEWPORTS, drawContours, drawViewport, formatReadout } from "./render";

const api = new ApiClient("");
const store = new PlanningStore(api);

const root = document.getElementById("app")!;
root.innerHTML = `
  <header>
    <span id="status">connecting…</span>
    <label>transparency <input id="alpha" type="range" min="0" max="1" step="0.05" value="0.5"></label>
    <label><input id="preset" type="checkbox"> preset angles</label>
    <span id="angles"></span>
    <span id="errors"></span>
    <button id="commit">commit plan</button>
  </header>
  <main id="planning">
    <div class="pane"><img id="img-a"><canvas id="overlay-a"></canvas></div>
    <div class="pane"><img id="img-b"><canvas id="overlay-b"></canvas></div>
  </main>
  <main id="ar" hidden>
    <div id="readout"></div>
    <div id="gap-warning" hidden>stream sequence gap detected</div>
    <div id="viewports"></div>
  </main>
  <div id="toast" hidden></div>
`;

const el = (id: string) => document.getElementById(id)!;
const toast = (msg: string) => {
  const t = el("toast");
  t.textContent = msg;
  t.hidden = false;
  setTimeout(() => (t.hidden = true), 4000);
};

const overlayScale = 1.0;

function redrawPlanning(): void {
  const state = store.getState();
  el("status").textContent = state.committed ? "committed" : "planning";
  if (state.angles) {
    el("angles").textContent =
      `RI ${state.angles.inclination_deg.toFixed(1)}° / RA ${state.angles.anteversion_deg.toFixed(1)}°`;
  }
  el("errors").textContent = state.errors
    ? `Δt ${state.errors.translation_mm.toFixed(2)} mm`
    : "";
  (el("preset") as HTMLInputElement).checked = state.presetMode;
  for (const [i, name] of (["a", "b"] as const).entries()) {
    const canvas = el(`overlay-${name}`) as HTMLCanvasElement;
    const ctx = canvas.getContext("2d");
    if (!ctx) continue;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    drawContours(ctx, state.contours, i, overlayScale, state.transparency);
  }
  if (state.lastError) toast(state.lastError);
}

store.subscribe(redrawPlanning);

function wireGestures(): void {
  for (const [, name] of (["a", "b"] as const).entries()) {
    const canvas = el(`overlay-${name}`) as HTMLCanvasElement;
    let dragging = false;
    let last: [number, number] = [0, 0];
    canvas.addEventListener("pointerdown", (ev) => {
      dragging = true;
      last = [ev.offsetX, ev.offsetY];
    });
    canvas.addEventListener("pointerup", () => (dragging = false));
    canvas.addEventListener("pointermove", (ev) => {
      if (!dragging) return;
      const dx = ev.offsetX - last[0];
      const dy = ev.offsetY - last[1];
      last = [ev.offsetX, ev.offsetY];
      // in-plane translate: pixel drag mapped to millimetres at the iso plane
      store.requestPose({ translation_mm: [dx * 0.25, dy * 0.25, 0] });
    });
    canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      // depth along the view ray
      store.requestPose({ translation_mm: [0, 0, Math.sign(ev.deltaY) * 2.0] });
    });
  }
  el("alpha").addEventListener("input", (ev) => {
    store.setTransparency(Number((ev.target as HTMLInputElement).value));
  });
  el("preset").addEventListener("change", (ev) => {
    void store.setPreset((ev.target as HTMLInputElement).checked).catch((e) => toast(String(e)));
  });
  el("commit").addEventListener("click", () => void commitAndAlign());
}

async function commitAndAlign(): Promise<void> {
  try {
    const committed = await store.commit();
    el("planning").hidden = true;
    el("ar").hidden = false;

    const ar = new ArStore(committed);
    const ws = new WebSocket(api.streamUrl(committed));
    ws.binaryType = "arraybuffer";
    const adapter: WebSocketLike = {
      send: (d) => ws.send(d),
      close: () => ws.close(),
      onmessage: null,
      onclose: null,
    };
    ws.onmessage = (ev) => adapter.onmessage?.({ data: ev.data });
    ws.onclose = () => adapter.onclose?.();
    ar.attach(adapter);

    const holder = el("viewports");
    const canvases = VIEWPORTS.map(() => {
      const c = document.createElement("canvas");
      c.width = 320;
      c.height = 240;
      holder.appendChild(c);
      return c;
    });
    ar.subscribe(() => {
      const states = ar.viewportStates();
      states.forEach((state, i) => {
        const ctx = canvases[i].getContext("2d");
        if (ctx) drawViewport(ctx, state, VIEWPORTS[i], 320, 240);
      });
      el("readout").textContent =
        formatReadout(states[0]) + (states[0].complete ? " — ALIGNED" : "");
      el("readout").className = states[0].complete ? "complete" : "";
      el("gap-warning").hidden = !states[0].sequenceGapWarning;
    });
  } catch (e) {
    toast(String(e));
  }
}

async function boot(): Promise<void> {
  try {
    await store.createSession();
    const session = store.getState().session!;
    for (const [i, name] of (["a", "b"] as const).entries()) {
      (el(`img-${name}`) as HTMLImageElement).src = api.viewImageUrl(session.views[i]);
    }
    wireGestures();
    redrawPlanning();
  } catch (e) {
    toast(String(e));
  }
}

void boot();
