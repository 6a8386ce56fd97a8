/**
 * DOM shell: a canvas stage with point/box prompting, a timeline scrubber
 * with playback, and one triplet panel group per submitted prompt.
 *
 * The app owns no model state; every piece of content comes from the HTTP
 * API, and overlay pixels are recomputed through the pure compositor so the
 * scripted browser test can assert on them without a native canvas.
 */

import { ApiClient, ApiError, OverlayEntry, PromptJson } from "./api.js";
import { canvasToNormalized, dragToBox } from "./coords.js";
import { compositeOverlays, paintedPixelCount, PREDICATE_COLOR, ROLE_COLORS } from "./render.js";
import { clampFrame, initialState, toggleTracklet, ViewState } from "./state.js";

const PLAYBACK_MS = 200; // ~5 fps, the generator's nominal rate

export interface AppOptions {
  scale?: number;
}

export class App {
  readonly state: ViewState = initialState();
  lastOverlayBuffer: Uint8ClampedArray | null = null;
  lastRequest: Promise<void> | null = null;

  private canvas!: HTMLCanvasElement;
  private frameImage!: HTMLImageElement;
  private scrubber!: HTMLInputElement;
  private frameLabel!: HTMLElement;
  private playButton!: HTMLButtonElement;
  private panel!: HTMLElement;
  private status!: HTMLElement;
  private toast!: HTMLElement;
  private toolButtons: HTMLButtonElement[] = [];
  private boxGhost!: HTMLElement;
  private dragStart: { x: number; y: number } | null = null;
  private playTimer: ReturnType<typeof setInterval> | null = null;
  private readonly scale: number;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    options: AppOptions = {},
  ) {
    this.scale = options.scale ?? 8;
    this.buildDom();
  }

  async start(scene: Record<string, number>): Promise<void> {
    const info = await this.api.createSyntheticSession(scene);
    this.state.sessionId = info.session_id;
    this.state.frames = info.frames;
    this.state.height = info.height;
    this.state.width = info.width;
    this.state.vocabulary = info.vocabulary;
    this.canvas.width = info.width;
    this.canvas.height = info.height;
    this.canvas.style.width = `${info.width * this.scale}px`;
    this.canvas.style.height = `${info.height * this.scale}px`;
    this.frameImage.style.width = `${info.width * this.scale}px`;
    this.frameImage.style.height = `${info.height * this.scale}px`;
    this.scrubber.min = "0";
    this.scrubber.max = String(info.frames - 1);
    this.setStatus(`session ${info.session_id.slice(0, 8)} (${info.frames} frames)`);
    await this.showFrame(0);
  }

  overlayPixelCount(): number {
    return this.lastOverlayBuffer ? paintedPixelCount(this.lastOverlayBuffer) : 0;
  }

  async showFrame(frame: number): Promise<void> {
    this.state.frame = clampFrame(this.state, frame);
    this.scrubber.value = String(this.state.frame);
    this.frameLabel.textContent = `frame ${this.state.frame}`;
    if (this.state.sessionId) {
      this.frameImage.src = this.api.frameUrl(this.state.sessionId, this.state.frame);
      await this.refreshOverlays();
    }
  }

  async refreshOverlays(): Promise<void> {
    if (!this.state.sessionId) return;
    const payload = await this.api.overlays(this.state.sessionId, this.state.frame);
    this.renderOverlays(payload.overlays);
  }

  /** Submit a prompt built from canvas-space coordinates. */
  async promptAt(px: number, py: number): Promise<void> {
    const { x, y } = canvasToNormalized(px, py, this.canvas.width, this.canvas.height);
    await this.submit({ kind: "point", frame: this.state.frame, point: [x, y] });
  }

  async promptBox(x0: number, y0: number, x1: number, y1: number): Promise<void> {
    const box = dragToBox(x0, y0, x1, y1, this.canvas.width, this.canvas.height);
    if (!box) {
      await this.promptAt(x1, y1); // a degenerate drag is just a click
      return;
    }
    await this.submit({
      kind: "box",
      frame: this.state.frame,
      box: [box.x0, box.y0, box.x1, box.y1],
    });
  }

  private async submit(prompt: PromptJson): Promise<void> {
    if (!this.state.sessionId || this.state.busy) return;
    this.setBusy(true);
    const request = (async () => {
      try {
        const output = await this.api.submitPrompt(this.state.sessionId!, prompt);
        if (!output.subject_found) {
          this.showToast("subject not found - try prompting on an entity");
          return;
        }
        this.state.outputs.push(output);
        this.rebuildPanel();
        await this.refreshOverlays();
      } catch (error) {
        const detail = error instanceof ApiError ? error.message : String(error);
        this.showToast(`prompt failed: ${detail}`);
      } finally {
        this.setBusy(false);
      }
    })();
    this.lastRequest = request;
    await request;
  }

  private renderOverlays(overlays: OverlayEntry[]): void {
    const buffer = compositeOverlays(
      overlays,
      this.canvas.width,
      this.canvas.height,
      this.state.hiddenTracklets,
    );
    this.lastOverlayBuffer = buffer;
    const ctx = this.canvas.getContext("2d");
    if (ctx && typeof ImageData !== "undefined") {
      ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
      const pixels = buffer as Uint8ClampedArray<ArrayBuffer>;
      ctx.putImageData(new ImageData(pixels, this.canvas.width, this.canvas.height), 0, 0);
    }
  }

  private rebuildPanel(): void {
    this.panel.textContent = "";
    const vocab = this.state.vocabulary;
    this.state.outputs.forEach((output, promptIndex) => {
      const group = document.createElement("div");
      group.className = "prompt-group";
      group.dataset.promptIndex = String(promptIndex);
      const title = document.createElement("h4");
      const p = output.subject_prompt;
      title.textContent = `prompt ${promptIndex} (${p.kind} @ frame ${p.frame})`;
      group.appendChild(title);
      const list = document.createElement("ul");
      list.className = "triplets";
      if (output.tracklets.length === 0) {
        const item = document.createElement("li");
        item.className = "empty";
        item.textContent = "no interactions predicted";
        list.appendChild(item);
      }
      output.tracklets.forEach((tracklet, i) => {
        const item = document.createElement("li");
        const label = document.createElement("label");
        const checkbox = document.createElement("input");
        checkbox.type = "checkbox";
        const trackletId = `${promptIndex}:${i}`;
        checkbox.dataset.tracklet = trackletId;
        checkbox.checked = !this.state.hiddenTracklets.has(trackletId);
        checkbox.addEventListener("change", () => {
          toggleTracklet(this.state, trackletId);
          void this.refreshOverlays();
        });
        label.appendChild(checkbox);
        const subject = vocab ? vocab.object_classes[tracklet.subject_class] : `#${tracklet.subject_class}`;
        const object = vocab ? vocab.object_classes[tracklet.object_class] : `#${tracklet.object_class}`;
        const predicate = vocab
          ? vocab.predicate_classes[tracklet.predicate_class]
          : `#${tracklet.predicate_class}`;
        label.appendChild(spanColored(subject, rgb(ROLE_COLORS.subject)));
        label.appendChild(document.createTextNode(" "));
        label.appendChild(spanColored(predicate, PREDICATE_COLOR));
        label.appendChild(document.createTextNode(" "));
        label.appendChild(spanColored(object, rgb(ROLE_COLORS.object)));
        label.appendChild(
          document.createTextNode(
            ` conf ${tracklet.confidence.toFixed(2)} [${tracklet.subject_tube.t_start}..${tracklet.subject_tube.t_end}]`,
          ),
        );
        item.appendChild(label);
        list.appendChild(item);
      });
      group.appendChild(list);
      this.panel.appendChild(group);
    });
  }

  private setBusy(busy: boolean): void {
    this.state.busy = busy;
    for (const button of this.toolButtons) button.disabled = busy;
    this.canvas.style.pointerEvents = busy ? "none" : "auto";
    this.setStatus(busy ? "running..." : "ready");
  }

  private setStatus(text: string): void {
    this.status.textContent = text;
  }

  private showToast(text: string): void {
    this.toast.textContent = text;
    this.toast.classList.add("visible");
    setTimeout(() => this.toast.classList.remove("visible"), 2500);
  }

  private togglePlayback(): void {
    if (this.playTimer) {
      clearInterval(this.playTimer);
      this.playTimer = null;
      this.state.playing = false;
      this.playButton.textContent = "play";
      return;
    }
    this.state.playing = true;
    this.playButton.textContent = "pause";
    this.playTimer = setInterval(() => {
      void this.showFrame((this.state.frame + 1) % Math.max(this.state.frames, 1));
    }, PLAYBACK_MS);
  }

  private canvasPosition(event: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    const scaleX = rect.width > 0 ? this.canvas.width / rect.width : 1;
    const scaleY = rect.height > 0 ? this.canvas.height / rect.height : 1;
    return {
      x: (event.clientX - rect.left) * scaleX,
      y: (event.clientY - rect.top) * scaleY,
    };
  }

  private buildDom(): void {
    this.root.classList.add("psg-app");

    const toolbar = document.createElement("div");
    toolbar.className = "toolbar";
    for (const tool of ["point", "box"] as const) {
      const button = document.createElement("button");
      button.textContent = tool;
      button.dataset.tool = tool;
      button.className = tool === this.state.tool ? "active" : "";
      button.addEventListener("click", () => {
        this.state.tool = tool;
        for (const other of this.toolButtons) {
          other.className = other.dataset.tool === tool ? "active" : "";
        }
      });
      this.toolButtons.push(button);
      toolbar.appendChild(button);
    }
    this.status = document.createElement("span");
    this.status.className = "status";
    toolbar.appendChild(this.status);
    this.root.appendChild(toolbar);

    const stage = document.createElement("div");
    stage.className = "stage";
    this.frameImage = document.createElement("img");
    this.frameImage.className = "frame";
    this.frameImage.alt = "clip frame";
    stage.appendChild(this.frameImage);
    this.canvas = document.createElement("canvas");
    this.canvas.className = "overlay";
    stage.appendChild(this.canvas);
    this.boxGhost = document.createElement("div");
    this.boxGhost.className = "box-ghost";
    stage.appendChild(this.boxGhost);
    this.root.appendChild(stage);

    this.canvas.addEventListener("pointerdown", (event) => {
      if (this.state.busy || !this.state.sessionId) return;
      const pos = this.canvasPosition(event);
      if (this.state.tool === "point") {
        void this.promptAt(pos.x, pos.y);
      } else {
        this.dragStart = pos;
      }
    });
    this.canvas.addEventListener("pointerup", (event) => {
      if (this.state.tool !== "box" || !this.dragStart) return;
      const start = this.dragStart;
      this.dragStart = null;
      const pos = this.canvasPosition(event);
      void this.promptBox(start.x, start.y, pos.x, pos.y);
    });

    const timeline = document.createElement("div");
    timeline.className = "timeline";
    this.playButton = document.createElement("button");
    this.playButton.className = "play";
    this.playButton.textContent = "play";
    this.playButton.addEventListener("click", () => this.togglePlayback());
    timeline.appendChild(this.playButton);
    this.scrubber = document.createElement("input");
    this.scrubber.type = "range";
    this.scrubber.className = "scrubber";
    this.scrubber.addEventListener("input", () => {
      void this.showFrame(Number(this.scrubber.value));
    });
    timeline.appendChild(this.scrubber);
    this.frameLabel = document.createElement("span");
    this.frameLabel.className = "frame-label";
    this.frameLabel.textContent = "frame 0";
    timeline.appendChild(this.frameLabel);
    this.root.appendChild(timeline);

    this.panel = document.createElement("div");
    this.panel.className = "panel";
    this.root.appendChild(this.panel);

    this.toast = document.createElement("div");
    this.toast.className = "toast";
    this.root.appendChild(this.toast);
  }
}

function spanColored(text: string, color: string): HTMLElement {
  const span = document.createElement("b");
  span.textContent = text;
  span.style.color = color;
  return span;
}

function rgb([r, g, b]: [number, number, number]): string {
  return `rgb(${r}, ${g}, ${b})`;
}
