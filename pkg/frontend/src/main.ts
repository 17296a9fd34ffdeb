/** Labeling app: fetch a pair, animate both segments in lockstep, submit the
 * teacher's choice via arrow keys or buttons, advance on acknowledgement. */

import { ApiClient, Choice } from "./api.js";
import { buildPairView, frameAt, KEY_TO_CHOICE, PairView } from "./model.js";
import { buildPanels, Panel } from "./render.js";

const FRAME_MS = 90; // playback clock: ~11 segment steps per second

class App {
  private readonly api = new ApiClient("");
  private view: PairView | null = null;
  private panels: [Panel, Panel] | null = null;
  private waitingForAck = false;
  private staticTrails = false;
  private tick = 0;

  private readonly leftSvg =
    document.querySelector<SVGSVGElement>("#left-track")!;
  private readonly rightSvg =
    document.querySelector<SVGSVGElement>("#right-track")!;
  private readonly status = document.querySelector<HTMLElement>("#status")!;
  private readonly progress = document.querySelector<HTMLElement>("#progress")!;
  private readonly toast = document.querySelector<HTMLElement>("#toast")!;

  async start(): Promise<void> {
    document.addEventListener("keydown", (ev) => this.onKey(ev));
    for (const choice of ["left", "equal", "right"] as Choice[]) {
      document
        .querySelector(`#choose-${choice}`)!
        .addEventListener("click", () => void this.submit(choice));
    }
    document.querySelector("#trails-toggle")!.addEventListener("change", (ev) => {
      this.staticTrails = (ev.target as HTMLInputElement).checked;
      this.panels?.forEach((p) => p.setStaticTrail(this.staticTrails));
    });
    document.querySelector("#dismiss-guidelines")!.addEventListener("click", () => {
      document.querySelector("#guidelines")!.classList.add("hidden");
    });
    window.setInterval(() => this.animate(), FRAME_MS);
    await this.refreshProgress();
    await this.nextPair();
  }

  private animate(): void {
    if (!this.view || !this.panels) {
      return;
    }
    this.tick += 1;
    const frame = frameAt(this.tick, this.view.frames);
    this.panels[0].drawFrame(frame);
    this.panels[1].drawFrame(frame);
  }

  private async nextPair(): Promise<void> {
    try {
      const payload = await this.api.getPair();
      if (payload === null) {
        this.showComplete();
        return;
      }
      this.view = buildPairView(payload);
      this.panels = buildPanels(this.view, this.leftSvg, this.rightSvg);
      this.panels.forEach((p) => p.setStaticTrail(this.staticTrails));
      this.tick = 0;
      this.status.textContent = `pair ${payload.pair_id} (${payload.env})`;
      this.waitingForAck = false;
    } catch {
      this.status.textContent = "server unreachable; retrying...";
      window.setTimeout(() => void this.nextPair(), 1500);
    }
  }

  private onKey(ev: KeyboardEvent): void {
    const choice = KEY_TO_CHOICE[ev.key];
    if (!choice) {
      return;
    }
    ev.preventDefault();
    void this.submit(choice);
  }

  /** One POST per keypress per pair: input stays disabled until the ack. */
  private async submit(choice: Choice): Promise<void> {
    if (!this.view || this.waitingForAck) {
      return;
    }
    this.waitingForAck = true;
    try {
      const result = await this.api.postLabel(this.view.pairId, choice);
      if (result.status === 200) {
        this.setProgress(result.progress!.done, result.progress!.target);
        await this.nextPair();
      } else if (result.status === 409) {
        this.showToast("already labeled; skipping forward");
        await this.refreshProgress();
        await this.nextPair();
      } else {
        this.showToast(`rejected (${result.status}); not advancing`);
        this.waitingForAck = false;
      }
    } catch {
      this.showToast("network error; try again");
      this.waitingForAck = false;
    }
  }

  private async refreshProgress(): Promise<void> {
    try {
      const p = await this.api.getProgress();
      this.setProgress(p.done, p.target);
      if (p.done >= p.target) {
        this.showComplete();
      }
    } catch {
      /* banner handled by nextPair */
    }
  }

  private setProgress(done: number, target: number): void {
    this.progress.textContent = `${done} / ${target} labeled`;
  }

  private showComplete(): void {
    this.view = null;
    this.panels = null;
    this.status.textContent = "session complete - every pair is labeled";
    document.querySelector("#app")!.classList.add("complete");
  }

  private showToast(message: string): void {
    this.toast.textContent = message;
    this.toast.classList.add("visible");
    window.setTimeout(() => this.toast.classList.remove("visible"), 1800);
  }
}

void new App().start();
