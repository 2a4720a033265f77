/** Single-page annotator app.
 *
 * The only client-side state that survives a reload is the annotator id
 * (localStorage); everything else is refetched, the server log being the
 * source of truth. Duplicate submits are blocked by disabling the button
 * while a request is in flight.
 */

import { fetchNextHit, fetchProgress, submitSelection } from "./api.js";
import {
  renderAllDone,
  renderError,
  renderHit,
  renderProgress,
} from "./render.js";
import type { HitView } from "./types.js";

const BASE = "";

function annotatorId(): string {
  let id = localStorage.getItem("annotator");
  if (!id) {
    id = window.prompt("Annotator id:") || `anon-${Date.now()}`;
    localStorage.setItem("annotator", id);
  }
  return id;
}

class App {
  private root: HTMLElement;
  private annotator: string;
  private hit: HitView | null = null;
  private selected: string | null = null;
  private busy = false;

  constructor(root: HTMLElement) {
    this.root = root;
    this.annotator = annotatorId();
  }

  async refresh(): Promise<void> {
    const res = await fetchNextHit(BASE, this.annotator);
    if (!res.ok) {
      this.showError(res.error);
      return;
    }
    this.hit = res.body.hit;
    this.selected = null;
    this.busy = false;
    await this.renderView();
  }

  private async renderView(): Promise<void> {
    let header = `<header><h1>Annotation</h1>` +
      `<p class="annotator">annotator: ${this.annotator}</p></header>`;
    const progress = await fetchProgress(BASE);
    if (progress.ok) {
      header += renderProgress(progress.body.progress);
    }
    if (this.hit === null) {
      this.root.innerHTML = header + renderAllDone();
      return;
    }
    this.root.innerHTML = header + renderHit(this.hit, this.selected);
    for (const input of this.root.querySelectorAll<HTMLInputElement>(
        "input[name=option]")) {
      input.addEventListener("change", () => {
        this.selected = input.value;
        const button = this.root.querySelector<HTMLButtonElement>("#submit");
        if (button) button.disabled = false;
      });
    }
    const button = this.root.querySelector<HTMLButtonElement>("#submit");
    button?.addEventListener("click", () => void this.submit());
  }

  private async submit(): Promise<void> {
    if (this.busy || this.hit === null || this.selected === null) return;
    this.busy = true;
    const button = this.root.querySelector<HTMLButtonElement>("#submit");
    if (button) button.disabled = true;
    const res = await submitSelection(BASE, this.hit, this.annotator,
                                      [this.selected]);
    if (!res.ok) {
      this.showError(res.error);
      return;
    }
    await this.refresh();
  }

  private showError(message: string): void {
    this.busy = false;
    const box = document.createElement("div");
    box.innerHTML = renderError(message);
    const previous = this.root.querySelector(".error");
    previous?.remove();
    this.root.prepend(box.firstElementChild as HTMLElement);
    this.root.querySelector<HTMLButtonElement>("#retry")
      ?.addEventListener("click", () => void this.refresh());
  }
}

const rootElement = document.getElementById("app");
if (rootElement) {
  void new App(rootElement).refresh();
}
