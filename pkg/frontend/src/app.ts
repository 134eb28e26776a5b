/**
 * DOM controller for the matching workspace: two clickable images, a
 * pair table, and a preview pane that follows the server's revision
 * counter without ever stepping backwards.
 */

import {
  ApiError,
  MatcherApi,
  PreviewResult,
  SessionInfo,
} from "./api.js";
import {
  ImageSide,
  PairSubmission,
  UiSessionState,
  acceptPreview,
  clearPending,
  isStale,
  mirrorPairs,
  newSessionState,
  registerClick,
  restorePending,
  setBusy,
} from "./state.js";

export interface AppElements {
  hsiFrame: HTMLElement;
  hsiImage: HTMLImageElement;
  hsiMarkers: HTMLElement;
  rgbFrame: HTMLElement;
  rgbImage: HTMLImageElement;
  rgbMarkers: HTMLElement;
  previewImage: HTMLImageElement;
  previewNote: HTMLElement;
  staleBadge: HTMLElement;
  pairCount: HTMLElement;
  tableBody: HTMLElement;
  exportButton: HTMLButtonElement;
  statusLine: HTMLElement;
  errorLine: HTMLElement;
}

/** Look up every workspace element by id, failing loudly on a bad page. */
export function collectElements(root: Document): AppElements {
  function grab<T extends HTMLElement>(id: string): T {
    const el = root.getElementById(id);
    if (el === null) {
      throw new Error(`workspace element #${id} missing from page`);
    }
    return el as T;
  }
  return {
    hsiFrame: grab("hsi-frame"),
    hsiImage: grab<HTMLImageElement>("hsi-image"),
    hsiMarkers: grab("hsi-markers"),
    rgbFrame: grab("rgb-frame"),
    rgbImage: grab<HTMLImageElement>("rgb-image"),
    rgbMarkers: grab("rgb-markers"),
    previewImage: grab<HTMLImageElement>("preview-image"),
    previewNote: grab("preview-note"),
    staleBadge: grab("stale-badge"),
    pairCount: grab("pair-count"),
    tableBody: grab("pair-rows"),
    exportButton: grab<HTMLButtonElement>("export-button"),
    statusLine: grab("status-line"),
    errorLine: grab("error-line"),
  };
}

const RETRY_BASE_MS = 500;
const RETRY_CAP_MS = 8000;

function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  // String.fromCharCode takes arguments, not an array; chunk to stay
  // under the engine's argument limit on larger previews
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
  }
  return btoa(binary);
}

export class MatcherApp {
  state: UiSessionState;

  /** newest revision any response has admitted to; drives the badge */
  knownServerRevision = 0;
  /** times the preview pane actually changed pixels */
  paneRedraws = 0;
  /** revision of every frame the pane accepted, in display order */
  previewLog: number[] = [];
  /** last exported file, kept so a caller can reach the bytes */
  lastExport: { filename: string; data: Uint8Array } | null = null;

  private mutationChain: Promise<void> = Promise.resolve();
  private pendingMutations = 0;
  private previewInFlight = false;
  private previewDirty = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private backoffMs = RETRY_BASE_MS;
  private hoveredRow = -1;

  constructor(
    private readonly api: MatcherApi,
    readonly session: SessionInfo,
    private readonly els: AppElements,
  ) {
    this.state = newSessionState(session.sessionId);
    els.hsiImage.src = api.hsiProxyUrl(session.sessionId);
    els.rgbImage.src = api.referenceUrl(session.sessionId);
    els.hsiFrame.addEventListener("click", (ev) =>
      this.onFrameClick("hsi", ev as MouseEvent),
    );
    els.rgbFrame.addEventListener("click", (ev) =>
      this.onFrameClick("rgb", ev as MouseEvent),
    );
    els.exportButton.addEventListener("click", () => {
      void this.exportFile();
    });
    els.hsiFrame.ownerDocument.addEventListener("keydown", (ev) => {
      if ((ev as KeyboardEvent).key === "Escape") {
        this.state = clearPending(this.state);
        this.renderMarkers();
        this.setStatus("pending click cancelled");
      }
    });
    this.renderTable();
    this.renderMarkers();
    this.setStatus(`session ${session.sessionId} open`);
    this.schedulePreviewPoll();
  }

  // ---- click handling ---------------------------------------------------

  private imageCoords(
    img: HTMLImageElement,
    natural: [number, number],
    ev: MouseEvent,
  ): [number, number] {
    const rect = img.getBoundingClientRect();
    // an unlaid-out image (hidden pane, headless harness) reports zero
    // size; fall back to 1:1 so clicks still mean pixels
    const sx = rect.width > 0 ? natural[0] / rect.width : 1;
    const sy = rect.height > 0 ? natural[1] / rect.height : 1;
    const x = Math.floor((ev.clientX - rect.left) * sx);
    const y = Math.floor((ev.clientY - rect.top) * sy);
    return [x, y];
  }

  private onFrameClick(side: ImageSide, ev: MouseEvent): void {
    const [img, natural]: [HTMLImageElement, [number, number]] =
      side === "hsi"
        ? [this.els.hsiImage, [this.session.cubeWidth, this.session.cubeHeight]]
        : [
            this.els.rgbImage,
            [this.session.referenceWidth, this.session.referenceHeight],
          ];
    const [x, y] = this.imageCoords(img, natural, ev);
    this.clearError();
    const { state, submit } = registerClick(this.state, side, x, y);
    this.state = state;
    this.renderMarkers();
    if (submit !== null) {
      this.submitPair(submit);
    } else {
      this.setStatus(`picked ${side} pixel (${x}, ${y}); now click the other image`);
    }
  }

  private submitPair(submission: PairSubmission): void {
    this.enqueueMutation(async () => {
      try {
        const ack = await this.api.addPoint(
          this.state.sessionId,
          submission.hsi,
          submission.rgb,
        );
        this.noteRevision(ack.revision);
        await this.refreshPairs();
        this.setStatus(`pair ${ack.count} saved`);
      } catch (err) {
        // the half-entered pair stays armed so one corrected click fixes it
        this.state = restorePending(this.state, submission.first);
        this.renderMarkers();
        this.showError(err);
      }
    });
  }

  deletePair(index: number): void {
    this.enqueueMutation(async () => {
      try {
        const ack = await this.api.removePoint(this.state.sessionId, index);
        this.noteRevision(ack.revision);
        await this.refreshPairs();
        this.setStatus(`pair removed, ${ack.count} left`);
      } catch (err) {
        this.showError(err);
      }
    });
  }

  // mutations run strictly in click order; each one triggers a preview
  // poll once acknowledged
  private enqueueMutation(task: () => Promise<void>): void {
    this.pendingMutations += 1;
    this.state = setBusy(this.state, true);
    this.renderBusy();
    const run = async () => {
      try {
        await task();
      } finally {
        this.pendingMutations -= 1;
        if (this.pendingMutations === 0) {
          this.state = setBusy(this.state, false);
          this.renderBusy();
        }
        this.schedulePreviewPoll();
      }
    };
    this.mutationChain = this.mutationChain.then(run, run);
  }

  private async refreshPairs(): Promise<void> {
    const snapshot = await this.api.listPoints(this.state.sessionId);
    this.noteRevision(snapshot.revision);
    this.state = mirrorPairs(this.state, snapshot.pairs);
    this.renderTable();
    this.renderMarkers();
  }

  // ---- preview loop -----------------------------------------------------

  schedulePreviewPoll(): void {
    if (this.previewInFlight) {
      this.previewDirty = true;
      return;
    }
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.previewInFlight = true;
    void this.pollOnce().finally(() => {
      this.previewInFlight = false;
      if (this.previewDirty) {
        this.previewDirty = false;
        this.schedulePreviewPoll();
      }
    });
  }

  private async pollOnce(): Promise<void> {
    let result: PreviewResult;
    try {
      result = await this.api.getPreview(
        this.state.sessionId,
        this.state.lastPreviewRevision,
      );
    } catch (err) {
      if (err instanceof ApiError) {
        this.showError(err);
        return;
      }
      // transport trouble: keep the badge up and retry with backoff
      this.retryTimer = setTimeout(() => {
        this.retryTimer = null;
        this.schedulePreviewPoll();
      }, this.backoffMs);
      this.backoffMs = Math.min(this.backoffMs * 2, RETRY_CAP_MS);
      this.updateBadge();
      return;
    }
    this.backoffMs = RETRY_BASE_MS;
    this.applyPreview(result);
  }

  private applyPreview(result: PreviewResult): void {
    this.noteRevision(result.revision);
    if (result.kind === "not-modified") {
      return;
    }
    if (result.kind === "empty") {
      // an emptied session still advances the counter; show the blank
      // pane rather than a stale frame
      const { state, accepted } = acceptPreview(this.state, result.revision);
      if (accepted) {
        this.state = state;
        this.els.previewImage.hidden = true;
        this.els.previewNote.hidden = false;
      }
      this.updateBadge();
      return;
    }
    const { state, accepted } = acceptPreview(this.state, result.revision);
    if (!accepted) {
      return;
    }
    this.state = state;
    this.els.previewImage.src =
      "data:image/png;base64," + bytesToBase64(result.png);
    this.els.previewImage.hidden = false;
    this.els.previewNote.hidden = true;
    this.paneRedraws += 1;
    this.previewLog.push(result.revision);
    this.updateBadge();
  }

  private noteRevision(revision: number): void {
    if (revision > this.knownServerRevision) {
      this.knownServerRevision = revision;
    }
    this.updateBadge();
  }

  private updateBadge(): void {
    this.els.staleBadge.hidden = !isStale(this.state, this.knownServerRevision);
  }

  // ---- table, markers, export -------------------------------------------

  private renderTable(): void {
    const body = this.els.tableBody;
    body.textContent = "";
    const doc = body.ownerDocument;
    this.state.pairs.forEach((pair, index) => {
      const row = doc.createElement("tr");
      row.dataset.index = String(index);
      const swatch = `rgb(${pair.v[0]}, ${pair.v[1]}, ${pair.v[2]})`;
      row.innerHTML =
        `<td>${index + 1}</td>` +
        `<td>(${pair.hsi[0]}, ${pair.hsi[1]})</td>` +
        `<td>(${pair.rgb[0]}, ${pair.rgb[1]})</td>` +
        `<td><span class="swatch" style="background:${swatch}"></span></td>`;
      const cell = doc.createElement("td");
      const remove = doc.createElement("button");
      remove.type = "button";
      remove.className = "remove-button";
      remove.textContent = "remove";
      remove.addEventListener("click", (ev) => {
        ev.stopPropagation();
        this.deletePair(index);
      });
      cell.appendChild(remove);
      row.appendChild(cell);
      row.addEventListener("mouseenter", () => this.setHoveredRow(index));
      row.addEventListener("mouseleave", () => this.setHoveredRow(-1));
      body.appendChild(row);
    });
    this.els.pairCount.textContent = String(this.state.pairs.length);
    this.els.exportButton.disabled = this.state.pairs.length === 0;
  }

  private setHoveredRow(index: number): void {
    this.hoveredRow = index;
    this.renderMarkers();
  }

  private renderMarkers(): void {
    this.paintMarkers("hsi", this.els.hsiMarkers, [
      this.session.cubeWidth,
      this.session.cubeHeight,
    ]);
    this.paintMarkers("rgb", this.els.rgbMarkers, [
      this.session.referenceWidth,
      this.session.referenceHeight,
    ]);
  }

  private paintMarkers(
    side: ImageSide,
    layer: HTMLElement,
    natural: [number, number],
  ): void {
    const doc = layer.ownerDocument;
    layer.textContent = "";
    const place = (el: HTMLElement, x: number, y: number) => {
      el.style.left = `${((x + 0.5) / natural[0]) * 100}%`;
      el.style.top = `${((y + 0.5) / natural[1]) * 100}%`;
    };
    this.state.pairs.forEach((pair, index) => {
      const [x, y] = side === "hsi" ? pair.hsi : pair.rgb;
      const marker = doc.createElement("div");
      marker.className =
        index === this.hoveredRow ? "marker pair hot" : "marker pair";
      marker.dataset.index = String(index);
      marker.textContent = String(index + 1);
      place(marker, x, y);
      layer.appendChild(marker);
    });
    const pending = this.state.pendingClick;
    if (pending !== null && pending.side === side) {
      const marker = doc.createElement("div");
      marker.className = "marker pending";
      place(marker, pending.x, pending.y);
      layer.appendChild(marker);
    }
  }

  async exportFile(): Promise<void> {
    try {
      const exported = await this.api.exportPoints(this.state.sessionId);
      this.noteRevision(exported.revision);
      this.lastExport = { filename: exported.filename, data: exported.data };
      this.triggerDownload(exported.filename, exported.data);
      this.setStatus(`exported ${exported.filename}`);
    } catch (err) {
      this.showError(err);
    }
  }

  private triggerDownload(filename: string, data: Uint8Array): void {
    const doc = this.els.exportButton.ownerDocument;
    const view = doc.defaultView;
    // headless DOMs treat a download click as navigation; the bytes are
    // still kept on lastExport for the caller
    if (
      view === null ||
      typeof view.URL.createObjectURL !== "function" ||
      view.navigator.userAgent.includes("jsdom")
    ) {
      return;
    }
    const url = view.URL.createObjectURL(
      new view.Blob([data.slice().buffer], { type: "application/json" }),
    );
    const anchor = doc.createElement("a");
    anchor.href = url;
    anchor.download = filename;
    doc.body.appendChild(anchor);
    anchor.click();
    anchor.remove();
    view.URL.revokeObjectURL(url);
  }

  // ---- status helpers ---------------------------------------------------

  private renderBusy(): void {
    this.els.statusLine.classList.toggle("busy", this.state.busy);
  }

  private setStatus(text: string): void {
    this.els.statusLine.textContent = text;
  }

  private showError(err: unknown): void {
    const text =
      err instanceof ApiError
        ? err.message
        : "cannot reach the preview service, retrying";
    this.els.errorLine.textContent = text;
    this.els.errorLine.hidden = false;
  }

  private clearError(): void {
    this.els.errorLine.textContent = "";
    this.els.errorLine.hidden = true;
  }

  /**
   * Resolve once no mutation is queued, no preview request is running,
   * and no retry is scheduled. Test hook; the app itself never waits.
   */
  async whenQuiescent(): Promise<void> {
    for (;;) {
      await this.mutationChain;
      if (
        this.pendingMutations === 0 &&
        !this.previewInFlight &&
        !this.previewDirty &&
        this.retryTimer === null
      ) {
        return;
      }
      await new Promise((resolve) => setTimeout(resolve, 10));
    }
  }
}
