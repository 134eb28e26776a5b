/**
 * Page bootstrap: read the three uploads from the setup form, open a
 * session on the preview service, then hand the workspace to the app
 * controller.
 */

import { ApiError, MatcherApi } from "./api.js";
import { MatcherApp, collectElements } from "./app.js";

function grab<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) {
    throw new Error(`setup element #${id} missing from page`);
  }
  return el as T;
}

async function fileBytes(input: HTMLInputElement): Promise<Uint8Array> {
  const file = input.files?.[0];
  if (file === undefined) {
    throw new Error(`choose a file for ${input.name}`);
  }
  return new Uint8Array(await file.arrayBuffer());
}

async function openSession(): Promise<void> {
  const setupError = grab("setup-error");
  const openButton = grab<HTMLButtonElement>("open-button");
  setupError.hidden = true;
  openButton.disabled = true;
  try {
    const api = new MatcherApi("");
    const stride = Number(grab<HTMLInputElement>("stride-input").value || "1");
    const session = await api.createSession({
      cubeHeader: await fileBytes(grab<HTMLInputElement>("cube-header-input")),
      cubeData: await fileBytes(grab<HTMLInputElement>("cube-data-input")),
      reference: await fileBytes(grab<HTMLInputElement>("reference-input")),
      previewStride: stride,
      sensor: grab<HTMLInputElement>("sensor-input").value,
    });
    grab("setup").hidden = true;
    grab("workspace").hidden = false;
    new MatcherApp(api, session, collectElements(document));
  } catch (err) {
    openButton.disabled = false;
    setupError.textContent =
      err instanceof ApiError || err instanceof Error
        ? err.message
        : "failed to open session";
    setupError.hidden = false;
  }
}

document.addEventListener("DOMContentLoaded", () => {
  grab<HTMLButtonElement>("open-button").addEventListener("click", () => {
    void openSession();
  });
});
