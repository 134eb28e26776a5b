/**
 * Typed client for the preview service. Everything the UI knows about
 * the session lives behind these endpoints; the frontend never touches
 * cube or image files directly.
 */

export interface SessionInfo {
  sessionId: string;
  revision: number;
  cubeWidth: number;
  cubeHeight: number;
  cubeBands: number;
  referenceWidth: number;
  referenceHeight: number;
  previewStride: number;
  hsiProxyUrl: string;
  referenceUrl: string;
}

export interface RevisionAck {
  revision: number;
  count: number;
}

export interface PairRecord {
  u: number[];
  v: number[];
  hsi: [number, number];
  rgb: [number, number];
}

export interface PointsSnapshot {
  revision: number;
  count: number;
  bands: number;
  sensor: string;
  pairs: PairRecord[];
}

export type PreviewResult =
  | { kind: "image"; revision: number; png: Uint8Array }
  | { kind: "empty"; revision: number }
  | { kind: "not-modified"; revision: number };

export interface SessionUpload {
  cubeHeader: Uint8Array;
  cubeData: Uint8Array;
  reference: Uint8Array;
  previewStride?: number;
  sensor?: string;
}

export interface ExportedFile {
  revision: number;
  filename: string;
  data: Uint8Array;
}

/** Server-side rejection, carrying the service's error code. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

interface UploadPart {
  name: string;
  value: string | Uint8Array;
  filename?: string;
  contentType?: string;
}

// Multipart bodies are assembled by hand: the page runs on the browser's
// FormData but the test harness runs on node's, and the two do not feed
// the same fetch implementation interchangeably. A fixed encoder does.
function encodeMultipart(parts: UploadPart[]): {
  body: Uint8Array<ArrayBuffer>;
  contentType: string;
} {
  const boundary =
    "----matcher-ui-" +
    Array.from({ length: 4 }, () =>
      Math.floor(Math.random() * 0xffffffff).toString(16),
    ).join("");
  const encoder = new TextEncoder();
  const chunks: Uint8Array[] = [];
  for (const part of parts) {
    let head = `--${boundary}\r\nContent-Disposition: form-data; name="${part.name}"`;
    if (part.filename !== undefined) {
      head += `; filename="${part.filename}"`;
    }
    head += "\r\n";
    if (part.contentType !== undefined) {
      head += `Content-Type: ${part.contentType}\r\n`;
    }
    head += "\r\n";
    chunks.push(encoder.encode(head));
    chunks.push(
      typeof part.value === "string" ? encoder.encode(part.value) : part.value,
    );
    chunks.push(encoder.encode("\r\n"));
  }
  chunks.push(encoder.encode(`--${boundary}--\r\n`));
  const total = chunks.reduce((n, c) => n + c.length, 0);
  const body = new Uint8Array(total);
  let offset = 0;
  for (const chunk of chunks) {
    body.set(chunk, offset);
    offset += chunk.length;
  }
  return { body, contentType: `multipart/form-data; boundary=${boundary}` };
}

async function rejectionFrom(response: Response): Promise<ApiError> {
  let code = "unknown";
  let message = `request failed with status ${response.status}`;
  try {
    const payload = await response.json();
    if (typeof payload.code === "string") {
      code = payload.code;
    }
    if (typeof payload.message === "string") {
      message = payload.message;
    }
  } catch {
    // non-JSON error body, keep the generic message
  }
  return new ApiError(response.status, code, message);
}

function revisionHeader(response: Response): number {
  const raw = response.headers.get("X-Revision");
  const value = raw === null ? NaN : Number(raw);
  if (!Number.isFinite(value)) {
    throw new ApiError(response.status, "bad-header", "missing X-Revision header");
  }
  return value;
}

export class MatcherApi {
  constructor(private readonly baseUrl: string = "") {}

  private url(path: string): string {
    return this.baseUrl + path;
  }

  async createSession(upload: SessionUpload): Promise<SessionInfo> {
    const parts: UploadPart[] = [
      {
        name: "cube_header",
        value: upload.cubeHeader,
        filename: "cube.hdr",
        contentType: "application/octet-stream",
      },
      {
        name: "cube_data",
        value: upload.cubeData,
        filename: "cube.raw",
        contentType: "application/octet-stream",
      },
      {
        name: "reference",
        value: upload.reference,
        filename: "reference.png",
        contentType: "image/png",
      },
    ];
    if (upload.previewStride !== undefined) {
      parts.push({ name: "preview_stride", value: String(upload.previewStride) });
    }
    if (upload.sensor !== undefined) {
      parts.push({ name: "sensor", value: upload.sensor });
    }
    const { body, contentType } = encodeMultipart(parts);
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "Content-Type": contentType },
      body,
    });
    if (!response.ok) {
      throw await rejectionFrom(response);
    }
    return (await response.json()) as SessionInfo;
  }

  hsiProxyUrl(sessionId: string, stride = 1): string {
    return this.url(`/sessions/${sessionId}/hsi-proxy.png?stride=${stride}`);
  }

  referenceUrl(sessionId: string, stride = 1): string {
    return this.url(`/sessions/${sessionId}/reference.png?stride=${stride}`);
  }

  async addPoint(
    sessionId: string,
    hsi: [number, number],
    rgb: [number, number],
  ): Promise<RevisionAck> {
    const response = await fetch(this.url(`/sessions/${sessionId}/points`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ hsi, rgb }),
    });
    if (!response.ok) {
      throw await rejectionFrom(response);
    }
    return (await response.json()) as RevisionAck;
  }

  async removePoint(sessionId: string, index: number): Promise<RevisionAck> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/points/${index}`),
      { method: "DELETE" },
    );
    if (!response.ok) {
      throw await rejectionFrom(response);
    }
    return (await response.json()) as RevisionAck;
  }

  async listPoints(sessionId: string): Promise<PointsSnapshot> {
    const response = await fetch(this.url(`/sessions/${sessionId}/points`));
    if (!response.ok) {
      throw await rejectionFrom(response);
    }
    return (await response.json()) as PointsSnapshot;
  }

  /**
   * Poll the preview. `since` is the revision already on screen; the
   * server answers 304 when nothing changed, a JSON note while the
   * session has no points, or the rendered PNG tagged with its revision.
   */
  async getPreview(sessionId: string, since?: number): Promise<PreviewResult> {
    const query = since === undefined ? "" : `?since=${since}`;
    const response = await fetch(
      this.url(`/sessions/${sessionId}/preview.png${query}`),
    );
    if (response.status === 304) {
      return { kind: "not-modified", revision: revisionHeader(response) };
    }
    if (!response.ok) {
      throw await rejectionFrom(response);
    }
    const type = response.headers.get("Content-Type") ?? "";
    if (type.includes("application/json")) {
      const payload = await response.json();
      return { kind: "empty", revision: payload.revision as number };
    }
    const png = new Uint8Array(await response.arrayBuffer());
    return { kind: "image", revision: revisionHeader(response), png };
  }

  async exportPoints(sessionId: string): Promise<ExportedFile> {
    const response = await fetch(this.url(`/sessions/${sessionId}/export`));
    if (!response.ok) {
      throw await rejectionFrom(response);
    }
    const disposition = response.headers.get("Content-Disposition") ?? "";
    const match = /filename=([^;]+)/.exec(disposition);
    return {
      revision: revisionHeader(response),
      filename: match === null ? "control-points.json" : match[1].trim(),
      data: new Uint8Array(await response.arrayBuffer()),
    };
  }
}
