/**
 * Session state for the pair-picking workflow, kept free of DOM and
 * network concerns so the transition rules are testable on their own.
 *
 * The rules that matter:
 *  - a click arms a pending marker; a click on the other image completes
 *    the pair; a second click on the same image just moves the marker
 *  - `pairs` is always a mirror of what the server last acknowledged
 *  - the preview pane only ever moves forward in revisions
 */

export type ImageSide = "hsi" | "rgb";

export interface PendingClick {
  side: ImageSide;
  x: number;
  y: number;
}

/** One control-point pair as reported back by the server. */
export interface PairRow {
  hsi: [number, number];
  rgb: [number, number];
  /** spectral signature sampled at the cube pixel */
  u: number[];
  /** reference color sampled at the photo pixel */
  v: number[];
}

export interface UiSessionState {
  sessionId: string;
  pendingClick: PendingClick | null;
  pairs: PairRow[];
  lastPreviewRevision: number;
  busy: boolean;
}

/** Both halves of a completed pair, ready to send to the server. */
export interface PairSubmission {
  hsi: [number, number];
  rgb: [number, number];
  /** the click that armed the pair; restored if the server rejects it */
  first: PendingClick;
}

export function newSessionState(sessionId: string): UiSessionState {
  return {
    sessionId,
    pendingClick: null,
    pairs: [],
    lastPreviewRevision: 0,
    busy: false,
  };
}

/**
 * Feed one image click into the state machine.
 *
 * Returns the next state plus, when this click completed a pair, the
 * submission the caller should send. A click on the already-armed image
 * replaces the marker without producing a submission.
 */
export function registerClick(
  state: UiSessionState,
  side: ImageSide,
  x: number,
  y: number,
): { state: UiSessionState; submit: PairSubmission | null } {
  const pending = state.pendingClick;
  if (pending === null || pending.side === side) {
    return {
      state: { ...state, pendingClick: { side, x, y } },
      submit: null,
    };
  }
  const clicks: Record<ImageSide, [number, number]> = {
    [pending.side]: [pending.x, pending.y],
    [side]: [x, y],
  } as Record<ImageSide, [number, number]>;
  return {
    state: { ...state, pendingClick: null },
    submit: { hsi: clicks.hsi, rgb: clicks.rgb, first: pending },
  };
}

/** Drop the armed click (explicit cancel). */
export function clearPending(state: UiSessionState): UiSessionState {
  if (state.pendingClick === null) {
    return state;
  }
  return { ...state, pendingClick: null };
}

/** Re-arm the first click of a pair the server refused. */
export function restorePending(
  state: UiSessionState,
  first: PendingClick,
): UiSessionState {
  return { ...state, pendingClick: { ...first } };
}

/** Replace the local pair list with the server's acknowledged state. */
export function mirrorPairs(
  state: UiSessionState,
  pairs: PairRow[],
): UiSessionState {
  return { ...state, pairs: pairs.map((p) => ({ ...p })) };
}

export function setBusy(state: UiSessionState, busy: boolean): UiSessionState {
  if (state.busy === busy) {
    return state;
  }
  return { ...state, busy };
}

/**
 * Gate a preview response against the monotone-display rule. Only a
 * strictly newer revision is accepted; anything else is a stale frame
 * that must not reach the pane.
 */
export function acceptPreview(
  state: UiSessionState,
  revision: number,
): { state: UiSessionState; accepted: boolean } {
  if (revision <= state.lastPreviewRevision) {
    return { state, accepted: false };
  }
  return {
    state: { ...state, lastPreviewRevision: revision },
    accepted: true,
  };
}

/** True while the pane lags behind the newest revision seen from the server. */
export function isStale(
  state: UiSessionState,
  knownServerRevision: number,
): boolean {
  return knownServerRevision > state.lastPreviewRevision;
}
