import type { DecisionState, ManifestEntry } from "./types.js";

/** What the operator currently sees; frame is 1-based. */
export interface ViewState {
  videoId: string | null;
  frame: number;
  frameCount: number;
  showOriginal: boolean;
  showCorrected: boolean;
  playing: boolean;
  rate: number; // frames advanced per tick
}

export const PLAYBACK_RATES = [1, 2, 4, 8];

export function initialState(): ViewState {
  return {
    videoId: null,
    frame: 1,
    frameCount: 0,
    showOriginal: true,
    showCorrected: true,
    playing: false,
    rate: 1,
  };
}

export function selectVideo(state: ViewState, entry: ManifestEntry): ViewState {
  return {
    ...state,
    videoId: entry.video_id,
    frame: 1,
    frameCount: entry.frame_count,
    playing: false,
  };
}

/** Clamped scrubbing: never leaves [1, frameCount]. */
export function stepFrame(state: ViewState, delta: number): ViewState {
  if (state.frameCount === 0) {
    return state;
  }
  const frame = Math.min(Math.max(state.frame + delta, 1), state.frameCount);
  return { ...state, frame };
}

/** Playback tick; stops at the last frame instead of wrapping. */
export function tick(state: ViewState): ViewState {
  if (!state.playing || state.frameCount === 0) {
    return state;
  }
  if (state.frame >= state.frameCount) {
    return { ...state, playing: false };
  }
  return stepFrame(state, state.rate);
}

export function togglePlay(state: ViewState): ViewState {
  if (state.frameCount === 0) {
    return state;
  }
  return { ...state, playing: !state.playing };
}

export function cycleRate(state: ViewState): ViewState {
  const index = PLAYBACK_RATES.indexOf(state.rate);
  const rate = PLAYBACK_RATES[(index + 1) % PLAYBACK_RATES.length];
  return { ...state, rate };
}

export function toggleOverlay(
  state: ViewState,
  which: "original" | "corrected",
): ViewState {
  return which === "original"
    ? { ...state, showOriginal: !state.showOriginal }
    : { ...state, showCorrected: !state.showCorrected };
}

/** Badge text for a video row. */
export function badgeLabel(decision: DecisionState): string {
  return decision === "none" ? "undecided" : decision;
}

/** New manifest with one video's decision replaced (used optimistically and
 * for rollback). */
export function withDecision(
  entries: ManifestEntry[],
  videoId: string,
  decision: DecisionState,
): ManifestEntry[] {
  return entries.map((entry) =>
    entry.video_id === videoId ? { ...entry, decision } : entry,
  );
}
