export type Choice = "original" | "corrected";
export type DecisionState = Choice | "none";

export interface ManifestEntry {
  video_id: string;
  frame_count: number;
  fps: number;
  frames_available: boolean;
  original_available: boolean;
  corrected_available: boolean;
  decision: DecisionState;
  operator: string | null;
  timestamp: number | null;
}

/** [x, y, w, h] in image pixels, origin top-left. */
export type Rect = [number, number, number, number];

export interface TrackJson {
  video_id: string;
  fps: number;
  exist: number[];
  gt_rect: (Rect | null)[];
}

export interface DecisionRecord {
  video_id: string;
  choice: Choice;
  operator: string;
  timestamp: number;
}
