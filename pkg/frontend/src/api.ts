import type { Choice, DecisionRecord, ManifestEntry, TrackJson } from "./types.js";

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new Error(`GET ${url} failed: ${response.status}`);
  }
  return (await response.json()) as T;
}

export async function fetchManifest(): Promise<ManifestEntry[]> {
  const doc = await getJson<{ videos: ManifestEntry[] }>("/api/videos");
  return doc.videos;
}

export async function fetchAnnotations(
  videoId: string,
  set: Choice,
): Promise<TrackJson> {
  return getJson<TrackJson>(
    `/api/videos/${encodeURIComponent(videoId)}/annotations?set=${set}`,
  );
}

/** Frames are addressed 1-based, matching the service. */
export function frameUrl(videoId: string, frame: number): string {
  return `/api/videos/${encodeURIComponent(videoId)}/frames/${frame}`;
}

export async function postDecision(
  videoId: string,
  choice: Choice,
  operator: string,
): Promise<DecisionRecord> {
  const response = await fetch(
    `/api/videos/${encodeURIComponent(videoId)}/decision`,
    {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ choice, operator }),
    },
  );
  if (!response.ok) {
    throw new Error(`decision rejected: ${response.status}`);
  }
  return (await response.json()) as DecisionRecord;
}
