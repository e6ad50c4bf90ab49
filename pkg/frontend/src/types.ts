/** Payload shapes of the review service API, plus the display mapping. */

export type Verdict = "keep" | "drop";

/** One element of the GET /api/pending response. */
export interface PendingPayload {
  id: string;
  path: string;
  meta: Record<string, unknown>;
}

/** GET /api/progress response. */
export interface Progress {
  total: number;
  decided: number;
  kept: number;
  dropped: number;
}

/** POST /api/decision response. */
export interface DecisionResponse {
  accepted: boolean;
  decided_count: number;
}

/** A pending record prepared for display; meta is kept verbatim. */
export interface PendingItem {
  id: string;
  imageUrl: string;
  prompt: string;
  style: string;
  stage: string;
  meta: Record<string, unknown>;
}

function metaText(meta: Record<string, unknown>, key: string): string {
  const value = meta[key];
  if (value === undefined || value === null) return "";
  return typeof value === "string" ? value : String(value);
}

export function toPendingItem(raw: PendingPayload, imageUrl: string): PendingItem {
  const meta = raw.meta ?? {};
  return {
    id: raw.id,
    imageUrl,
    prompt: metaText(meta, "prompt"),
    style: metaText(meta, "style"),
    stage: metaText(meta, "stage"),
    meta,
  };
}
