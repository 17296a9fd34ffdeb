/** Client for the labeling server's JSON API. */

export interface SegmentPayload {
  states: number[][];
  actions: number[][];
}

export interface PairPayload {
  pair_id: string;
  k: number;
  env: string;
  seg0: SegmentPayload;
  seg1: SegmentPayload;
  bounds: { low: number[]; high: number[] };
}

export interface Progress {
  done: number;
  target: number;
}

export type Choice = "left" | "right" | "equal";

/** Fixed label mapping: left segment preferred = 0, right = 1, tie = 0.5. */
export const LABEL_FOR_CHOICE: Record<Choice, number> = {
  left: 0,
  right: 1,
  equal: 0.5,
};

export interface LabelRequest {
  path: string;
  body: string;
}

/** Encode one label submission; the body is exactly what the server expects. */
export function encodeLabelRequest(pairId: string, choice: Choice): LabelRequest {
  return {
    path: "/api/label",
    body: JSON.stringify({ pair_id: pairId, y: LABEL_FOR_CHOICE[choice] }),
  };
}

export interface LabelResult {
  status: number;
  progress: Progress | null;
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  /** Next pending pair, or null when the session is complete (204). */
  async getPair(): Promise<PairPayload | null> {
    const resp = await this.fetchFn(`${this.base}/api/pair`);
    if (resp.status === 204) {
      return null;
    }
    if (!resp.ok) {
      throw new Error(`GET /api/pair failed with ${resp.status}`);
    }
    return (await resp.json()) as PairPayload;
  }

  /** Submit one label; returns the HTTP status plus progress on success. */
  async postLabel(pairId: string, choice: Choice): Promise<LabelResult> {
    const req = encodeLabelRequest(pairId, choice);
    const resp = await this.fetchFn(`${this.base}${req.path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: req.body,
    });
    const progress = resp.status === 200 ? ((await resp.json()) as Progress) : null;
    return { status: resp.status, progress };
  }

  async getProgress(): Promise<Progress> {
    const resp = await this.fetchFn(`${this.base}/api/progress`);
    if (!resp.ok) {
      throw new Error(`GET /api/progress failed with ${resp.status}`);
    }
    return (await resp.json()) as Progress;
  }
}
