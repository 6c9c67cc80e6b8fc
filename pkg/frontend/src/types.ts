/** Wire types for the generation service's /v1 endpoints. */

/** One task's generation: tokens, per-step gate values, and attention rows. */
export interface TaskResult {
  task: string;
  tokens: string[];
  text: string;
  /** Length-normalized log-probability of the decoded sequence. */
  score: number;
  /** Generate-vs-copy gate per output token, each in [0, 1]. */
  p_gen: number[];
  /** One row per output token over the source tokens; rows sum to 1. */
  attention: number[][];
}

export interface GenerateResponse {
  src_tokens: string[];
  results: TaskResult[];
}

export interface Post {
  id: string;
  title: string;
  summary: string;
  text: string;
  created_at: string;
  updated_at: string;
}

export interface HealthResponse {
  status: string;
  tasks: string[];
}

/** Error body shape shared by all endpoints. */
export interface ErrorResponse {
  error: string;
}
