/**
 * Pure editor state and transitions. Everything here is a plain function of
 * its inputs — rendering and service calls live elsewhere — so the workflow
 * rules (staleness, highlight threshold, adoption targets) are directly
 * unit-testable.
 */

import type { GenerateResponse, TaskResult } from './types';

export interface Draft {
  title: string;
  summary: string;
  text: string;
}

export interface EditorState {
  draft: Draft;
  /** Tokenized article the current suggestions were generated from. */
  srcTokens: string[];
  /** One record per task tab; empty when no suggestions are held. */
  suggestions: TaskResult[];
  activeTab: string | null;
  /** Hovered output-token position in the active tab, or null. */
  hoverIndex: number | null;
  /** True while a generation request is in flight. */
  pending: boolean;
  /** Inline, non-blocking notice (service errors); null when clear. */
  notice: string | null;
}

export function initialState(): EditorState {
  return {
    draft: { title: '', summary: '', text: '' },
    srcTokens: [],
    suggestions: [],
    activeTab: null,
    hoverIndex: null,
    pending: false,
    notice: null,
  };
}

/**
 * Apply one field edit. Editing the article text invalidates any held
 * suggestions — they were generated for the previous text — while title and
 * summary edits leave them in place.
 */
export function editDraft(
  state: EditorState,
  field: keyof Draft,
  value: string,
): EditorState {
  const next: EditorState = {
    ...state,
    draft: { ...state.draft, [field]: value },
  };
  if (field === 'text') {
    next.srcTokens = [];
    next.suggestions = [];
    next.activeTab = null;
    next.hoverIndex = null;
  }
  return next;
}

/** A generation request needs non-empty text and no request in flight. */
export function canRequest(state: EditorState): boolean {
  return state.draft.text.trim().length > 0 && !state.pending;
}

/** A draft can be posted whenever its text is non-empty. */
export function canPost(state: EditorState): boolean {
  return state.draft.text.trim().length > 0;
}

/** Store a generation response; the first task's tab becomes active. */
export function receiveSuggestions(
  state: EditorState,
  response: GenerateResponse,
): EditorState {
  return {
    ...state,
    srcTokens: response.src_tokens,
    suggestions: response.results,
    activeTab: response.results.length > 0 ? response.results[0]!.task : null,
    hoverIndex: null,
    notice: null,
  };
}

export function selectTab(state: EditorState, task: string): EditorState {
  return { ...state, activeTab: task, hoverIndex: null };
}

export function activeSuggestion(state: EditorState): TaskResult | null {
  return state.suggestions.find((s) => s.task === state.activeTab) ?? null;
}

/**
 * Source positions to highlight for one attention row: every entry at least
 * half the row maximum. A one-hot row picks exactly its hot index; a uniform
 * row picks every index.
 */
export function highlightIndices(row: readonly number[]): Set<number> {
  if (row.length === 0) return new Set();
  const threshold = Math.max(...row) * 0.5;
  const indices = new Set<number>();
  row.forEach((weight, i) => {
    if (weight >= threshold) indices.add(i);
  });
  return indices;
}

/** Highlighted source positions for the current hover, or empty. */
export function hoverHighlights(state: EditorState): Set<number> {
  const suggestion = activeSuggestion(state);
  if (suggestion === null || state.hoverIndex === null) return new Set();
  const row = suggestion.attention[state.hoverIndex];
  return row === undefined ? new Set() : highlightIndices(row);
}

/** Which draft field a task's suggestion fills when adopted. */
export function fieldForTask(task: string): 'title' | 'summary' {
  return task.includes('headline') ? 'title' : 'summary';
}

/**
 * Copy a tab's suggested text into the draft field it targets. The
 * suggestion record itself is never touched, so the field stays freely
 * editable and repeated adoptions simply overwrite (last one wins).
 */
export function adoptSuggestion(state: EditorState, task: string): EditorState {
  const suggestion = state.suggestions.find((s) => s.task === task);
  if (suggestion === undefined) return state;
  return editDraft(state, fieldForTask(task), suggestion.text);
}
