/**
 * Single-page blog editor over the generation service. One screen drafts an
 * article, requests suggestions (one tab per serving task), inspects them via
 * attention-driven source highlighting, and adopts them into the title or
 * summary field; posting switches to the article list.
 */

import { ServiceClient } from './api';
import {
  EditorState,
  adoptSuggestion,
  activeSuggestion,
  canPost,
  canRequest,
  editDraft,
  fieldForTask,
  hoverHighlights,
  initialState,
  receiveSuggestions,
  selectTab,
} from './editor';
import type { Draft } from './editor';
import type { Post } from './types';

export class EditorApp {
  private state: EditorState = initialState();
  private view: 'editor' | 'list' = 'editor';
  private posts: Post[] = [];
  private inflight: Promise<void> = Promise.resolve();

  private readonly titleInput: HTMLInputElement;
  private readonly summaryInput: HTMLTextAreaElement;
  private readonly textInput: HTMLTextAreaElement;
  private readonly requestBtn: HTMLButtonElement;
  private readonly postBtn: HTMLButtonElement;
  private readonly noticeEl: HTMLElement;
  private readonly tabsEl: HTMLElement;
  private readonly suggestionEl: HTMLElement;
  private readonly articleEl: HTMLElement;
  private readonly editorView: HTMLElement;
  private readonly listView: HTMLElement;
  private readonly postList: HTMLElement;

  constructor(
    root: HTMLElement,
    private readonly client: ServiceClient,
    private readonly tasks: string[],
  ) {
    root.innerHTML = `
      <section id="editor-view">
        <input id="title-input" placeholder="title" />
        <textarea id="summary-input" placeholder="summary"></textarea>
        <textarea id="text-input" placeholder="write your article"></textarea>
        <div class="actions">
          <button id="request-btn">Suggest</button>
          <button id="post-btn">Post</button>
        </div>
        <div id="notice" hidden></div>
        <div id="tabs"></div>
        <div id="suggestion"></div>
        <div id="article"></div>
      </section>
      <section id="list-view" hidden>
        <button id="back-btn">New post</button>
        <ul id="post-list"></ul>
      </section>
    `;
    this.editorView = this.require(root, '#editor-view');
    this.listView = this.require(root, '#list-view');
    this.titleInput = this.require(root, '#title-input');
    this.summaryInput = this.require(root, '#summary-input');
    this.textInput = this.require(root, '#text-input');
    this.requestBtn = this.require(root, '#request-btn');
    this.postBtn = this.require(root, '#post-btn');
    this.noticeEl = this.require(root, '#notice');
    this.tabsEl = this.require(root, '#tabs');
    this.suggestionEl = this.require(root, '#suggestion');
    this.articleEl = this.require(root, '#article');
    this.postList = this.require(root, '#post-list');

    this.titleInput.addEventListener('input', () =>
      this.edit('title', this.titleInput.value),
    );
    this.summaryInput.addEventListener('input', () =>
      this.edit('summary', this.summaryInput.value),
    );
    this.textInput.addEventListener('input', () =>
      this.edit('text', this.textInput.value),
    );
    this.requestBtn.addEventListener('click', () =>
      this.enqueue(() => this.requestSuggestions()),
    );
    this.postBtn.addEventListener('click', () =>
      this.enqueue(() => this.submitPost()),
    );
    this.require(root, '#back-btn').addEventListener('click', () => {
      this.state = initialState();
      this.view = 'editor';
      this.render();
    });
    this.render();
  }

  /** Resolves once every handler started so far has finished. */
  whenIdle(): Promise<void> {
    return this.inflight;
  }

  private enqueue(action: () => Promise<void>): void {
    this.inflight = this.inflight.then(action);
  }

  private edit(field: keyof Draft, value: string): void {
    this.state = editDraft(this.state, field, value);
    this.render();
  }

  private async requestSuggestions(): Promise<void> {
    if (!canRequest(this.state)) return;
    this.state = { ...this.state, pending: true, notice: null };
    this.render();
    try {
      const response = await this.client.generate(
        this.state.draft.text,
        this.tasks,
      );
      this.state = receiveSuggestions(this.state, response);
    } catch (error) {
      this.state = { ...this.state, notice: this.describe(error) };
    }
    this.state = { ...this.state, pending: false };
    this.render();
  }

  private async submitPost(): Promise<void> {
    if (!canPost(this.state)) return;
    try {
      await this.client.createPost({ ...this.state.draft });
      this.posts = await this.client.listPosts();
      this.view = 'list';
    } catch (error) {
      this.state = { ...this.state, notice: this.describe(error) };
    }
    this.render();
  }

  private describe(error: unknown): string {
    return error instanceof Error ? error.message : String(error);
  }

  private render(): void {
    this.editorView.hidden = this.view !== 'editor';
    this.listView.hidden = this.view !== 'list';
    if (this.view === 'list') {
      this.renderPosts();
      return;
    }
    if (this.titleInput.value !== this.state.draft.title) {
      this.titleInput.value = this.state.draft.title;
    }
    if (this.summaryInput.value !== this.state.draft.summary) {
      this.summaryInput.value = this.state.draft.summary;
    }
    if (this.textInput.value !== this.state.draft.text) {
      this.textInput.value = this.state.draft.text;
    }
    this.requestBtn.disabled = !canRequest(this.state);
    this.postBtn.disabled = !canPost(this.state);
    this.noticeEl.hidden = this.state.notice === null;
    this.noticeEl.textContent = this.state.notice ?? '';
    this.renderTabs();
    this.renderSuggestion();
    this.renderArticle();
  }

  private renderTabs(): void {
    this.tabsEl.textContent = '';
    for (const suggestion of this.state.suggestions) {
      const tab = document.createElement('button');
      tab.className = 'tab';
      tab.dataset.task = suggestion.task;
      tab.textContent = suggestion.task;
      if (suggestion.task === this.state.activeTab) {
        tab.classList.add('active');
      }
      tab.addEventListener('click', () => {
        this.state = selectTab(this.state, suggestion.task);
        this.render();
      });
      this.tabsEl.appendChild(tab);
    }
  }

  private renderSuggestion(): void {
    this.suggestionEl.textContent = '';
    const suggestion = activeSuggestion(this.state);
    if (suggestion === null) return;

    const tokens = document.createElement('div');
    tokens.className = 'out-tokens';
    suggestion.tokens.forEach((token, i) => {
      const span = document.createElement('span');
      span.className = 'out-token';
      span.dataset.index = String(i);
      span.textContent = token;
      const gate = suggestion.p_gen[i];
      if (gate !== undefined) {
        span.title = `p_gen ${gate.toFixed(3)}`;
      }
      span.addEventListener('mouseenter', () => {
        this.state = { ...this.state, hoverIndex: i };
        this.renderArticle();
      });
      span.addEventListener('mouseleave', () => {
        this.state = { ...this.state, hoverIndex: null };
        this.renderArticle();
      });
      tokens.appendChild(span);
    });
    this.suggestionEl.appendChild(tokens);

    const adopt = document.createElement('button');
    adopt.id = 'adopt-btn';
    adopt.textContent = `Use as ${fieldForTask(suggestion.task)}`;
    adopt.addEventListener('click', () => {
      this.state = adoptSuggestion(this.state, suggestion.task);
      this.render();
    });
    this.suggestionEl.appendChild(adopt);
  }

  private renderArticle(): void {
    this.articleEl.textContent = '';
    const highlighted = hoverHighlights(this.state);
    this.state.srcTokens.forEach((token, i) => {
      const span = document.createElement('span');
      span.className = 'src-token';
      span.dataset.index = String(i);
      span.textContent = token;
      if (highlighted.has(i)) span.classList.add('highlight');
      this.articleEl.appendChild(span);
    });
  }

  private renderPosts(): void {
    this.postList.textContent = '';
    for (const post of this.posts) {
      const item = document.createElement('li');
      item.className = 'post-item';
      const title = document.createElement('h3');
      title.textContent = post.title;
      const summary = document.createElement('p');
      summary.className = 'post-summary';
      summary.textContent = post.summary;
      const body = document.createElement('p');
      body.className = 'post-text';
      body.textContent = post.text;
      item.append(title, summary, body);
      this.postList.appendChild(item);
    }
  }

  private require<T extends HTMLElement>(root: HTMLElement, selector: string): T {
    const el = root.querySelector<T>(selector);
    if (el === null) throw new Error(`missing element: ${selector}`);
    return el;
  }
}
