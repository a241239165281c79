// Console wiring: poll the session API once a second, render staff + chart,
// and submit structured feedback.  All shown state comes from the server.

import { ApiClient, FeedbackDraft, FullSnapshot, VocabEntry } from "./api.js";
import { renderRatingChart, renderStaffInto } from "./render.js";
import { COLUMNS, DIRECTIONS, LEVELS, renderStaff } from "./staff.js";

const POLL_MS = 1000;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  props: Partial<HTMLElementTagNameMap[K]> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  Object.assign(node, props);
  node.append(...children);
  return node;
}

interface PendingTarget {
  column: string;
  direction: string;
  level: string;
  delta: number;
}

class Console {
  private api: ApiClient;
  private sessionId: string | null = null;
  private snapshot: FullSnapshot | null = null;
  private vocab: VocabEntry[] = [];
  private pendingTargets: PendingTarget[] = [];
  private chosenWords = new Set<string>();
  private submittedIteration = -1;
  private polling = false;

  private staffBox = el("div", { id: "staff-box" });
  private chartBox = el("div", { id: "chart-box" });
  private statusLine = el("div", { id: "status" });
  private errorBanner = el("div", { id: "error", hidden: true });
  private ratingInput = el("input", { type: "range", min: "0", max: "1", step: "0.01", value: "0.5" });
  private ratingLabel = el("span", {}, "0.50");
  private decisionSelect = el("select");
  private wordBox = el("div", { id: "word-box" });
  private targetList = el("ul", { id: "target-list" });
  private submitButton = el("button", {}, "submit feedback");
  private retryButton = el("button", { hidden: true }, "retry");
  private lastDraft: FeedbackDraft | null = null;

  constructor(base: string) {
    this.api = new ApiClient(base);
  }

  mount(root: HTMLElement): void {
    for (const decision of ["none", "resample", "retrain_generator", "retrain_multimodal", "accept"]) {
      this.decisionSelect.appendChild(el("option", { value: decision }, decision));
    }
    const columnSelect = el("select");
    COLUMNS.forEach((c) => columnSelect.appendChild(el("option", { value: c }, c)));
    const directionSelect = el("select");
    DIRECTIONS.forEach((d) => directionSelect.appendChild(el("option", { value: d }, d)));
    const levelSelect = el("select");
    LEVELS.forEach((l) => levelSelect.appendChild(el("option", { value: l }, l)));
    const deltaInput = el("input", { type: "number", step: "0.1", value: "0.3" });
    const addTarget = el("button", {}, "add cell target");
    addTarget.onclick = () => {
      this.pendingTargets.push({
        column: columnSelect.value,
        direction: directionSelect.value,
        level: levelSelect.value,
        delta: Number(deltaInput.value),
      });
      this.renderTargets();
    };

    this.ratingInput.oninput = () => {
      this.ratingLabel.textContent = Number(this.ratingInput.value).toFixed(2);
    };
    this.submitButton.onclick = () => void this.submit();
    this.retryButton.onclick = () => void this.submit(this.lastDraft ?? undefined);

    const startButton = el("button", {}, "new session");
    startButton.onclick = () => void this.start();

    root.append(
      el("h1", {}, "atelier console"),
      el("div", { className: "toolbar" }, startButton, this.statusLine),
      this.errorBanner,
      this.staffBox,
      el("h2", {}, "rating history"),
      this.chartBox,
      el(
        "div",
        { className: "feedback-form" },
        el("h2", {}, "feedback"),
        el("label", {}, "rating ", this.ratingInput, this.ratingLabel),
        el("label", {}, " decision ", this.decisionSelect),
        el("div", {}, el("h3", {}, "judgement words"), this.wordBox),
        el(
          "div",
          {},
          el("h3", {}, "cell targets"),
          columnSelect,
          directionSelect,
          levelSelect,
          deltaInput,
          addTarget,
          this.targetList,
        ),
        this.submitButton,
        this.retryButton,
      ),
    );
    window.setInterval(() => void this.poll(), POLL_MS);
  }

  private async start(): Promise<void> {
    try {
      const created = await this.api.createSession({});
      this.sessionId = created.id;
      this.submittedIteration = -1;
      this.pendingTargets = [];
      this.chosenWords.clear();
      this.hideError();
      await this.poll();
    } catch (err) {
      this.showError(err);
    }
  }

  private renderTargets(): void {
    this.targetList.textContent = "";
    this.pendingTargets.forEach((target, index) => {
      const remove = el("button", {}, "x");
      remove.onclick = () => {
        this.pendingTargets.splice(index, 1);
        this.renderTargets();
      };
      this.targetList.appendChild(
        el(
          "li",
          {},
          `${target.column} / ${target.direction} / ${target.level}  Δ=${target.delta} `,
          remove,
        ),
      );
    });
  }

  private renderVocab(): void {
    this.wordBox.textContent = "";
    this.vocab.forEach((entry) => {
      const button = el("button", { className: this.chosenWords.has(entry.word) ? "word on" : "word" });
      button.textContent = `${entry.word} (${entry.role})`;
      button.onclick = () => {
        if (this.chosenWords.has(entry.word)) this.chosenWords.delete(entry.word);
        else this.chosenWords.add(entry.word);
        this.renderVocab();
      };
      this.wordBox.appendChild(button);
    });
  }

  private async poll(): Promise<void> {
    if (this.sessionId === null || this.polling) return;
    this.polling = true;
    try {
      const snapshot = await this.api.snapshot(this.sessionId);
      this.snapshot = snapshot;
      if (this.vocab.length === 0) {
        this.vocab = snapshot.vocab;
        this.renderVocab();
      }
      this.statusLine.textContent = `session ${snapshot.id} | stage ${snapshot.stage} | iteration ${snapshot.iteration}`;
      if (snapshot.latest_score !== null) {
        renderStaffInto(this.staffBox, renderStaff(snapshot.latest_score));
      }
      renderRatingChart(this.chartBox, snapshot.rating_history, snapshot.accept_threshold);
      // The form reopens only once the server shows a new iteration.
      const waiting = snapshot.stage === "artist_eval" && snapshot.iteration !== this.submittedIteration;
      this.submitButton.disabled = !waiting;
      this.hideError();
    } catch (err) {
      this.showError(err);
    } finally {
      this.polling = false;
    }
  }

  private async submit(draft?: FeedbackDraft): Promise<void> {
    if (this.sessionId === null || this.snapshot === null) return;
    const rating = Number(this.ratingInput.value);
    if (rating < 0 || rating > 1) {
      this.showError(new Error("rating must be in [0, 1]"));
      return;
    }
    // Client-side vocabulary check before the POST.
    const known = new Set(this.vocab.map((entry) => entry.word));
    for (const word of this.chosenWords) {
      if (!known.has(word)) {
        this.showError(new Error(`word '${word}' is not in the session vocabulary`));
        return;
      }
    }
    const payload: FeedbackDraft = draft ?? {
      rating,
      words: [...this.chosenWords],
      targets: this.pendingTargets.map((t) => [t.column, t.direction, t.level, t.delta]),
      decision: this.decisionSelect.value,
    };
    this.lastDraft = payload;
    this.submitButton.disabled = true;
    this.submittedIteration = this.snapshot.iteration;
    try {
      await this.api.submitFeedback(this.sessionId, payload);
      this.pendingTargets = [];
      this.renderTargets();
      this.retryButton.hidden = true;
      await this.poll();
    } catch (err) {
      this.showError(err);
      this.retryButton.hidden = false;
      this.submittedIteration = -1;
    }
  }

  private showError(err: unknown): void {
    this.errorBanner.hidden = false;
    this.errorBanner.textContent = err instanceof Error ? err.message : String(err);
  }

  private hideError(): void {
    this.errorBanner.hidden = true;
  }
}

const root = document.getElementById("app");
if (root !== null) {
  new Console(window.location.origin).mount(root);
}
