// Chat view over the session API. All dialogue decisions are server-side:
// this module only posts user actions and renders the last response.

import {
  ApiClient,
  ApiError,
  ButtonName,
  Envelope,
  ResponsePayload,
  SummaryView,
} from "./api.js";

type PendingCall = () => Promise<void>;

export class ChatApp {
  private sessionId: string | null = null;
  private terminal = false;
  private lastFailed: PendingCall | null = null;

  private log: HTMLElement;
  private form: HTMLFormElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;
  private banner: HTMLElement;
  private newButton: HTMLButtonElement;

  constructor(private root: HTMLElement, private client: ApiClient,
              private participantId = "web-user") {
    const doc = root.ownerDocument;
    root.classList.add("rx-app");

    this.banner = doc.createElement("div");
    this.banner.className = "rx-banner rx-hidden";
    root.appendChild(this.banner);

    this.log = doc.createElement("div");
    this.log.className = "rx-log";
    root.appendChild(this.log);

    this.form = doc.createElement("form");
    this.form.className = "rx-input-row";
    this.input = doc.createElement("input");
    this.input.type = "text";
    this.input.className = "rx-input";
    this.input.placeholder = "State the prescription…";
    this.sendButton = doc.createElement("button");
    this.sendButton.type = "submit";
    this.sendButton.className = "rx-send";
    this.sendButton.textContent = "Send";
    this.form.appendChild(this.input);
    this.form.appendChild(this.sendButton);
    this.form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submitUtterance();
    });
    root.appendChild(this.form);

    this.newButton = doc.createElement("button");
    this.newButton.type = "button";
    this.newButton.className = "rx-new rx-hidden";
    this.newButton.textContent = "New prescription";
    this.newButton.addEventListener("click", () => void this.start());
    root.appendChild(this.newButton);
  }

  async start(): Promise<void> {
    this.log.textContent = "";
    this.terminal = false;
    this.sessionId = null;
    this.setLocked(false);
    this.hideBanner();
    await this.guard(async () => {
      this.sessionId = await this.client.createSession(this.participantId);
    });
  }

  private doc(): Document {
    return this.root.ownerDocument;
  }

  private async submitUtterance(): Promise<void> {
    const text = this.input.value.trim();
    if (!text || this.terminal || !this.sessionId) {
      return;
    }
    this.input.value = "";
    this.addBubble("user", text);
    const sid = this.sessionId;
    await this.guard(async () => {
      this.render(await this.client.sendUtterance(sid, text));
    });
  }

  private async clickCandidate(index: number): Promise<void> {
    if (this.terminal || !this.sessionId) {
      return;
    }
    const sid = this.sessionId;
    this.addBubble("user", `→ candidate ${index + 1}`);
    await this.guard(async () => {
      this.render(await this.client.sendChoice(sid, index));
    });
  }

  private async clickButton(name: ButtonName, commentText = ""): Promise<void> {
    if (this.terminal || !this.sessionId) {
      return;
    }
    const sid = this.sessionId;
    this.addBubble("user", commentText ? `[${name}] ${commentText}` : `[${name}]`);
    await this.guard(async () => {
      this.render(await this.client.sendButton(sid, name, commentText));
    });
  }

  private async guard(call: PendingCall): Promise<void> {
    try {
      await call();
      this.lastFailed = null;
      this.hideBanner();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.terminal = true;
        this.setLocked(true);
        this.showBanner("This session has ended.", false);
        return;
      }
      this.lastFailed = call;
      this.showBanner("Network problem — the last action was not delivered.", true);
    }
  }

  async retry(): Promise<void> {
    const call = this.lastFailed;
    if (call) {
      await this.guard(call);
    }
  }

  // --- rendering (consumes only the last API response) ---

  private render(envelope: Envelope): void {
    const { response } = envelope;
    this.addBubble("system", response.text, response.action);
    this.renderPayload(response.payload);
    if (response.terminal) {
      this.terminal = true;
      this.setLocked(true);
    }
  }

  private renderPayload(payload: ResponsePayload): void {
    if (!payload) {
      return;
    }
    if (payload.kind === "candidates") {
      const list = this.doc().createElement("div");
      list.className = "rx-candidates";
      for (const candidate of payload.candidates) {
        const btn = this.doc().createElement("button");
        btn.type = "button";
        btn.className = "rx-candidate";
        btn.dataset.index = String(candidate.index);
        btn.textContent = `${candidate.label} (${candidate.route})`;
        btn.addEventListener("click", () => void this.clickCandidate(candidate.index));
        list.appendChild(btn);
      }
      this.log.appendChild(list);
    } else if (payload.kind === "summary") {
      this.log.appendChild(this.summaryCard(payload.summary, [], true));
    } else if (payload.kind === "warning") {
      this.log.appendChild(this.warningBanner(payload.warnings));
      this.log.appendChild(this.summaryCard(payload.summary, payload.warnings, true));
    } else if (payload.kind === "validated") {
      this.log.appendChild(this.summaryCard(payload.summary, payload.warnings, false));
    }
    // "cancelled" renders no extra element: the system bubble carries it
  }

  private summaryCard(summary: SummaryView, warnings: string[],
                      withActions: boolean): HTMLElement {
    const doc = this.doc();
    const card = doc.createElement("div");
    card.className = "rx-summary-card";

    const title = doc.createElement("div");
    title.className = "rx-summary-drug";
    title.textContent = summary.drug_label;
    card.appendChild(title);

    const lines = doc.createElement("ul");
    lines.className = "rx-summary-lines";
    const posology = [summary.dos_val, summary.dos_uf, summary.frequency]
      .filter((v) => v)
      .join(" ");
    for (const line of [
      summary.route ? `route: ${summary.route}` : "",
      posology ? `posology: ${posology}` : "",
      summary.duration ? `duration: ${summary.duration}` : "",
      ...summary.comments.map((c) => `comment: ${c}`),
    ]) {
      if (!line) {
        continue;
      }
      const li = doc.createElement("li");
      li.textContent = line;
      lines.appendChild(li);
    }
    card.appendChild(lines);

    if (withActions) {
      const row = doc.createElement("div");
      row.className = "rx-summary-actions";
      for (const name of ["confirm", "cancel"] as ButtonName[]) {
        const btn = doc.createElement("button");
        btn.type = "button";
        btn.className = `rx-btn rx-btn-${name}`;
        btn.textContent = name;
        btn.addEventListener("click", () => void this.clickButton(name));
        row.appendChild(btn);
      }
      const commentInput = doc.createElement("input");
      commentInput.type = "text";
      commentInput.className = "rx-comment-input";
      commentInput.placeholder = "Add a comment…";
      const commentBtn = doc.createElement("button");
      commentBtn.type = "button";
      commentBtn.className = "rx-btn rx-btn-comment";
      commentBtn.textContent = "comment";
      commentBtn.addEventListener("click", () => {
        const text = commentInput.value.trim();
        if (text) {
          commentInput.value = "";
          void this.clickButton("comment", text);
        }
      });
      row.appendChild(commentInput);
      row.appendChild(commentBtn);
      card.appendChild(row);
    }
    return card;
  }

  private warningBanner(warnings: string[]): HTMLElement {
    const el = this.doc().createElement("div");
    el.className = "rx-warning";
    el.textContent = warnings.join(" — ");
    return el;
  }

  private addBubble(side: "user" | "system", text: string, action?: string): void {
    const el = this.doc().createElement("div");
    el.className = `rx-bubble rx-${side}`;
    if (action) {
      el.dataset.action = action;
    }
    el.textContent = text;
    this.log.appendChild(el);
  }

  private setLocked(locked: boolean): void {
    this.input.disabled = locked;
    this.sendButton.disabled = locked;
    this.newButton.classList.toggle("rx-hidden", !locked);
  }

  private showBanner(message: string, retryable: boolean): void {
    this.banner.textContent = message;
    this.banner.classList.remove("rx-hidden");
    if (retryable) {
      const btn = this.doc().createElement("button");
      btn.type = "button";
      btn.className = "rx-retry";
      btn.textContent = "Retry";
      btn.addEventListener("click", () => void this.retry());
      this.banner.appendChild(btn);
    }
  }

  private hideBanner(): void {
    this.banner.textContent = "";
    this.banner.classList.add("rx-hidden");
  }
}

export function mountApp(root: HTMLElement, client: ApiClient,
                         participantId = "web-user"): ChatApp {
  return new ChatApp(root, client, participantId);
}
