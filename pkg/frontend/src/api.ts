// Typed client for the rxdialog session API (see docs/api.md).

export interface CandidateView {
  index: number;
  ucd_code: string;
  label: string;
  route: string;
}

export interface SummaryView {
  drug_label: string;
  route: string;
  dos_val: string | null;
  dos_uf: string | null;
  frequency: string | null;
  duration: string | null;
  comments: string[];
}

export type ResponsePayload =
  | { kind: "candidates"; candidates: CandidateView[] }
  | { kind: "summary"; summary: SummaryView }
  | { kind: "warning"; warnings: string[]; summary: SummaryView }
  | { kind: "validated"; summary: SummaryView; warnings: string[] }
  | { kind: "cancelled" }
  | null;

export interface TurnResponse {
  action: string;
  text: string;
  payload: ResponsePayload;
  terminal: boolean;
}

export interface Envelope {
  session_id: string;
  turn_index: number;
  response: TurnResponse;
}

export type ButtonName = "confirm" | "cancel" | "restart" | "comment";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) {
      throw new ApiError(res.status, `POST ${path} failed with ${res.status}`);
    }
    return res.json() as Promise<T>;
  }

  async createSession(participantId: string): Promise<string> {
    const data = await this.post<{ session_id: string }>("/sessions", {
      participant_id: participantId,
    });
    return data.session_id;
  }

  sendUtterance(sessionId: string, text: string): Promise<Envelope> {
    return this.post<Envelope>(`/sessions/${sessionId}/utterance`, { text });
  }

  sendChoice(sessionId: string, index: number): Promise<Envelope> {
    return this.post<Envelope>(`/sessions/${sessionId}/choice`, { index });
  }

  sendButton(sessionId: string, button: ButtonName, commentText = ""): Promise<Envelope> {
    return this.post<Envelope>(`/sessions/${sessionId}/button`, {
      button,
      comment_text: commentText,
    });
  }

  async getState(sessionId: string): Promise<Record<string, unknown>> {
    const res = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/state`);
    if (!res.ok) {
      throw new ApiError(res.status, `GET state failed with ${res.status}`);
    }
    return res.json();
  }
}
