// Typed client for the rxdialog session API (see docs/api.md).
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
    }
}
export class ApiClient {
    constructor(baseUrl = "", fetchFn = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchFn = fetchFn;
    }
    async post(path, body) {
        const res = await this.fetchFn(`${this.baseUrl}${path}`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
        if (!res.ok) {
            throw new ApiError(res.status, `POST ${path} failed with ${res.status}`);
        }
        return res.json();
    }
    async createSession(participantId) {
        const data = await this.post("/sessions", {
            participant_id: participantId,
        });
        return data.session_id;
    }
    sendUtterance(sessionId, text) {
        return this.post(`/sessions/${sessionId}/utterance`, { text });
    }
    sendChoice(sessionId, index) {
        return this.post(`/sessions/${sessionId}/choice`, { index });
    }
    sendButton(sessionId, button, commentText = "") {
        return this.post(`/sessions/${sessionId}/button`, {
            button,
            comment_text: commentText,
        });
    }
    async getState(sessionId) {
        const res = await this.fetchFn(`${this.baseUrl}/sessions/${sessionId}/state`);
        if (!res.ok) {
            throw new ApiError(res.status, `GET state failed with ${res.status}`);
        }
        return res.json();
    }
}
