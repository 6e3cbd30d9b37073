// Test rig: jsdom document plus a scripted server standing in for the API.
import { JSDOM } from "jsdom";
import { ApiClient } from "../src/api.js";
import { mountApp } from "../src/app.js";
export class ScriptedServer {
    constructor(script) {
        this.script = script;
        this.calls = [];
        this.cursor = 0;
        this.fetch = async (input, init) => {
            const method = init?.method ?? "GET";
            const body = init?.body ? JSON.parse(String(init.body)) : null;
            this.calls.push({ method, path: input, body });
            const step = this.script[this.cursor];
            if (!step) {
                throw new Error(`unexpected call ${method} ${input}`);
            }
            this.cursor += 1;
            if (step.fail) {
                throw new TypeError("network down");
            }
            if (input !== step.path) {
                throw new Error(`expected call to ${step.path}, got ${input}`);
            }
            return new Response(JSON.stringify(step.reply), {
                status: step.status ?? 200,
                headers: { "Content-Type": "application/json" },
            });
        };
    }
    get exhausted() {
        return this.cursor === this.script.length;
    }
}
let seq = 0;
export function envelope(action, text, payload = null, terminal = false) {
    seq += 1;
    return {
        session_id: "s-1",
        turn_index: seq,
        response: { action, text, payload, terminal },
    };
}
export const SUMMARY = {
    drug_label: "OFLOXACINE B.BRAUN 200 mg/40 ml, solution for infusion",
    route: "intravenous",
    dos_val: "2",
    dos_uf: "injection",
    frequency: "per day",
    duration: "7 days",
    comments: [],
};
export async function rig(script) {
    const dom = new JSDOM(`<!doctype html><html><body><main id="app"></main></body></html>`);
    const root = dom.window.document.getElementById("app");
    const server = new ScriptedServer([
        { path: "/sessions", reply: { session_id: "s-1" } },
        ...script,
    ]);
    const client = new ApiClient("", server.fetch);
    const app = mountApp(root, client, "test-user");
    await app.start();
    return { app, root, server, dom };
}
export async function typeAndSend(rigged, text) {
    const { root, dom } = rigged;
    const input = root.querySelector(".rx-input");
    const form = root.querySelector("form.rx-input-row");
    input.value = text;
    form.dispatchEvent(new dom.window.Event("submit", { bubbles: true, cancelable: true }));
    await flush();
}
export function click(rigged, selector) {
    const el = rigged.root.querySelector(selector);
    if (!el) {
        throw new Error(`no element matches ${selector}`);
    }
    el.dispatchEvent(new rigged.dom.window.Event("click", { bubbles: true }));
    return flush();
}
export function clickLast(rigged, selector) {
    const all = rigged.root.querySelectorAll(selector);
    if (!all.length) {
        throw new Error(`no element matches ${selector}`);
    }
    const el = all[all.length - 1];
    el.dispatchEvent(new rigged.dom.window.Event("click", { bubbles: true }));
    return flush();
}
// let pending promise chains settle
export async function flush() {
    for (let i = 0; i < 6; i += 1) {
        await new Promise((resolve) => setTimeout(resolve, 0));
    }
}
export function bubbles(root, side) {
    return Array.from(root.querySelectorAll(`.rx-bubble.rx-${side}`))
        .map((el) => el.textContent ?? "");
}
