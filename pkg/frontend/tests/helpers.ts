// Test rig: jsdom document plus a scripted server standing in for the API.
import { JSDOM } from "jsdom";

import { ApiClient, Envelope, ResponsePayload } from "../src/api.js";
import { ChatApp, mountApp } from "../src/app.js";

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

export interface ScriptStep {
  path: string;
  reply: unknown;
  status?: number;
  fail?: boolean;
}

export class ScriptedServer {
  calls: RecordedCall[] = [];
  private cursor = 0;

  constructor(private script: ScriptStep[]) {}

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
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

  get exhausted(): boolean {
    return this.cursor === this.script.length;
  }
}

let seq = 0;

export function envelope(action: string, text: string, payload: ResponsePayload = null,
                         terminal = false): Envelope {
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
  comments: [] as string[],
};

export interface Rig {
  app: ChatApp;
  root: HTMLElement;
  server: ScriptedServer;
  dom: JSDOM;
}

export async function rig(script: ScriptStep[]): Promise<Rig> {
  const dom = new JSDOM(`<!doctype html><html><body><main id="app"></main></body></html>`);
  const root = dom.window.document.getElementById("app") as HTMLElement;
  const server = new ScriptedServer([
    { path: "/sessions", reply: { session_id: "s-1" } },
    ...script,
  ]);
  const client = new ApiClient("", server.fetch);
  const app = mountApp(root, client, "test-user");
  await app.start();
  return { app, root, server, dom };
}

export async function typeAndSend(rigged: Rig, text: string): Promise<void> {
  const { root, dom } = rigged;
  const input = root.querySelector(".rx-input") as HTMLInputElement;
  const form = root.querySelector("form.rx-input-row") as HTMLFormElement;
  input.value = text;
  form.dispatchEvent(new dom.window.Event("submit", { bubbles: true, cancelable: true }));
  await flush();
}

export function click(rigged: Rig, selector: string): Promise<void> {
  const el = rigged.root.querySelector(selector) as HTMLElement | null;
  if (!el) {
    throw new Error(`no element matches ${selector}`);
  }
  el.dispatchEvent(new rigged.dom.window.Event("click", { bubbles: true }));
  return flush();
}

export function clickLast(rigged: Rig, selector: string): Promise<void> {
  const all = rigged.root.querySelectorAll(selector);
  if (!all.length) {
    throw new Error(`no element matches ${selector}`);
  }
  const el = all[all.length - 1] as HTMLElement;
  el.dispatchEvent(new rigged.dom.window.Event("click", { bubbles: true }));
  return flush();
}

// let pending promise chains settle
export async function flush(): Promise<void> {
  for (let i = 0; i < 6; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

export function bubbles(root: HTMLElement, side: "user" | "system"): string[] {
  return Array.from(root.querySelectorAll(`.rx-bubble.rx-${side}`))
    .map((el) => el.textContent ?? "");
}
