// Failure handling: network retry banner and terminal-session lockout.
import assert from "node:assert/strict";
import { test } from "node:test";

import { bubbles, click, envelope, rig, typeAndSend } from "./helpers.js";

test("network failure shows a retry banner and retry re-issues the call", async () => {
  const reply = envelope("request_slot:duration", "Please specify a duration.");
  const rigged = await rig([
    { path: "/sessions/s-1/utterance", reply: {}, fail: true },
    { path: "/sessions/s-1/utterance", reply },
  ]);
  const { root, server } = rigged;

  await typeAndSend(rigged, "doliprane 500 mg 2 tablets per day");
  const banner = root.querySelector(".rx-banner")!;
  assert.ok(!banner.classList.contains("rx-hidden"));
  assert.match(banner.textContent ?? "", /Network problem/);
  assert.ok(banner.querySelector(".rx-retry"));

  await click(rigged, ".rx-retry");
  assert.ok(banner.classList.contains("rx-hidden"), "banner cleared after retry");
  assert.match(bubbles(root, "system").at(-1) ?? "", /duration/);

  const utterances = server.calls.filter((c) => c.path.endsWith("/utterance"));
  assert.equal(utterances.length, 2);
  assert.deepEqual(utterances[0].body, utterances[1].body);
});

test("409 on a terminal session locks the input", async () => {
  const rigged = await rig([
    { path: "/sessions/s-1/utterance", reply: { detail: "session is terminal" }, status: 409 },
  ]);
  const { root } = rigged;
  await typeAndSend(rigged, "hello again");
  const input = root.querySelector(".rx-input") as HTMLInputElement;
  assert.equal(input.disabled, true);
  const banner = root.querySelector(".rx-banner")!;
  assert.match(banner.textContent ?? "", /ended/);
});

test("new prescription button starts a fresh session", async () => {
  const rigged = await rig([
    {
      path: "/sessions/s-1/utterance",
      reply: envelope("ack_cancelled", "The prescription has been cancelled.",
                      { kind: "cancelled" }, true),
    },
    { path: "/sessions", reply: { session_id: "s-2" } },
  ]);
  const { root, server } = rigged;
  await typeAndSend(rigged, "cancel");
  const input = root.querySelector(".rx-input") as HTMLInputElement;
  assert.equal(input.disabled, true);

  await click(rigged, ".rx-new");
  assert.equal(input.disabled, false);
  assert.equal(bubbles(root, "system").length, 0, "log cleared");
  assert.equal(server.calls.at(-1)?.path, "/sessions");
});
