// Scripted walk through the reference dialogue: utterance -> duration
// request -> summary card -> confirm -> validated, input locked.
import assert from "node:assert/strict";
import { test } from "node:test";

import { SUMMARY, bubbles, click, envelope, rig, typeAndSend } from "./helpers.js";

const OPENING = "Ofloxacine 200 mg 2 injections per day";

function fullFlowScript() {
  return [
    {
      path: "/sessions/s-1/utterance",
      reply: envelope("request_slot:duration",
                      "Can you please specify a duration for this prescription?"),
    },
    {
      path: "/sessions/s-1/utterance",
      reply: envelope("propose_summary",
                      "OFLOXACINE B.BRAUN 200 mg/40 ml ... Do you confirm this prescription?",
                      { kind: "summary", summary: SUMMARY }),
    },
    {
      path: "/sessions/s-1/button",
      reply: envelope("ack_validated", "The prescription has been validated and recorded.",
                      { kind: "validated", summary: SUMMARY, warnings: [] }, true),
    },
  ];
}

test("reference flow reaches a validated summary card and locks input", async () => {
  const rigged = await rig(fullFlowScript());
  const { root, server } = rigged;

  await typeAndSend(rigged, OPENING);
  const systemMsgs = bubbles(root, "system");
  assert.equal(systemMsgs.length, 1);
  assert.match(systemMsgs[0], /duration/);

  await typeAndSend(rigged, "For 7 days");
  const card = root.querySelector(".rx-summary-card");
  assert.ok(card, "summary card rendered");
  assert.match(card!.textContent ?? "", /OFLOXACINE/);
  assert.match(card!.textContent ?? "", /duration: 7 days/);

  await click(rigged, ".rx-btn-confirm");
  assert.match(bubbles(root, "system").at(-1) ?? "", /validated/);

  const input = root.querySelector(".rx-input") as HTMLInputElement;
  const send = root.querySelector(".rx-send") as HTMLButtonElement;
  assert.equal(input.disabled, true);
  assert.equal(send.disabled, true);
  assert.ok(!root.querySelector(".rx-new")!.classList.contains("rx-hidden"),
            "new-prescription button offered");

  // API call log equals the server expectation: no extra or reordered calls
  assert.deepEqual(server.calls.map((c) => [c.method, c.path]), [
    ["POST", "/sessions"],
    ["POST", "/sessions/s-1/utterance"],
    ["POST", "/sessions/s-1/utterance"],
    ["POST", "/sessions/s-1/button"],
  ]);
  assert.deepEqual(server.calls[1].body, { text: OPENING });
  assert.deepEqual(server.calls[3].body, { button: "confirm", comment_text: "" });
  assert.ok(server.exhausted);
});

test("replaying the same interaction script yields an identical call sequence", async () => {
  const run = async () => {
    const rigged = await rig(fullFlowScript());
    await typeAndSend(rigged, OPENING);
    await typeAndSend(rigged, "For 7 days");
    await click(rigged, ".rx-btn-confirm");
    return rigged.server.calls.map((c) => JSON.stringify([c.method, c.path, c.body]));
  };
  assert.deepEqual(await run(), await run());
});

test("every rendered element maps to a field of the last response", async () => {
  const rigged = await rig([
    {
      path: "/sessions/s-1/utterance",
      reply: envelope("propose_summary", "Summary text. Do you confirm?",
                      { kind: "summary", summary: SUMMARY }),
    },
  ]);
  await typeAndSend(rigged, OPENING);
  const { root } = rigged;

  const sys = bubbles(root, "system");
  assert.deepEqual(sys, ["Summary text. Do you confirm?"]);
  const card = root.querySelector(".rx-summary-card")!;
  assert.equal(card.querySelector(".rx-summary-drug")!.textContent, SUMMARY.drug_label);
  const lines = Array.from(card.querySelectorAll("li")).map((li) => li.textContent);
  assert.deepEqual(lines, [
    `route: ${SUMMARY.route}`,
    `posology: ${SUMMARY.dos_val} ${SUMMARY.dos_uf} ${SUMMARY.frequency}`,
    `duration: ${SUMMARY.duration}`,
  ]);
  // no candidate list, no warning banner: the response carried none
  assert.equal(root.querySelector(".rx-candidate"), null);
  assert.equal(root.querySelector(".rx-warning"), null);
});
