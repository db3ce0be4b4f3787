import { describe, expect, it } from "vitest";

import { ApiClient } from "./api.js";
import { ReviewSession } from "./state.js";
import type { AnnotationPayload, ReviewItem } from "./types.js";

function item(id: string, overrides: Partial<ReviewItem> = {}): ReviewItem {
  return {
    sample_id: id,
    event_id: `ev-${id}`,
    truth_cm: 4.0,
    image_url: `/api/images/${id}`,
    annotation: null,
    measurements: [],
    outlier: false,
    flagged: false,
    ...overrides,
  };
}

interface PutCall {
  sampleId: string;
  body: { reference: string; distance: string };
}

/** ApiClient test double recording PUTs/POSTs; fails while failures > 0. */
function fakeApi(puts: PutCall[], flags: string[] = [], failures = 0) {
  let remainingFailures = failures;
  return {
    async putAnnotation(sampleId: string, body: { reference: any; distance: any }) {
      if (remainingFailures > 0) {
        remainingFailures -= 1;
        throw new Error("network down");
      }
      puts.push({ sampleId, body: { reference: body.reference, distance: body.distance } });
      return {
        sample_id: sampleId,
        reference: body.reference,
        distance: body.distance,
        annotator: "ui",
        updated_at: "2025-01-01T00:00:00+00:00",
      } satisfies AnnotationPayload;
    },
    async toggleFlag(sampleId: string) {
      const index = flags.indexOf(sampleId);
      if (index >= 0) {
        flags.splice(index, 1);
        return { sample_id: sampleId, flagged: false };
      }
      flags.push(sampleId);
      return { sample_id: sampleId, flagged: true };
    },
  } as unknown as ApiClient;
}

describe("annotate flow", () => {
  it("labels five samples: one PUT each, then the session is complete", async () => {
    const puts: PutCall[] = [];
    const api = fakeApi(puts);
    const session = new ReviewSession(
      ["s1", "s2", "s3", "s4", "s5"].map((id) => item(id)),
    );
    const plan: Array<[string, boolean]> = [
      ["hand", false],
      ["ruler", true],
      ["hand", false],
      ["coin_or_bottle_cap", false],
      ["unspecified_or_other", true],
    ];
    for (const [reference, distant] of plan) {
      session.setReference(reference as any);
      if (distant) session.toggleDistance();
      expect(session.current?.dirty).toBe(true);
      expect(await session.confirm(api)).toBe(true);
    }
    expect(puts).toHaveLength(5);
    expect(puts.map((p) => p.sampleId)).toEqual(["s1", "s2", "s3", "s4", "s5"]);
    expect(puts[1].body).toEqual({ reference: "ruler", distance: "distant" });
    expect(puts[0].body).toEqual({ reference: "hand", distance: "close_up" });
    expect(session.complete).toBe(true);
    expect(session.dirtyCount).toBe(0);
  });

  it("confirm advances to the next unannotated sample", async () => {
    const api = fakeApi([]);
    const annotated = item("s2", {
      annotation: {
        sample_id: "s2",
        reference: "hand",
        distance: "close_up",
        annotator: "ui",
        updated_at: "x",
      },
    });
    const session = new ReviewSession([item("s1"), annotated, item("s3")]);
    session.setReference("hand");
    await session.confirm(api);
    expect(session.current?.item.sample_id).toBe("s3"); // skipped the labeled one
  });

  it("failed PUT keeps the item dirty with a retry affordance", async () => {
    const puts: PutCall[] = [];
    const api = fakeApi(puts, [], 1);
    const session = new ReviewSession([item("s1")]);
    session.setReference("hand");
    expect(await session.confirm(api)).toBe(false);
    expect(session.current?.dirty).toBe(true);
    expect(session.current?.error).toContain("network down");
    expect(puts).toHaveLength(0);
    // retry succeeds and clears the dirty state
    expect(await session.confirm(api)).toBe(true);
    expect(puts).toHaveLength(1);
    expect(session.views[0].dirty).toBe(false);
    expect(session.views[0].error).toBeNull();
  });

  it("confirm without a reference class is rejected locally", async () => {
    const puts: PutCall[] = [];
    const session = new ReviewSession([item("s1")]);
    expect(await session.confirm(fakeApi(puts))).toBe(false);
    expect(puts).toHaveLength(0);
    expect(session.current?.error).toContain("reference");
  });

  it("drafts start from the saved annotation (state reconstructible from API)", () => {
    const session = new ReviewSession([
      item("s1", {
        annotation: {
          sample_id: "s1",
          reference: "ruler",
          distance: "distant",
          annotator: "ui",
          updated_at: "x",
        },
      }),
    ]);
    expect(session.current?.draft).toEqual({ reference: "ruler", distance: "distant" });
    expect(session.current?.dirty).toBe(false);
  });

  it("cursor navigation clamps at both ends", () => {
    const session = new ReviewSession([item("s1"), item("s2")]);
    session.prev();
    expect(session.cursor).toBe(0);
    session.next();
    session.next();
    expect(session.cursor).toBe(1);
  });

  it("carries the server-provided outlier threshold", () => {
    expect(new ReviewSession([], 3.5).outlierThresholdCm).toBe(3.5);
    expect(new ReviewSession([]).outlierThresholdCm).toBe(2.0);
  });
});

describe("outlier triage", () => {
  it("flagging posts to the API and mirrors the response", async () => {
    const flags: string[] = [];
    const api = fakeApi([], flags);
    const session = new ReviewSession([item("s7", { outlier: true })]);
    expect(await session.flagCurrent(api)).toBe(true);
    expect(flags).toEqual(["s7"]);
    expect(session.current?.item.flagged).toBe(true);
    // toggling off removes it from the server-side rerun list
    await session.flagCurrent(api);
    expect(flags).toEqual([]);
    expect(session.current?.item.flagged).toBe(false);
  });
});
