import { describe, expect, it } from "vitest";
import { ApiError, ConsoleApi, StaleQueryError } from "../src/api.js";
import { FakeService } from "./fake-service.js";

const CANDS = [
  { label: "a", posterior: 0.55, representatives: ["t2", "t1"] },
  { label: "b", posterior: 0.45, representatives: [] },
];

describe("ConsoleApi", () => {
  it("reads a null pending query", async () => {
    const fake = new FakeService();
    const api = new ConsoleApi(fake.fetch);
    expect(await api.pendingQuery()).toBeNull();
  });

  it("parses a pending query verbatim", async () => {
    const fake = new FakeService([{ at: 0, candidates: CANDS }]);
    const api = new ConsoleApi(fake.fetch);
    await api.metrics(); // feeder posts the record that triggers the query
    const query = await api.pendingQuery();
    expect(query).not.toBeNull();
    expect(query!.index).toBe(0);
    expect(query!.record_id).toBe("r0");
    expect(query!.candidates).toEqual(CANDS);
    expect(query!.seconds_remaining).toBe(300.0);
  });

  it("parses metrics", async () => {
    const fake = new FakeService();
    const api = new ConsoleApi(fake.fetch);
    const metrics = await api.metrics();
    expect(metrics.records_seen).toBe(1);
    expect(metrics.queries).toEqual({ issued: 0, answered: 0, skipped: 0 });
    expect(metrics.mean_f1).toBeNull();
  });

  it("submits a label and gets an acknowledgement", async () => {
    const fake = new FakeService([{ at: 0, candidates: CANDS }]);
    const api = new ConsoleApi(fake.fetch);
    await api.metrics();
    const ack = await api.submitLabel(0, "a");
    expect(ack).toEqual({ index: 0, label: "a", accepted: true });
    expect(fake.answered).toBe(1);
  });

  it("second submit of the same query is a stale conflict", async () => {
    const fake = new FakeService([{ at: 0, candidates: CANDS }]);
    const api = new ConsoleApi(fake.fetch);
    await api.metrics();
    await api.submitLabel(0, "a");
    await expect(api.submitLabel(0, "a")).rejects.toBeInstanceOf(StaleQueryError);
  });

  it("wrong index is a stale conflict and keeps the query", async () => {
    const fake = new FakeService([{ at: 0, candidates: CANDS }]);
    const api = new ConsoleApi(fake.fetch);
    await api.metrics();
    await expect(api.submitLabel(7, "a")).rejects.toBeInstanceOf(StaleQueryError);
    expect(fake.pending).not.toBeNull();
  });

  it("non-conflict failures surface as ApiError with the status", async () => {
    const failing: typeof fetch = async () =>
      new Response(JSON.stringify({ error: "label must be a non-empty string" }), {
        status: 400,
      });
    const api = new ConsoleApi(failing);
    const err = await api.submitLabel(0, "").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err).not.toBeInstanceOf(StaleQueryError);
    expect((err as ApiError).status).toBe(400);
    expect((err as ApiError).message).toContain("non-empty");
  });

  it("rejects malformed query payloads instead of rendering them", async () => {
    const bad: typeof fetch = async () =>
      new Response(JSON.stringify({ pending: { index: "zero" } }), { status: 200 });
    const api = new ConsoleApi(bad);
    await expect(api.pendingQuery()).rejects.toThrow();
  });
});
