import { describe, expect, it } from "vitest";
import { once } from "../src/debounce.js";

describe("double-submit guard", () => {
  it("a rapid double-click sends exactly one action", () => {
    let t = 0;
    let calls = 0;
    const click = once(() => calls++, 400, () => t);
    expect(click()).toBe(true);
    t += 50; // second click 50 ms later
    expect(click()).toBe(false);
    expect(calls).toBe(1);
  });

  it("clicks after the window pass through", () => {
    let t = 0;
    let calls = 0;
    const click = once(() => calls++, 400, () => t);
    click();
    t += 401;
    expect(click()).toBe(true);
    expect(calls).toBe(2);
  });

  it("forwards arguments", () => {
    const got: string[] = [];
    const f = once((s: string) => got.push(s), 400, () => got.length * 1000);
    f("a");
    f("b");
    expect(got).toEqual(["a", "b"]);
  });
});
