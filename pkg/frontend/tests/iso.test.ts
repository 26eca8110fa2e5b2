import { describe, expect, it } from "vitest";
import { depthKey, hitTest, project, projectScene } from "../src/iso.js";
import type { SceneJSON } from "../src/types.js";

function staircaseScene(): SceneJSON {
  // three columns of heights 1/2/3 along +x, cube half-extent 0.025
  const objects = [];
  let n = 0;
  for (let col = 0; col < 3; col++) {
    for (let lvl = 0; lvl <= col; lvl++) {
      objects.push({
        id: `b${n++}`,
        voxeme: "block",
        position: [0.06 * col, 0.025 + 0.05 * lvl, 0] as [
          number,
          number,
          number,
        ],
        rotationQuat: [1, 0, 0, 0] as [number, number, number, number],
        extents: [0.025, 0.025, 0.025] as [number, number, number],
      });
    }
  }
  return { objects, clock: 0 };
}

describe("isometric projection", () => {
  it("raising y moves the point up the screen only", () => {
    const [x0, y0] = project([0.1, 0, 0.1]);
    const [x1, y1] = project([0.1, 0.2, 0.1]);
    expect(x1).toBeCloseTo(x0, 9);
    expect(y1).toBeLessThan(y0);
  });

  it("a six-block staircase yields six clickable shapes in depth order", () => {
    const scene = staircaseScene();
    const shapes = projectScene(scene);
    expect(shapes).toHaveLength(6);
    for (let i = 1; i < shapes.length; i++) {
      expect(shapes[i].depth).toBeGreaterThanOrEqual(shapes[i - 1].depth);
    }
    // every block is clickable at the centre of its own top face
    for (const s of shapes) {
      const cx = s.polygon.reduce((a, p) => a + p[0], 0) / 4;
      const cy = s.polygon.reduce((a, p) => a + p[1], 0) / 4;
      const hit = hitTest(shapes, [cx, cy]);
      expect(hit).not.toBeNull();
    }
    // the topmost block of the tall column hits itself (nothing occludes it)
    const top = shapes.find((s) => s.id === "b5")!;
    const cx = top.polygon.reduce((a, p) => a + p[0], 0) / 4;
    const cy = top.polygon.reduce((a, p) => a + p[1], 0) / 4;
    expect(hitTest(shapes, [cx, cy])).toBe("b5");
  });

  it("depth key increases toward the viewer (+x, +z)", () => {
    const near = staircaseScene().objects[3]; // x = 0.06
    const far = staircaseScene().objects[0]; // x = 0
    expect(depthKey(near)).toBeGreaterThan(depthKey(far));
  });

  it("clicks on empty canvas hit nothing", () => {
    const shapes = projectScene(staircaseScene());
    expect(hitTest(shapes, [-5000, -5000])).toBeNull();
  });
});
