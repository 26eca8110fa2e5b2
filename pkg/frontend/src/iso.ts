/** Isometric projection, depth sorting, and hit testing.
 *
 * Pure geometry so the canvas layer stays a thin painter: the server's
 * scene JSON is the only source of truth and nothing here mutates it.
 */
import type { SceneJSON, SceneObject } from "./types.js";

export interface Projected {
  id: string;
  voxeme: string;
  /** screen-space polygon of the top face, for hit testing */
  polygon: Array<[number, number]>;
  /** painter's-algorithm key: larger draws later (nearer the viewer) */
  depth: number;
  screen: [number, number];
  heightPx: number;
  widthPx: number;
}

const SCALE = 420; // px per metre
const ISO_X: [number, number] = [Math.SQRT1_2, Math.SQRT1_2 / 2];
const ISO_Z: [number, number] = [-Math.SQRT1_2, Math.SQRT1_2 / 2];

/** world (x, y, z) -> screen (px, py); y is up, screen y grows downward */
export function project(
  p: [number, number, number],
  origin: [number, number] = [320, 240],
): [number, number] {
  const [x, y, z] = p;
  const px = origin[0] + SCALE * (x * ISO_X[0] + z * ISO_Z[0]);
  const py = origin[1] + SCALE * (x * ISO_X[1] + z * ISO_Z[1]) - SCALE * y;
  return [px, py];
}

/** Depth key: objects further along +x+z (and lower) draw first. */
export function depthKey(o: SceneObject): number {
  return o.position[0] + o.position[2] + o.position[1] * 1e-3;
}

export function projectScene(
  scene: SceneJSON,
  origin: [number, number] = [320, 240],
): Projected[] {
  const out = scene.objects.map((o) => {
    const [ex, ey, ez] = o.extents;
    const top = o.position[1] + ey;
    const corners: Array<[number, number, number]> = [
      [o.position[0] - ex, top, o.position[2] - ez],
      [o.position[0] + ex, top, o.position[2] - ez],
      [o.position[0] + ex, top, o.position[2] + ez],
      [o.position[0] - ex, top, o.position[2] + ez],
    ];
    const polygon = corners.map((c) => project(c, origin));
    return {
      id: o.id,
      voxeme: o.voxeme,
      polygon,
      depth: depthKey(o),
      screen: project(o.position as [number, number, number], origin),
      heightPx: 2 * ey * SCALE,
      widthPx: 2 * Math.max(ex, ez) * SCALE,
    };
  });
  out.sort((a, b) => a.depth - b.depth);
  return out;
}

function pointInPolygon(
  pt: [number, number],
  poly: Array<[number, number]>,
): boolean {
  let inside = false;
  for (let i = 0, j = poly.length - 1; i < poly.length; j = i++) {
    const [xi, yi] = poly[i];
    const [xj, yj] = poly[j];
    if (
      yi > pt[1] !== yj > pt[1] &&
      pt[0] < ((xj - xi) * (pt[1] - yi)) / (yj - yi) + xi
    ) {
      inside = !inside;
    }
  }
  return inside;
}

/** Topmost (nearest) object whose projected footprint contains the click. */
export function hitTest(
  projected: Projected[],
  pt: [number, number],
): string | null {
  for (let i = projected.length - 1; i >= 0; i--) {
    const p = projected[i];
    const side = Math.max(p.widthPx, 8) / 2;
    const inBody =
      Math.abs(pt[0] - p.screen[0]) <= side &&
      pt[1] <= p.screen[1] + 4 &&
      pt[1] >= p.screen[1] - p.heightPx - side / 2;
    if (pointInPolygon(pt, p.polygon) || inBody) return p.id;
  }
  return null;
}
