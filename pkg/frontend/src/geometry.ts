// Planar homography math for the console: mapping pointer pixels to
// ground coordinates and ground geometry back to the canvas. Mirrors
// the server's projection conventions (row-major 3x3, ground->pixel).

export type Mat3 = number[]; // 9 values, row-major

export function invert3(m: Mat3): Mat3 {
  const [a, b, c, d, e, f, g, h, i] = m as [
    number, number, number, number, number, number, number, number, number,
  ];
  const A = e * i - f * h;
  const B = c * h - b * i;
  const C = b * f - c * e;
  const det = a * A + d * B + g * C;
  if (Math.abs(det) < 1e-15) {
    throw new Error("homography is singular");
  }
  return [
    A / det, B / det, C / det,
    (f * g - d * i) / det, (a * i - c * g) / det, (c * d - a * f) / det,
    (d * h - e * g) / det, (b * g - a * h) / det, (a * e - b * d) / det,
  ];
}

function apply(m: Mat3, x: number, y: number): [number, number] {
  const w = m[6]! * x + m[7]! * y + m[8]!;
  if (Math.abs(w) < 1e-12) {
    throw new Error("point maps to infinity");
  }
  return [
    (m[0]! * x + m[1]! * y + m[2]!) / w,
    (m[3]! * x + m[4]! * y + m[5]!) / w,
  ];
}

/** Ground point -> pixel through the hello homography. */
export function project(h: Mat3, pt: [number, number]): [number, number] {
  return apply(h, pt[0], pt[1]);
}

/** Pixel -> ground point; the drawing direction. */
export function pointerToGround(h: Mat3, pixel: [number, number]): [number, number] {
  return apply(invert3(h), pixel[0], pixel[1]);
}

/**
 * Signed cross-track distance from a point to a polyline, positive to
 * the left of the travel direction. Matches the server's deviation
 * convention so the readout agrees with recorded metrics.
 */
export function crossTrack(points: [number, number][], pt: [number, number]): number {
  if (points.length < 2) return NaN;
  let best = Infinity;
  let signed = NaN;
  for (let k = 0; k + 1 < points.length; k++) {
    const [ax, ay] = points[k]!;
    const [bx, by] = points[k + 1]!;
    const dx = bx - ax;
    const dy = by - ay;
    const len2 = dx * dx + dy * dy;
    if (len2 === 0) continue;
    let u = ((pt[0] - ax) * dx + (pt[1] - ay) * dy) / len2;
    u = Math.max(0, Math.min(1, u));
    const px = ax + u * dx;
    const py = ay + u * dy;
    const dist = Math.hypot(pt[0] - px, pt[1] - py);
    if (dist < best) {
      best = dist;
      const cross = dx * (pt[1] - ay) - dy * (pt[0] - ax);
      signed = cross >= 0 ? dist : -dist;
    }
  }
  return signed;
}
