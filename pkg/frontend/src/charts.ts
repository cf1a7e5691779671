// Histogram bar charts drawn onto canvas from service response arrays.
// Geometry is computed by a pure function so it can be tested headless.

export interface Bar {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** Bar rectangles for a histogram in a width x height box (origin top-left).
    Bars scale so the tallest value fills the height; all-zero data yields
    zero-height bars on the baseline. */
export function layoutBars(values: number[], width: number, height: number, gap = 1): Bar[] {
  const n = values.length;
  if (n === 0) return [];
  const max = Math.max(...values);
  const slot = width / n;
  const barWidth = Math.max(1, slot - gap);
  return values.map((value, idx) => {
    const h = max > 0 ? (value / max) * height : 0;
    return { x: idx * slot, y: height - h, w: barWidth, h };
  });
}

export function drawHistogram(
  canvas: HTMLCanvasElement,
  values: number[],
  color: string,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = color;
  for (const bar of layoutBars(values, canvas.width, canvas.height)) {
    ctx.fillRect(bar.x, bar.y, bar.w, bar.h);
  }
}
