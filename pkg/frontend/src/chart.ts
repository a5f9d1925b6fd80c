/** Temperature chart geometry.
 *
 * Pure function of the temperature response: the sample polyline, the
 * policy band, and the shaded violation intervals all come straight from
 * response fields; compliance is never recomputed here.
 */

import type { TemperatureResponse } from "./types.js";

export interface Span {
  x0: number;
  x1: number;
}

export interface ChartGeometry {
  width: number;
  height: number;
  points: { x: number; y: number; ts: number; temp: number }[];
  polyline: string;
  /** y-pixel band of the allowed [min_temp, max_temp] range, if known */
  policyBand: { y0: number; y1: number } | null;
  /** x-pixel spans of the reported violation intervals */
  violationSpans: Span[];
  minTemp: number;
  maxTemp: number;
  minTs: number;
  maxTs: number;
}

const PAD = 1.0; // degrees of headroom added around the data

export function computeChart(
  resp: TemperatureResponse, width = 640, height = 240,
): ChartGeometry {
  const samples = resp.samples.map((s) => ({ ts: s.timestamp, temp: parseFloat(s.temperature) }));
  const temps = samples.map((s) => s.temp);
  const tss = samples.map((s) => s.ts);
  let lo = Math.min(...temps);
  let hi = Math.max(...temps);
  if (resp.policy) {
    lo = Math.min(lo, parseFloat(resp.policy.min_temp));
    hi = Math.max(hi, parseFloat(resp.policy.max_temp));
  }
  lo -= PAD;
  hi += PAD;
  const minTs = tss[0];
  const maxTs = tss[tss.length - 1];
  const spanTs = Math.max(maxTs - minTs, 1);
  const spanTemp = Math.max(hi - lo, 0.1);

  const xOf = (ts: number) => ((ts - minTs) / spanTs) * width;
  const yOf = (temp: number) => height - ((temp - lo) / spanTemp) * height;

  const points = samples.map((s) => ({ x: xOf(s.ts), y: yOf(s.temp), ts: s.ts, temp: s.temp }));
  const polyline = points.map((p) => `${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ");

  const policyBand = resp.policy
    ? { y0: yOf(parseFloat(resp.policy.max_temp)), y1: yOf(parseFloat(resp.policy.min_temp)) }
    : null;
  const violationSpans = (resp.report?.violations ?? []).map((v) => ({
    x0: xOf(v.start_ts),
    x1: Math.max(xOf(v.end_ts), xOf(v.start_ts) + 2), // zero-length stays visible
  }));

  return {
    width, height, points, polyline, policyBand, violationSpans,
    minTemp: lo, maxTemp: hi, minTs, maxTs,
  };
}

export function renderChartSvg(geo: ChartGeometry): string {
  const parts: string[] = [];
  parts.push(
    `<svg viewBox="0 0 ${geo.width} ${geo.height}" class="temp-chart" ` +
    `preserveAspectRatio="none" role="img" aria-label="temperature chart">`,
  );
  if (geo.policyBand) {
    const { y0, y1 } = geo.policyBand;
    parts.push(
      `<rect class="band-ok" x="0" y="${y0.toFixed(1)}" width="${geo.width}" ` +
      `height="${(y1 - y0).toFixed(1)}"/>`,
    );
  }
  for (const span of geo.violationSpans) {
    parts.push(
      `<rect class="band-violation" x="${span.x0.toFixed(1)}" y="0" ` +
      `width="${(span.x1 - span.x0).toFixed(1)}" height="${geo.height}"/>`,
    );
  }
  parts.push(`<polyline class="temp-line" fill="none" points="${geo.polyline}"/>`);
  parts.push("</svg>");
  return parts.join("");
}
