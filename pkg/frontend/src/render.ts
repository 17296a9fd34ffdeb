/** SVG drawing for one playback panel: moving marker plus fading trail. */

import type { PairView, Point } from "./model.js";
import { makeViewport } from "./model.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const TRAIL = 12; // frames of fading history behind the marker

export class Panel {
  private readonly toPx: (p: Point) => Point;
  private readonly marker: SVGCircleElement;
  private readonly trailGroup: SVGGElement;
  private readonly fullPath: SVGPolylineElement;

  constructor(
    svg: SVGSVGElement,
    private readonly points: Point[],
    bounds: { low: number[]; high: number[] },
    private readonly env: string,
  ) {
    const width = svg.viewBox.baseVal.width;
    const height = svg.viewBox.baseVal.height;
    this.toPx = makeViewport(bounds, width, height);
    svg.replaceChildren();

    if (env === "pendulum") {
      const pivot = this.toPx([0, 0]);
      const hub = document.createElementNS(SVG_NS, "circle");
      hub.setAttribute("cx", String(pivot[0]));
      hub.setAttribute("cy", String(pivot[1]));
      hub.setAttribute("r", "3");
      hub.setAttribute("class", "hub");
      svg.appendChild(hub);
    } else {
      const goal = this.toPx([0, 0]);
      const cross = document.createElementNS(SVG_NS, "path");
      const [gx, gy] = goal;
      cross.setAttribute(
        "d",
        `M ${gx - 6} ${gy} H ${gx + 6} M ${gx} ${gy - 6} V ${gy + 6}`,
      );
      cross.setAttribute("class", "goal");
      svg.appendChild(cross);
    }

    this.fullPath = document.createElementNS(SVG_NS, "polyline");
    this.fullPath.setAttribute("class", "full-path");
    this.fullPath.setAttribute(
      "points",
      points.map((p) => this.toPx(p).join(",")).join(" "),
    );
    this.fullPath.setAttribute("visibility", "hidden");
    svg.appendChild(this.fullPath);

    this.trailGroup = document.createElementNS(SVG_NS, "g");
    svg.appendChild(this.trailGroup);

    this.marker = document.createElementNS(SVG_NS, "circle");
    this.marker.setAttribute("r", "5");
    this.marker.setAttribute("class", "marker");
    svg.appendChild(this.marker);
  }

  setStaticTrail(visible: boolean): void {
    this.fullPath.setAttribute("visibility", visible ? "visible" : "hidden");
  }

  drawFrame(frame: number): void {
    const [x, y] = this.toPx(this.points[frame]);
    this.marker.setAttribute("cx", String(x));
    this.marker.setAttribute("cy", String(y));
    const segments: SVGLineElement[] = [];
    for (let back = 1; back <= TRAIL && frame - back >= 0; back += 1) {
      const a = this.toPx(this.points[frame - back]);
      const b = this.toPx(this.points[frame - back + 1]);
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(a[0]));
      line.setAttribute("y1", String(a[1]));
      line.setAttribute("x2", String(b[0]));
      line.setAttribute("y2", String(b[1]));
      line.setAttribute("class", "trail");
      line.setAttribute("stroke-opacity", String(1 - back / (TRAIL + 1)));
      segments.push(line);
    }
    if (this.env === "pendulum") {
      const rod = document.createElementNS(SVG_NS, "line");
      const pivot = this.toPx([0, 0]);
      rod.setAttribute("x1", String(pivot[0]));
      rod.setAttribute("y1", String(pivot[1]));
      rod.setAttribute("x2", String(x));
      rod.setAttribute("y2", String(y));
      rod.setAttribute("class", "rod");
      segments.push(rod);
    }
    this.trailGroup.replaceChildren(...segments);
  }
}

/** Build both panels for a pair; frames advance in lockstep via drawFrame. */
export function buildPanels(
  view: PairView,
  leftSvg: SVGSVGElement,
  rightSvg: SVGSVGElement,
): [Panel, Panel] {
  return [
    new Panel(leftSvg, view.tracks[0], view.bounds, view.env),
    new Panel(rightSvg, view.tracks[1], view.bounds, view.env),
  ];
}
