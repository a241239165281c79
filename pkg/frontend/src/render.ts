// DOM layer: grid model -> staff lanes, ratings -> polyline chart.

import { StaffGrid } from "./staff.js";

const BEAT_WIDTH = 56; // px per beat
const LANE_HEIGHT = 34;

export function renderStaffInto(container: HTMLElement, grid: StaffGrid): void {
  container.textContent = "";
  if (grid.error !== null) {
    const error = document.createElement("div");
    error.className = "staff-error";
    error.textContent = `parse failure: ${grid.error}`;
    const raw = document.createElement("pre");
    raw.textContent = grid.rawText;
    container.append(error, raw);
    if (!grid.ok) return;
  }
  const staff = document.createElement("div");
  staff.className = "staff";
  staff.style.width = `${140 + grid.beats * BEAT_WIDTH}px`;

  const ruler = document.createElement("div");
  ruler.className = "ruler";
  const meterLabel = document.createElement("span");
  meterLabel.className = "lane-label";
  meterLabel.textContent = grid.meter ? `meter ${grid.meter[0]}/${grid.meter[1]}` : "";
  ruler.appendChild(meterLabel);
  for (let beat = 0; beat <= grid.beats; beat++) {
    const tick = document.createElement("span");
    tick.className = "tick";
    tick.style.left = `${140 + beat * BEAT_WIDTH}px`;
    tick.textContent = String(beat);
    ruler.appendChild(tick);
  }
  staff.appendChild(ruler);

  grid.lanes.forEach((laneName, laneIndex) => {
    const lane = document.createElement("div");
    lane.className = "lane";
    lane.dataset.column = laneName;
    lane.style.height = `${LANE_HEIGHT}px`;
    const label = document.createElement("span");
    label.className = "lane-label";
    label.textContent = laneName;
    lane.appendChild(label);
    grid.blocks
      .filter((block) => block.lane === laneIndex)
      .forEach((block) => {
        const el = document.createElement("div");
        el.className = `block level-${block.level}` + (block.violation ? " violation" : "");
        el.style.left = `${140 + block.start * BEAT_WIDTH}px`;
        el.style.width = `${block.duration * BEAT_WIDTH - 2}px`;
        el.title = `${block.column} ${block.direction} ${block.level} [${block.start}, ${
          block.start + block.duration
        })${block.violation ? " OVERLAP" : ""}`;
        el.textContent = block.glyph + (block.violation ? " ⚠" : "");
        lane.appendChild(el);
      });
    staff.appendChild(lane);
  });
  container.appendChild(staff);
}

export function renderRatingChart(container: HTMLElement, ratings: number[], threshold: number): void {
  container.textContent = "";
  const width = 360;
  const height = 90;
  const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));

  const thresholdLine = document.createElementNS("http://www.w3.org/2000/svg", "line");
  const thresholdY = height - threshold * (height - 10) - 5;
  thresholdLine.setAttribute("x1", "0");
  thresholdLine.setAttribute("x2", String(width));
  thresholdLine.setAttribute("y1", String(thresholdY));
  thresholdLine.setAttribute("y2", String(thresholdY));
  thresholdLine.setAttribute("stroke", "#c66");
  thresholdLine.setAttribute("stroke-dasharray", "4 3");
  svg.appendChild(thresholdLine);

  if (ratings.length > 0) {
    const step = ratings.length > 1 ? width / (ratings.length - 1) : 0;
    const points = ratings
      .map((rating, i) => `${i * step},${height - rating * (height - 10) - 5}`)
      .join(" ");
    const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("points", points);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "#4a7");
    line.setAttribute("stroke-width", "2");
    svg.appendChild(line);
  }
  container.appendChild(svg);
  const label = document.createElement("div");
  label.className = "chart-label";
  label.textContent =
    ratings.length === 0 ? "no feedback yet" : `${ratings.length} ratings, last ${ratings[ratings.length - 1].toFixed(3)}`;
  container.appendChild(label);
}
