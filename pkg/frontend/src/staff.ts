// Staff rendering model: canonical score text -> lanes of blocks.
// The console never mutates scores; everything here is derived from the text
// the API serves.

export const COLUMNS = [
  "support_l",
  "support_r",
  "leg_l",
  "leg_r",
  "body",
  "arm_l",
  "arm_r",
  "head",
] as const;

export const DIRECTIONS = [
  "place",
  "forward",
  "back",
  "left",
  "right",
  "left_forward",
  "right_forward",
  "left_back",
  "right_back",
] as const;

export const LEVELS = ["low", "middle", "high"] as const;

const DIRECTION_GLYPHS: Record<string, string> = {
  place: "·",
  forward: "↑",
  back: "↓",
  left: "←",
  right: "→",
  left_forward: "↖",
  right_forward: "↗",
  left_back: "↙",
  right_back: "↘",
};

export interface TokenView {
  column: string;
  lane: number;
  start: number;
  duration: number;
  direction: string;
  level: string;
  rotation: string;
  flexion: string;
  glyph: string;
  violation: boolean;
}

export interface StaffGrid {
  ok: boolean;
  error: string | null;
  rawText: string;
  meter: [number, number] | null;
  beats: number;
  lanes: string[];
  blocks: TokenView[];
}

const TOKEN_KEYS = ["start", "dur", "col", "dir", "lvl", "rot", "flex", "path", "face", "pos"];

function parseRational(text: string): number {
  const parts = text.split("/");
  if (parts.length !== 2) throw new Error(`malformed rational ${text}`);
  const num = Number(parts[0]);
  const den = Number(parts[1]);
  if (!Number.isInteger(num) || !Number.isInteger(den) || den <= 0) {
    throw new Error(`malformed rational ${text}`);
  }
  return num / den;
}

interface RawToken {
  start: number;
  duration: number;
  column: string;
  direction: string;
  level: string;
  rotation: string;
  flexion: string;
}

function parseTokenLine(line: string, lineNo: number): RawToken {
  const fields = line.split(" ");
  if (fields[0] !== "tok" || fields.length !== 1 + TOKEN_KEYS.length) {
    throw new Error(`line ${lineNo}: malformed token line`);
  }
  const values: Record<string, string> = {};
  TOKEN_KEYS.forEach((key, i) => {
    const item = fields[i + 1];
    const eq = item.indexOf("=");
    if (eq < 0 || item.slice(0, eq) !== key) {
      throw new Error(`line ${lineNo}: expected key ${key}`);
    }
    values[key] = item.slice(eq + 1);
  });
  if (!COLUMNS.includes(values["col"] as (typeof COLUMNS)[number])) {
    throw new Error(`line ${lineNo}: unknown column ${values["col"]}`);
  }
  if (!DIRECTIONS.includes(values["dir"] as (typeof DIRECTIONS)[number])) {
    throw new Error(`line ${lineNo}: unknown direction ${values["dir"]}`);
  }
  if (!LEVELS.includes(values["lvl"] as (typeof LEVELS)[number])) {
    throw new Error(`line ${lineNo}: unknown level ${values["lvl"]}`);
  }
  return {
    start: parseRational(values["start"]),
    duration: parseRational(values["dur"]),
    column: values["col"],
    direction: values["dir"],
    level: values["lvl"],
    rotation: values["rot"],
    flexion: values["flex"],
  };
}

// Build the staff grid from canonical score text.  A parse failure keeps the
// raw text so the caller can show it inline next to the error.
export function renderStaff(scoreText: string): StaffGrid {
  const grid: StaffGrid = {
    ok: false,
    error: null,
    rawText: scoreText,
    meter: null,
    beats: 0,
    lanes: [...COLUMNS],
    blocks: [],
  };
  try {
    const lines = scoreText.split("\n");
    let headerSeen = false;
    const tokens: RawToken[] = [];
    lines.forEach((raw, index) => {
      const line = raw.trimEnd();
      if (line.trim() === "" || line.trimStart().startsWith("#")) return;
      const lineNo = index + 1;
      if (!headerSeen) {
        if (line !== "LABANSTR 1") throw new Error(`line ${lineNo}: expected 'LABANSTR 1' header`);
        headerSeen = true;
      } else if (grid.meter === null) {
        const match = /^meter (\d+)\/(\d+)$/.exec(line);
        if (!match) throw new Error(`line ${lineNo}: expected meter line`);
        grid.meter = [Number(match[1]), Number(match[2])];
      } else {
        tokens.push(parseTokenLine(line, lineNo));
      }
    });
    if (!headerSeen || grid.meter === null) throw new Error("missing header or meter line");

    grid.blocks = tokens.map((token) => ({
      column: token.column,
      lane: COLUMNS.indexOf(token.column as (typeof COLUMNS)[number]),
      start: token.start,
      duration: token.duration,
      direction: token.direction,
      level: token.level,
      rotation: token.rotation,
      flexion: token.flexion,
      glyph: DIRECTION_GLYPHS[token.direction],
      violation: false,
    }));
    markOverlaps(grid.blocks);
    grid.beats = Math.max(4, ...grid.blocks.map((b) => b.start + b.duration));
    grid.ok = true;
  } catch (err) {
    grid.error = err instanceof Error ? err.message : String(err);
  }
  return grid;
}

// Mirror of the engine's overlap rule (half-open intervals per column), used
// only to badge blocks; the engine remains the authority.
function markOverlaps(blocks: TokenView[]): void {
  for (let i = 0; i < blocks.length; i++) {
    for (let j = i + 1; j < blocks.length; j++) {
      const a = blocks[i];
      const b = blocks[j];
      if (a.lane !== b.lane) continue;
      if (a.start < b.start + b.duration && b.start < a.start + a.duration) {
        a.violation = true;
        b.violation = true;
      }
    }
  }
}
