import type { HitView } from "../src/types.js";

export const DIALOGUE = [
  {
    speaker: "USER" as const,
    text: "I drive a Life.",
    tokens: ["I", "drive", "a", "Life", "."],
  },
  {
    speaker: "SYSTEM" as const,
    text: "Nice!",
    tokens: ["Nice", "!"],
  },
  {
    speaker: "USER" as const,
    text: "I love my cars.",
    tokens: ["I", "love", "my", "cars", "."],
  },
];

export const STAGE1_HIT: HitView = {
  id: "h1-demo",
  stage: 1,
  conv: "demo",
  payload: { kind: "personal_mentions" },
  options: [
    { id: "s2:2:4", label: "my cars",
      span: { turn: 2, start_tok: 2, end_tok: 4 } },
    { id: "s2:2:5", label: "my cars.",
      span: { turn: 2, start_tok: 2, end_tok: 5 } },
    { id: "none", label: "No personal entity mention" },
  ],
  required: 3,
  n_responses: 1,
  status: "OPEN",
  dialogue: DIALOGUE,
};

export const STAGE2_HIT: HitView = {
  id: "h2-demo-2:2:4",
  stage: 2,
  conv: "demo",
  payload: {
    kind: "antecedent",
    personal: { turn: 2, start_tok: 2, end_tok: 4 },
    follow_up: 0,
  },
  options: [
    { id: "s0:3:4", label: "Life",
      span: { turn: 0, start_tok: 3, end_tok: 4 } },
    { id: "nid", label: "Not in dialogue" },
  ],
  required: 3,
  n_responses: 0,
  status: "OPEN",
  dialogue: DIALOGUE,
};

export const STAGE3_HIT: HitView = {
  id: "h3-demo-0:3:4",
  stage: 3,
  conv: "demo",
  payload: {
    kind: "entity",
    mention: { turn: 0, start_tok: 3, end_tok: 4 },
    text: "Life",
  },
  options: [
    { id: "e0", label: "Life", entity: "Life" },
    { id: "e1", label: "Life (magazine)", entity: "Life (magazine)" },
    { id: "none", label: "None" },
  ],
  required: 3,
  n_responses: 2,
  status: "OPEN",
  dialogue: DIALOGUE,
};
