/** Payload shapes served by the annotation API. */

export interface SpanRef {
  turn: number;
  start_tok: number;
  end_tok: number;
}

export interface HitOption {
  id: string;
  label: string;
  span?: SpanRef;
  entity?: string;
}

export interface DialogueTurn {
  speaker: "USER" | "SYSTEM";
  text: string;
  tokens: string[];
}

export interface HitView {
  id: string;
  stage: 1 | 2 | 3;
  conv: string;
  payload: {
    kind: string;
    personal?: SpanRef;
    mention?: SpanRef;
    text?: string;
    follow_up?: number;
  };
  options: HitOption[];
  required: number;
  n_responses: number;
  status: string;
  dialogue: DialogueTurn[];
}

export interface StageProgress {
  open: number;
  closed: number;
}

export type Progress = Record<string, StageProgress>;

export interface ApiOk<T> {
  ok: true;
  body: T;
}

export interface ApiErr {
  ok: false;
  status: number;
  error: string;
}

export type ApiResult<T> = ApiOk<T> | ApiErr;
