"""Annotation project: three-stage agreement-gated workflow over an
append-only event log.

Stage 1 asks for the personal entity mentions of a conversation (candidate
spans are all my/our prefixes up to 10 followers). Stage 2 pairs each
agreed personal mention with explicit-mention antecedents drawn from a
pooled candidate list, one selection per HIT, chaining follow-up HITs until
"not in dialogue" so a mention can collect several antecedents. Stage 3
links pooled mentions to KB entities.

Agreement rules:

* stage 1: pass iff at least 2 of 3 responses select the exact same option
  set, else fail;
* stage 2: 3 of 3 passes; exactly 2 of 3 extends the HIT to 5 responses,
  which pass iff some option reaches 3 votes; anything else fails;
* stage 3: at least 2 of 3 passes; otherwise extend to 5 and take the
  majority, with ties marked UNRESOLVED.

Every state change (hit creation, response, extension, closure, chain
completion, gate outcome) is one JSON line in events.jsonl; the in-memory
state is a pure fold of that log, so replaying the log always reproduces
the live state. A snapshot is written periodically for inspection.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .. import md as md_mod
from ..core import (
    AntecedentRef,
    Conversation,
    ConversationAnnotation,
    LinkRecord,
    MentionSpan,
    PersonalRecord,
    Speaker,
    TurnAnnotation,
    canonical_json,
    read_annotations,
    read_conversations,
    span_text,
    write_annotations,
)
from ..ed import KnowledgeBase, load_kb, normalize_mention, search_titles
from ..encoder import load_encoder
from ..evaluation import fleiss_kappa
from ..pem import MAX_FOLLOWERS, TRIGGERS
from ..pipeline import detect_explicit_mentions

DEFAULT_STOPLIST = ("please", "i am")
DEFAULT_REQUIRED = 3
MAX_REQUIRED = 5
SNAPSHOT_EVERY = 50

OPEN = "OPEN"
PASSED = "PASSED"
FAILED = "FAILED"
UNRESOLVED = "UNRESOLVED"

NO_MENTION = "none"       # stage 1: no personal entity mention
NOT_IN_DIALOGUE = "nid"   # stage 2
NO_ENTITY = "none"        # stage 3


class AnnotationError(ValueError):
    """Invalid submission (duplicate annotator, closed HIT, bad option)."""


def span_key(turn: int, start: int, end: int) -> str:
    return f"{turn}:{start}:{end}"


def span_dict(span: MentionSpan) -> dict:
    return {"turn": span.turn_index, "start_tok": span.tok_start,
            "end_tok": span.tok_end}


def dict_span(obj: dict) -> MentionSpan:
    return MentionSpan(obj["turn"], obj["start_tok"], obj["end_tok"])


def split_for(conversation_id: str) -> str:
    """Deterministic 60/20/20 split from a hash of the conversation id."""
    digest = hashlib.sha1(conversation_id.encode("utf-8")).hexdigest()
    bucket = int(digest, 16) % 100
    if bucket < 60:
        return "train"
    return "val" if bucket < 80 else "test"


# ---------------------------------------------------------------------------
# HIT construction (pure functions)
# ---------------------------------------------------------------------------

def stage1_candidate_spans(conversation: Conversation) -> list[MentionSpan]:
    """Every my/our prefix span in USER turns: trigger plus 1..10 followers."""
    spans = []
    for t in conversation.user_turn_indices():
        tokens = conversation.turns[t].tokens
        for i, tok in enumerate(tokens):
            if tok.text.lower() not in TRIGGERS:
                continue
            for end in range(i + 2, min(i + 1 + MAX_FOLLOWERS, len(tokens)) + 1):
                spans.append(MentionSpan(t, i, end))
    return sorted(spans, key=lambda s: s.position())


def build_stage1_hits(conversations: Sequence[Conversation],
                      required: int = DEFAULT_REQUIRED) -> list[dict]:
    """One HIT per conversation containing my/our in a USER turn."""
    hits = []
    for conv in conversations:
        cands = stage1_candidate_spans(conv)
        if not any(tok.text.lower() in TRIGGERS
                   for t in conv.user_turn_indices()
                   for tok in conv.turns[t].tokens):
            continue
        options = [{"id": "s" + span_key(*s.position()),
                    "label": span_text(conv, s), "span": span_dict(s)}
                   for s in cands]
        options.append({"id": NO_MENTION, "label": "No personal entity mention"})
        hits.append({
            "id": f"h1-{conv.id}",
            "stage": 1,
            "conv": conv.id,
            "payload": {"kind": "personal_mentions"},
            "options": options,
            "required": required,
        })
    return hits


def dedup_by_normal_form(conversation: Conversation,
                         spans: Sequence[MentionSpan]) -> list[MentionSpan]:
    """One span per normalized surface form, earliest position wins, then
    overlapping spans resolved leftmost-longest so the pool can be exported
    as non-overlapping gold links."""
    seen: set[str] = set()
    unique: list[MentionSpan] = []
    for span in sorted(set(spans), key=lambda s: s.position()):
        form = normalize_mention(span_text(conversation, span))
        if not form or form in seen:
            continue
        seen.add(form)
        unique.append(span)
    kept: list[MentionSpan] = []
    for span in sorted(unique, key=lambda s: (s.turn_index, s.tok_start,
                                              -s.tok_end)):
        if not any(k.turn_index == span.turn_index
                   and k.tok_start < span.tok_end
                   and span.tok_start < k.tok_end for k in kept):
            kept.append(span)
    return sorted(kept, key=lambda s: s.position())


def build_stage2_hit(conversation: Conversation, personal: MentionSpan,
                     pool: Sequence[MentionSpan],
                     exclude_forms: frozenset[str] = frozenset(),
                     follow_up: int = 0,
                     required: int = DEFAULT_REQUIRED) -> dict:
    """One antecedent question for one personal mention; candidates are the
    pooled explicit mentions strictly preceding it."""
    options = []
    for span in pool:
        if not span.precedes(personal):
            continue
        form = normalize_mention(span_text(conversation, span))
        if form in exclude_forms:
            continue
        options.append({"id": "s" + span_key(*span.position()),
                        "label": span_text(conversation, span),
                        "span": span_dict(span)})
    options.append({"id": NOT_IN_DIALOGUE, "label": "Not in dialogue"})
    suffix = f"-f{follow_up}" if follow_up else ""
    return {
        "id": f"h2-{conversation.id}-{span_key(*personal.position())}{suffix}",
        "stage": 2,
        "conv": conversation.id,
        "payload": {"kind": "antecedent", "personal": span_dict(personal),
                    "follow_up": follow_up},
        "options": options,
        "required": required,
    }


def build_stage3_hits(conversation: Conversation,
                      mentions: Sequence[MentionSpan],
                      kb: KnowledgeBase | None,
                      linker_entities: dict[MentionSpan, list[str]],
                      stoplist: Sequence[str] = DEFAULT_STOPLIST,
                      required: int = DEFAULT_REQUIRED) -> list[dict]:
    """One entity question per pooled mention, options pooled from linker
    suggestions plus KB title search plus a NONE option."""
    stop = {normalize_mention(s) for s in stoplist}
    hits = []
    for span in sorted(set(mentions), key=lambda s: s.position()):
        text = span_text(conversation, span)
        if normalize_mention(text) in stop:
            continue
        entities: list[str] = []
        for ent in linker_entities.get(span, []):
            if ent not in entities:
                entities.append(ent)
        if kb is not None:
            for ent in search_titles(text, kb, 10):
                if ent not in entities:
                    entities.append(ent)
        options = [{"id": f"e{i}", "label": ent, "entity": ent}
                   for i, ent in enumerate(entities)]
        options.append({"id": NO_ENTITY, "label": "None"})
        hits.append({
            "id": f"h3-{conversation.id}-{span_key(*span.position())}",
            "stage": 3,
            "conv": conversation.id,
            "payload": {"kind": "entity", "mention": span_dict(span),
                        "text": text},
            "options": options,
            "required": required,
        })
    return hits


# ---------------------------------------------------------------------------
# Agreement rules
# ---------------------------------------------------------------------------

def _selection_signature(selection: Sequence[str]) -> str:
    return "+".join(sorted(selection))


def agreement_outcome(stage: int, responses: Sequence[dict],
                      required: int) -> tuple[str, str | None, list[str]]:
    """Decide what happens when a HIT reaches its required response count.

    Returns (action, status, result): action is "extend" or "close".
    """
    if stage == 1:
        counts = Counter(_selection_signature(r["selection"])
                         for r in responses)
        sig, top = counts.most_common(1)[0]
        if top >= 2:
            return "close", PASSED, sorted(sig.split("+"))
        return "close", FAILED, []
    counts = Counter(r["selection"][0] for r in responses)
    option, top = counts.most_common(1)[0]
    if stage == 2:
        if required == DEFAULT_REQUIRED:
            if top == 3:
                return "close", PASSED, [option]
            if top == 2:
                return "extend", None, []
            return "close", FAILED, []
        if top >= 3:
            return "close", PASSED, [option]
        return "close", FAILED, []
    # stage 3
    if required == DEFAULT_REQUIRED:
        if top >= 2:
            return "close", PASSED, [option]
        return "extend", None, []
    tied = [o for o, c in counts.items() if c == top]
    if len(tied) > 1:
        return "close", UNRESOLVED, sorted(tied)
    return "close", PASSED, [option]


# ---------------------------------------------------------------------------
# State fold
# ---------------------------------------------------------------------------

@dataclass
class HitState:
    id: str
    stage: int
    conv: str
    payload: dict
    options: list[dict]
    required: int
    responses: list[dict] = field(default_factory=list)
    status: str = OPEN
    result: list[str] = field(default_factory=list)

    def option_ids(self) -> set[str]:
        return {o["id"] for o in self.options}

    def option(self, option_id: str) -> dict:
        for o in self.options:
            if o["id"] == option_id:
                return o
        raise KeyError(option_id)

    def to_dict(self) -> dict:
        return {"id": self.id, "stage": self.stage, "conv": self.conv,
                "payload": self.payload, "options": self.options,
                "required": self.required, "responses": self.responses,
                "status": self.status, "result": self.result}


@dataclass
class ProjectState:
    hits: dict[str, HitState] = field(default_factory=dict)
    responded: set[tuple[str, str]] = field(default_factory=set)
    chains: dict[str, dict] = field(default_factory=dict)
    conv_stage: dict[tuple[str, int], bool] = field(default_factory=dict)
    seq: int = 0

    def apply(self, event: dict) -> None:
        etype = event["type"]
        if etype == "hits_built":
            for obj in event["hits"]:
                self.hits[obj["id"]] = HitState(
                    obj["id"], obj["stage"], obj["conv"], obj["payload"],
                    obj["options"], obj["required"])
                if obj["stage"] == 2 and not obj["payload"].get("follow_up"):
                    key = self._chain_key(obj["conv"], obj["payload"]["personal"])
                    self.chains[key] = {"conv": obj["conv"],
                                        "personal": obj["payload"]["personal"],
                                        "selected": [], "status": "open"}
        elif etype == "response":
            hit = self.hits[event["hit"]]
            hit.responses.append({"annotator": event["annotator"],
                                  "selection": event["selection"],
                                  "ts": event["ts"]})
            self.responded.add((event["hit"], event["annotator"]))
        elif etype == "extended":
            self.hits[event["hit"]].required = event["required"]
        elif etype == "closed":
            hit = self.hits[event["hit"]]
            hit.status = event["status"]
            hit.result = event["result"]
        elif etype == "chain_update":
            key = self._chain_key(event["conv"], event["personal"])
            self.chains[key]["selected"] = event["antecedents"]
        elif etype == "chain_done":
            key = self._chain_key(event["conv"], event["personal"])
            self.chains[key] = {"conv": event["conv"],
                                "personal": event["personal"],
                                "selected": event["antecedents"],
                                "status": ("resolved" if event["resolved"]
                                           else "failed")}
        elif etype == "conv_stage":
            self.conv_stage[(event["conv"], event["stage"])] = event["passed"]
        else:
            raise ValueError(f"unknown event type {etype!r}")
        self.seq += 1

    @staticmethod
    def _chain_key(conv: str, personal: dict) -> str:
        return f"{conv}/{span_key(personal['turn'], personal['start_tok'], personal['end_tok'])}"

    def chains_for(self, conv: str) -> list[dict]:
        return [c for c in self.chains.values() if c["conv"] == conv]

    def fingerprint(self) -> str:
        return canonical_json({
            "hits": {k: h.to_dict() for k, h in self.hits.items()},
            "responded": sorted(map(list, self.responded)),
            "chains": self.chains,
            "conv_stage": {f"{c}/{s}": v
                           for (c, s), v in self.conv_stage.items()},
            "seq": self.seq,
        })


# ---------------------------------------------------------------------------
# Project
# ---------------------------------------------------------------------------

class Project:
    """Live project: conversations + config + event log + folded state.

    Submissions are serialised through one lock; every consequence of a
    submission (extension, closure, follow-up HITs, gate outcomes) is logged
    before it is applied, so the state is always a pure fold of the log.
    """

    def __init__(self, root: Path, conversations: Sequence[Conversation],
                 config: dict):
        self.root = Path(root)
        self.conversations = {c.id: c for c in conversations}
        self.config = config
        self.state = ProjectState()
        self._lock = threading.RLock()
        self._pool_cache: dict[str, list[MentionSpan]] = {}
        self._linker_entities_cache: dict[str, dict] = {}
        self._kb: KnowledgeBase | None = None
        self._md_model = None
        self._load_inputs()

    # -- setup ---------------------------------------------------------

    def _load_inputs(self) -> None:
        kb_dir = self.config.get("kb")
        if kb_dir:
            self._kb = load_kb(self.root / kb_dir)
        enc_path = self.config.get("encoder")
        head_path = self.config.get("md")
        if enc_path and head_path:
            self._md_model = (load_encoder(self.root / enc_path),
                              md_mod.load_md_head(self.root / head_path))
        self._linker_annotations = []
        for name in self.config.get("linker_files", []):
            self._linker_annotations.append(read_annotations(self.root / name))

    @property
    def events_path(self) -> Path:
        return self.root / "events.jsonl"

    @property
    def snapshot_path(self) -> Path:
        return self.root / "snapshot.json"

    @classmethod
    def create(cls, root: str | Path, conversations: Sequence[Conversation],
               config: dict | None = None) -> "Project":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        from ..core import write_conversations
        config = dict(config or {})
        write_conversations(root / "conversations.json", conversations)
        (root / "config.json").write_text(canonical_json(config),
                                          encoding="utf-8")
        project = cls(root, conversations, config)
        hits = build_stage1_hits(
            conversations, config.get("required_responses", DEFAULT_REQUIRED))
        project._log_and_apply({"type": "hits_built", "stage": 1,
                                "hits": hits})
        return project

    @classmethod
    def load(cls, root: str | Path) -> "Project":
        root = Path(root)
        conversations = read_conversations(root / "conversations.json")
        config_path = root / "config.json"
        config = (json.loads(config_path.read_text(encoding="utf-8"))
                  if config_path.exists() else {})
        project = cls(root, conversations, config)
        with project.events_path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    project.state.apply(json.loads(line))
        return project

    @classmethod
    def open_or_create(cls, root: str | Path) -> "Project":
        root = Path(root)
        if (root / "events.jsonl").exists():
            return cls.load(root)
        conversations = read_conversations(root / "conversations.json")
        config_path = root / "config.json"
        config = (json.loads(config_path.read_text(encoding="utf-8"))
                  if config_path.exists() else {})
        return cls.create(root, conversations, config)

    # -- candidate pooling ----------------------------------------------

    def mention_pool(self, conv_id: str) -> list[MentionSpan]:
        """Pooled explicit-mention candidates for one conversation: linker
        annotations plus the internal mention detector, deduplicated."""
        if conv_id in self._pool_cache:
            return self._pool_cache[conv_id]
        conv = self.conversations[conv_id]
        user_turns = set(conv.user_turn_indices())
        spans: list[MentionSpan] = []
        for annotations in self._linker_annotations:
            for ann in annotations:
                if ann.id != conv_id:
                    continue
                for t in ann.turns:
                    for link in t.links:
                        if t.turn in user_turns:
                            spans.append(MentionSpan(t.turn, link.start_tok,
                                                     link.end_tok))
        if self._md_model is not None:
            enc, head = self._md_model
            spans.extend(detect_explicit_mentions(conv, enc, head))
        pool = dedup_by_normal_form(conv, spans)
        self._pool_cache[conv_id] = pool
        return pool

    def linker_entities(self, conv_id: str) -> dict[MentionSpan, list[str]]:
        """Entity suggestions per pooled span, from the linker files."""
        if conv_id in self._linker_entities_cache:
            return self._linker_entities_cache[conv_id]
        by_span: dict[MentionSpan, list[str]] = {}
        for annotations in self._linker_annotations:
            for ann in annotations:
                if ann.id != conv_id:
                    continue
                for t in ann.turns:
                    for link in t.links:
                        span = MentionSpan(t.turn, link.start_tok, link.end_tok)
                        by_span.setdefault(span, [])
                        if link.entity not in by_span[span]:
                            by_span[span].append(link.entity)
        self._linker_entities_cache[conv_id] = by_span
        return by_span

    # -- event plumbing --------------------------------------------------

    def _log_and_apply(self, event: dict) -> None:
        event = dict(event)
        event["seq"] = self.state.seq
        with self.events_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
        self.state.apply(event)
        every = self.config.get("snapshot_every", SNAPSHOT_EVERY)
        if every and self.state.seq % every == 0:
            self.write_snapshot()

    def write_snapshot(self) -> None:
        self.snapshot_path.write_text(self.state.fingerprint(),
                                      encoding="utf-8")

    # -- submissions ------------------------------------------------------

    def next_hit_for(self, annotator: str, stage: int | None = None
                     ) -> HitState | None:
        with self._lock:
            for hit in self.state.hits.values():
                if hit.status != OPEN:
                    continue
                if stage is not None and hit.stage != stage:
                    continue
                if (hit.id, annotator) in self.state.responded:
                    continue
                return hit
            return None

    def submit_response(self, hit_id: str, annotator: str,
                        selection: Sequence[str],
                        ts: float | None = None) -> HitState:
        with self._lock:
            hit = self.state.hits.get(hit_id)
            if hit is None:
                raise KeyError(f"unknown HIT {hit_id!r}")
            if hit.status != OPEN:
                raise AnnotationError(f"HIT {hit_id} is closed")
            if (hit_id, annotator) in self.state.responded:
                raise AnnotationError(
                    f"annotator {annotator!r} already responded to {hit_id}")
            selection = list(selection)
            if not selection:
                raise AnnotationError("empty selection")
            unknown = set(selection) - hit.option_ids()
            if unknown:
                raise AnnotationError(f"unknown option(s) {sorted(unknown)}")
            if hit.stage == 1:
                if NO_MENTION in selection and len(selection) > 1:
                    raise AnnotationError(
                        "the no-mention option must be selected alone")
                if len(set(selection)) != len(selection):
                    raise AnnotationError("duplicate options in selection")
            elif len(selection) != 1:
                raise AnnotationError(
                    f"stage {hit.stage} takes exactly one option")
            pending = [{"type": "response", "hit": hit_id,
                        "annotator": annotator, "selection": sorted(selection),
                        "ts": time.time() if ts is None else ts}]
            while pending:
                event = pending.pop(0)
                self._log_and_apply(event)
                pending.extend(self._consequences(event))
            return self.state.hits[hit_id]

    # -- cascade ----------------------------------------------------------

    def _consequences(self, event: dict) -> list[dict]:
        etype = event["type"]
        if etype == "response":
            hit = self.state.hits[event["hit"]]
            if len(hit.responses) < hit.required:
                return []
            action, status, result = agreement_outcome(
                hit.stage, hit.responses, hit.required)
            if action == "extend":
                return [{"type": "extended", "hit": hit.id,
                         "required": MAX_REQUIRED}]
            return [{"type": "closed", "hit": hit.id, "status": status,
                     "result": result}]
        if etype == "closed":
            hit = self.state.hits[event["hit"]]
            if hit.stage == 1:
                return self._after_stage1(hit)
            if hit.stage == 2:
                return self._after_stage2(hit)
            return self._after_stage3(hit)
        if etype == "chain_done":
            return self._check_stage2_gate(event["conv"])
        if etype == "conv_stage":
            if event["stage"] == 2 and event["passed"]:
                return self._build_stage3(event["conv"])
            return []
        return []

    def _after_stage1(self, hit: HitState) -> list[dict]:
        conv_id = hit.conv
        if hit.status != PASSED:
            return [{"type": "conv_stage", "conv": conv_id, "stage": 1,
                     "passed": False}]
        events = [{"type": "conv_stage", "conv": conv_id, "stage": 1,
                   "passed": True}]
        spans = [dict_span(hit.option(oid)["span"]) for oid in hit.result
                 if oid != NO_MENTION]
        if not spans:
            events.append({"type": "conv_stage", "conv": conv_id,
                           "stage": 2, "passed": True})
            return events
        conv = self.conversations[conv_id]
        pool = self.mention_pool(conv_id)
        hits = [build_stage2_hit(conv, span, pool,
                                 required=hit_required(self.config))
                for span in sorted(spans, key=lambda s: s.position())]
        events.append({"type": "hits_built", "stage": 2, "hits": hits})
        return events

    def _after_stage2(self, hit: HitState) -> list[dict]:
        conv_id = hit.conv
        conv = self.conversations[conv_id]
        personal = hit.payload["personal"]
        key = self.state._chain_key(conv_id, personal)
        chain = self.state.chains[key]
        follow_up = hit.payload.get("follow_up", 0)
        if hit.status == PASSED and hit.result[0] != NOT_IN_DIALOGUE:
            option = hit.option(hit.result[0])
            selected = chain["selected"] + [option["span"]]
            pool = self.mention_pool(conv_id)
            exclude = frozenset(
                normalize_mention(span_text(conv, dict_span(s)))
                for s in selected)
            follow = build_stage2_hit(conv, dict_span(personal), pool,
                                      exclude_forms=exclude,
                                      follow_up=follow_up + 1,
                                      required=hit_required(self.config))
            if len(follow["options"]) > 1:  # something besides NOT_IN_DIALOGUE
                # record the pick and keep collecting antecedents
                return [
                    {"type": "chain_update", "conv": conv_id,
                     "personal": personal, "antecedents": selected},
                    {"type": "hits_built", "stage": 2, "hits": [follow]},
                ]
            return [{"type": "chain_done", "conv": conv_id,
                     "personal": personal, "antecedents": selected,
                     "resolved": True}]
        if hit.status == PASSED:  # not in dialogue
            return [{"type": "chain_done", "conv": conv_id,
                     "personal": personal,
                     "antecedents": chain["selected"], "resolved": True}]
        # FAILED: an initial HIT failure leaves the mention unresolved; a
        # follow-up failure just stops collecting further antecedents
        if follow_up == 0:
            return [{"type": "chain_done", "conv": conv_id,
                     "personal": personal, "antecedents": [],
                     "resolved": False}]
        return [{"type": "chain_done", "conv": conv_id, "personal": personal,
                 "antecedents": chain["selected"], "resolved": True}]

    def _check_stage2_gate(self, conv_id: str) -> list[dict]:
        chains = self.state.chains_for(conv_id)
        if any(c["status"] == "open" for c in chains):
            return []
        if (conv_id, 2) in self.state.conv_stage:
            return []
        passed = all(c["status"] == "resolved" for c in chains)
        return [{"type": "conv_stage", "conv": conv_id, "stage": 2,
                 "passed": passed}]

    def _build_stage3(self, conv_id: str) -> list[dict]:
        conv = self.conversations[conv_id]
        pool = self.mention_pool(conv_id)
        hits = build_stage3_hits(
            conv, pool, self._kb, self.linker_entities(conv_id),
            stoplist=self.config.get("stoplist", DEFAULT_STOPLIST),
            required=hit_required(self.config))
        if not hits:
            return [{"type": "conv_stage", "conv": conv_id, "stage": 3,
                     "passed": True}]
        return [{"type": "hits_built", "stage": 3, "hits": hits}]

    def _after_stage3(self, hit: HitState) -> list[dict]:
        conv_id = hit.conv
        still_open = [h for h in self.state.hits.values()
                      if h.conv == conv_id and h.stage == 3
                      and h.status == OPEN]
        if still_open:
            return []
        return [{"type": "conv_stage", "conv": conv_id, "stage": 3,
                 "passed": True}]

    # -- reporting --------------------------------------------------------

    def project_stats(self) -> dict:
        closed = [h for h in self.state.hits.values() if h.status != OPEN]
        if not closed:
            raise ValueError("no completed HITs yet")
        stats: dict = {"stages": {}, "conversations": {}, "splits": {}}
        for stage in (1, 2, 3):
            stage_hits = [h for h in self.state.hits.values()
                          if h.stage == stage]
            closed_s = [h for h in stage_hits if h.status != OPEN]
            passed_s = [h for h in closed_s if h.status == PASSED]
            entry = {
                "hits": len(stage_hits),
                "closed": len(closed_s),
                "passed": len(passed_s),
                "pass_rate": (len(passed_s) / len(closed_s)
                              if closed_s else None),
                "responses": sum(len(h.responses) for h in stage_hits),
                "kappa": stage_kappa(stage_hits),
            }
            stats["stages"][str(stage)] = entry
        status_counts = Counter()
        for conv_id in self.conversations:
            status_counts[self._conversation_status(conv_id)] += 1
        stats["conversations"] = dict(sorted(status_counts.items()))
        split_counts = Counter(split_for(cid) for cid in self.conversations)
        stats["splits"] = dict(sorted(split_counts.items()))
        return stats

    def _conversation_status(self, conv_id: str) -> str:
        cs = self.state.conv_stage
        if cs.get((conv_id, 3)):
            return "complete"
        for stage in (2, 1):
            if (conv_id, stage) in cs:
                return (f"passed_stage{stage}" if cs[(conv_id, stage)]
                        else f"failed_stage{stage}")
        if any(h.conv == conv_id for h in self.state.hits.values()):
            return "stage1_open"
        return "excluded"

    # -- export -----------------------------------------------------------

    def export_gold(self, path: str | Path | None = None
                    ) -> tuple[ConversationAnnotation, ...]:
        """Gold annotations for conversations that completed stage 3."""
        annotations = []
        for conv_id in sorted(self.conversations):
            if not self.state.conv_stage.get((conv_id, 3)):
                continue
            conv = self.conversations[conv_id]
            entity_by_span: dict[MentionSpan, str] = {}
            for hit in self.state.hits.values():
                if (hit.conv != conv_id or hit.stage != 3
                        or hit.status != PASSED):
                    continue
                option = hit.option(hit.result[0])
                if "entity" in option:
                    span = dict_span(hit.payload["mention"])
                    entity_by_span[span] = option["entity"]
            personal_by_turn: dict[int, list[PersonalRecord]] = {}
            for chain in self.state.chains_for(conv_id):
                pspan = dict_span(chain["personal"])
                ants = sorted(dict_span(s) for s in chain["selected"])
                entities = sorted({entity_by_span[a] for a in ants
                                   if a in entity_by_span})
                personal_by_turn.setdefault(pspan.turn_index, []).append(
                    PersonalRecord(
                        pspan.tok_start, pspan.tok_end,
                        tuple(AntecedentRef(a.turn_index, a.tok_start,
                                            a.tok_end) for a in ants),
                        tuple(entities)))
            links_by_turn: dict[int, list[LinkRecord]] = {}
            for span, entity in sorted(entity_by_span.items()):
                links_by_turn.setdefault(span.turn_index, []).append(
                    LinkRecord(span.tok_start, span.tok_end, entity))
            turns = tuple(
                TurnAnnotation(t,
                               tuple(links_by_turn.get(t, [])),
                               tuple(personal_by_turn.get(t, [])))
                for t in conv.user_turn_indices())
            annotations.append(ConversationAnnotation(
                conv_id, turns, split=split_for(conv_id)))
        if path is not None:
            write_annotations(path, annotations)
        return tuple(annotations)


def hit_required(config: dict) -> int:
    return config.get("required_responses", DEFAULT_REQUIRED)


def stage_kappa(stage_hits: Sequence[HitState]) -> float | None:
    """Fleiss' kappa over the stage's HITs with at least two responses.

    Option identities differ between HITs, so categories are option
    positions within each HIT (special options keep their stable ids); for
    multi-select stage-1 HITs the category is the exact selection set.
    """
    rated = [h for h in stage_hits if len(h.responses) >= 2]
    if not rated:
        return None
    categories: set[str] = set()
    per_hit: list[Counter] = []
    special = {NO_MENTION, NOT_IN_DIALOGUE, NO_ENTITY}
    for hit in rated:
        counts: Counter = Counter()
        position = {o["id"]: (o["id"] if o["id"] in special else f"opt{i}")
                    for i, o in enumerate(hit.options)}
        for resp in hit.responses:
            if hit.stage == 1:
                cat = "+".join(sorted(position[oid]
                                      for oid in resp["selection"]))
            else:
                cat = position[resp["selection"][0]]
            counts[cat] += 1
            categories.add(cat)
        per_hit.append(counts)
    cats = sorted(categories)
    matrix = [[counts.get(c, 0) for c in cats] for counts in per_hit]
    return fleiss_kappa(matrix)
