"""The agent runtime: dispatch, escalation, negotiation, and routines.

An agent serves the envelope endpoint and, on the client side, runs the
escalation policy per (peer, task type): plain natural language first, a
suitability check against advertised/registered protocols once exchanges
repeat, and negotiation of a fresh protocol once they repeat further.
Negotiated or adopted protocols are pinned; both sides then try to replace
model handling with synthesized routines, after which repeated exchanges
cost nothing.

Inbound requests are routed by protocol hash: a registered routine handles
the request without any model call; a known (or fetchable) document is
handled by the model under that protocol; an unresolvable or unsupported
hash is rejected; no hash means natural language. A server also counts
natural-language communications across all peers and initiates a
negotiation with the current sender when that count hits its threshold,
resetting the count after any successful negotiation.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
from dataclasses import dataclass, field, replace

from .documents import (DocumentError, ProtocolDocument, TamperError,
                        compute_hash, extract_worked_example, parse_document,
                        save_document, verify_document)
from .envelope import (STATUS_FAILURE, STATUS_REJECTED, STATUS_SUCCESS,
                       DecodeError, RequestEnvelope, ResponseEnvelope,
                       WellknownMap, build_wellknown, decode_request,
                       decode_response, encode_request, encode_response,
                       parse_wellknown)
from .gateway import Activity, BackendError, CompletionBackend, CostLedger, Message, TokenUsage
from .registry import RegistryClient
from .routines import (RECEIVER, SENDER, Routine, RoutineError,
                       RoutineSpecError, execute_routine, load_routine,
                       routine_from_spec, save_routine)
from .transport import Network, NotFound, TransportError
from . import prompts

logger = logging.getLogger(__name__)

BOOTSTRAP_SOURCE = "builtin:conversation"

BOOTSTRAP_PD_TEXT = """Name: Multi-Round Conversation Protocol
Description: A protocol for multi-round natural-language conversations between two agents.

The request body is a JSON object with three fields:

  {
    "conversation_id": "string",
    "from": "string",
    "message": "string"
  }

- conversation_id: An identifier chosen by the conversation initiator and reused for every message of the conversation.
- from: The agent id of the message author.
- message: The natural-language message content.

The response body is a JSON object with two fields:

  {
    "conversation_id": "string",
    "message": "string"
  }
"""

BOOTSTRAP_HASH = compute_hash(BOOTSTRAP_PD_TEXT)


class ResolutionError(Exception):
    """No source produced the requested protocol document."""


class NegotiationError(Exception):
    """Negotiation ended without a finalized protocol."""


class Mode(enum.Enum):
    NATURAL_LANGUAGE = "natural_language"
    CHECK_EXISTING = "check_existing"
    NEGOTIATE = "negotiate"


@dataclass(frozen=True)
class EscalationThresholds:
    use_existing_after: int = 3
    negotiate_after: int = 5
    server_negotiate_after: int = 10

    def __post_init__(self):
        if not (0 < self.use_existing_after <= self.negotiate_after):
            raise ValueError("need 0 < use_existing_after <= negotiate_after")

    @classmethod
    def unlimited(cls) -> "EscalationThresholds":
        """Thresholds that never trigger; pins every exchange to natural
        language (the counterfactual mode)."""
        big = 10 ** 9
        return cls(big, big, big)


def decide_mode(count: int, thresholds: EscalationThresholds) -> Mode:
    """Escalation policy for one (peer, task type) pair, as a function of
    its communication count (1-based: the count includes the communication
    being decided)."""
    if count >= thresholds.negotiate_after:
        return Mode.NEGOTIATE
    if count >= thresholds.use_existing_after:
        return Mode.CHECK_EXISTING
    return Mode.NATURAL_LANGUAGE


class EscalationState:
    """Per-(peer, task_type) counters plus the server-side NL counter.

    All updates are atomic; a lost increment cannot occur under concurrent
    requests.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._counts: dict[tuple[str, str], int] = {}
        self._checked: set[tuple[str, str]] = set()
        self._failed: set[tuple[str, str]] = set()
        self._adopted: dict[tuple[str, str], tuple[str, tuple[str, ...]]] = {}
        self._server_nl = 0

    def record_interaction(self, key: tuple[str, str]) -> int:
        with self._lock:
            self._counts[key] = self._counts.get(key, 0) + 1
            return self._counts[key]

    def count(self, key: tuple[str, str]) -> int:
        with self._lock:
            return self._counts.get(key, 0)

    def was_checked(self, key) -> bool:
        with self._lock:
            return key in self._checked

    def mark_checked(self, key) -> None:
        with self._lock:
            self._checked.add(key)

    def negotiation_failed(self, key) -> bool:
        with self._lock:
            return key in self._failed

    def mark_negotiation_failed(self, key) -> None:
        with self._lock:
            self._failed.add(key)

    def adopt(self, key, digest: str, sources: tuple[str, ...]) -> None:
        with self._lock:
            self._adopted[key] = (digest, tuple(sources))

    def adopted(self, key) -> tuple[str, tuple[str, ...]] | None:
        with self._lock:
            return self._adopted.get(key)

    def unadopt(self, key) -> None:
        with self._lock:
            self._adopted.pop(key, None)

    def record_server_nl(self) -> int:
        with self._lock:
            self._server_nl += 1
            return self._server_nl

    @property
    def server_nl_count(self) -> int:
        with self._lock:
            return self._server_nl

    def reset_server_counter(self) -> None:
        with self._lock:
            self._server_nl = 0


@dataclass(frozen=True)
class ToolDescriptor:
    """A tool the agent can use: a database/mock callable, or an external
    peer reached through the envelope."""

    name: str
    kind: str = "mock"            # database | mock | external
    description: str = ""
    task_type: str = ""           # workload task type this tool serves/targets
    peer: str = ""                # external only: target agent id
    schema: dict = field(default_factory=dict)


@dataclass
class AgentConfig:
    agent_id: str
    role: str = "user"            # user | server (either may do both)
    model_id: str = "gpt-4o"
    thresholds: EscalationThresholds = field(default_factory=EscalationThresholds)
    tools: tuple[ToolDescriptor, ...] = ()
    known_peers: dict[str, str] = field(default_factory=dict)
    registry_url: str | None = None
    pd_store: str | None = None
    routine_after_uses: int = 2   # model-handled uses of a PD before the server writes a routine
    max_tool_rounds: int = 5
    negotiation_rounds: int = 10

    @classmethod
    def from_dict(cls, raw: dict) -> "AgentConfig":
        thresholds = EscalationThresholds(**raw.get("thresholds", {}))
        tools = tuple(ToolDescriptor(**t) for t in raw.get("tools", []))
        return cls(
            agent_id=raw["agent_id"],
            role=raw.get("role", "user"),
            model_id=raw.get("model_id", "gpt-4o"),
            thresholds=thresholds,
            tools=tools,
            known_peers=dict(raw.get("known_peers", {})),
            registry_url=raw.get("registry_url"),
            pd_store=raw.get("pd_store"),
            routine_after_uses=int(raw.get("routine_after_uses", 2)),
            max_tool_rounds=int(raw.get("max_tool_rounds", 5)),
            negotiation_rounds=int(raw.get("negotiation_rounds", 10)),
        )


class Agent:
    """One node: envelope endpoint, escalation state, documents, routines."""

    def __init__(self, config: AgentConfig, backend: CompletionBackend,
                 ledger: CostLedger, network: Network,
                 tool_impls: dict | None = None, task_classifier=None):
        self.config = config
        self.agent_id = config.agent_id
        self.backend = backend
        self.ledger = ledger
        self.network = network
        self.state = EscalationState()
        self._classifier = task_classifier
        self._tool_impls = dict(tool_impls or {})
        self._lock = threading.RLock()
        self._documents: dict[str, ProtocolDocument] = {}
        self._routines: dict[tuple[str, str], Routine] = {}
        self._conversations: dict[str, dict] = {}
        self._conv_counter = 0
        self._pd_model_uses: dict[str, int] = {}
        self._negotiation_locks: dict[tuple[str, str], threading.Lock] = {}

        for desc in config.tools:
            if desc.kind == "external":
                if desc.peer not in config.known_peers:
                    raise ValueError(f"external tool {desc.name!r} names unknown peer {desc.peer!r}")
                self._tool_impls.setdefault(desc.name, self._external_runner(desc))

        self.registry = RegistryClient(network, config.registry_url) if config.registry_url else None
        self._store_document(parse_document(BOOTSTRAP_PD_TEXT), persist=False)
        if config.pd_store:
            self._load_store(config.pd_store)

    # ── stores ─────────────────────────────────────────────────────────

    def _load_store(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        for fname in sorted(os.listdir(directory)):
            path = os.path.join(directory, fname)
            try:
                if fname.endswith(".pd"):
                    with open(path, "r", encoding="utf-8", newline="") as fh:
                        self._store_document(verify_document(fh.read(), fname[:-3]), persist=False)
                elif fname.endswith(".routine"):
                    routine = load_routine(path)
                    self._routines[(routine.protocol_hash, routine.side)] = routine
            except (DocumentError, RoutineSpecError, OSError) as exc:
                logger.warning("%s: skipping %s: %s", self.agent_id, fname, exc)

    def _store_document(self, doc: ProtocolDocument, persist: bool = True) -> None:
        with self._lock:
            self._documents[doc.hash] = doc
        if persist and self.config.pd_store:
            save_document(doc, self.config.pd_store)

    def _register_routine(self, routine: Routine) -> None:
        with self._lock:
            self._routines[(routine.protocol_hash, routine.side)] = routine
        if self.config.pd_store:
            save_routine(routine, self.config.pd_store)

    def get_document(self, digest: str) -> ProtocolDocument | None:
        with self._lock:
            return self._documents.get(digest)

    def get_routine(self, digest: str, side: str) -> Routine | None:
        with self._lock:
            return self._routines.get((digest, side))

    # ── tools ──────────────────────────────────────────────────────────

    def bind_tool(self, name: str, impl) -> None:
        self._tool_impls[name] = impl

    def _external_runner(self, desc: ToolDescriptor):
        def run(args: dict):
            resp = self.query(desc.peer, desc.task_type or "general", args,
                              desc.description or desc.task_type)
            if resp.status != STATUS_SUCCESS:
                return {"error": f"{desc.name}: {resp.status}: {resp.body or ''}"}
            try:
                return json.loads(resp.body)
            except ValueError:
                return {"text": resp.body}
        return run

    def _tool_runners(self) -> dict:
        return dict(self._tool_impls)

    def _supports(self, task_type: str) -> bool:
        return any(t.task_type == task_type for t in self.config.tools)

    def _classify(self, text: str) -> str | None:
        return self._classifier(text) if self._classifier else None

    # ── wire host ──────────────────────────────────────────────────────

    def base_url(self) -> str:
        return f"mem://{self.agent_id}"

    def handle_request(self, method, path, query, body, sender_id) -> tuple[int, str, str]:
        if method == "POST" and path == "/":
            try:
                env = decode_request(body)
            except DecodeError as exc:
                return 400, "text/plain", str(exc)
            return 200, "application/json", encode_response(self.dispatch(env, sender_id))
        if method == "GET" and path == "/.wellknown":
            return 200, "application/json", build_wellknown(self.wellknown())
        return 404, "text/plain", "not found"

    def wellknown(self) -> WellknownMap:
        entries: dict[str, list[str]] = {BOOTSTRAP_HASH: [BOOTSTRAP_SOURCE]}
        with self._lock:
            docs = dict(self._documents)
            routine_keys = set(self._routines)
        for digest, doc in docs.items():
            if digest == BOOTSTRAP_HASH:
                continue
            served = (digest, RECEIVER) in routine_keys
            if not served and self.config.tools:
                inferred = self._classify(f"{doc.name} {doc.description}")
                served = inferred is not None and self._supports(inferred)
            if served and self.registry:
                entries[digest] = [self.registry.pd_url(digest)]
        return WellknownMap.from_dict(entries)

    # ── inbound dispatch ───────────────────────────────────────────────

    def dispatch(self, env: RequestEnvelope, sender_id: str | None = None) -> ResponseEnvelope:
        """Route one inbound envelope; always answers with an envelope."""
        try:
            return self._dispatch_inner(env, sender_id)
        except BackendError as exc:
            return ResponseEnvelope(STATUS_FAILURE, f"backend error: {exc}")
        except Exception as exc:  # noqa: BLE001 - a request must never hang or drop
            logger.exception("%s: dispatch error", self.agent_id)
            return ResponseEnvelope(STATUS_FAILURE, f"internal error: {exc}")

    def _dispatch_inner(self, env: RequestEnvelope, sender_id: str | None) -> ResponseEnvelope:
        if env.protocol_hash == BOOTSTRAP_HASH:
            return self._handle_conversation(env, sender_id)
        if env.protocol_hash is None:
            return self._model_response(env.body, None, sender_id)

        digest = env.protocol_hash
        routine = self.get_routine(digest, RECEIVER)
        if routine is not None:
            try:
                out = execute_routine(routine, env.body, self._tool_runners())
                return ResponseEnvelope(STATUS_SUCCESS, out)
            except RoutineError as exc:
                logger.info("%s: routine for %.8s failed (%s); falling back to model",
                            self.agent_id, digest, exc)

        doc = self.get_document(digest)
        if doc is None:
            try:
                doc = self.resolve_protocol(digest, env.protocol_sources)
            except (ResolutionError, DocumentError, TransportError) as exc:
                logger.info("%s: cannot resolve %.8s (%s); rejecting", self.agent_id, digest, exc)
                return ResponseEnvelope(STATUS_REJECTED)

        if self._classifier is not None and self.config.tools:
            inferred = self._classify(f"{doc.name} {doc.description}")
            if inferred is None or not self._supports(inferred):
                return ResponseEnvelope(STATUS_REJECTED)

        return self._model_response(env.body, doc, sender_id)

    def _model_response(self, body: str, doc: ProtocolDocument | None,
                        sender_id: str | None) -> ResponseEnvelope:
        nl_count = self.state.record_server_nl()
        reply = self.handle_with_model(body, doc)
        response = ResponseEnvelope(STATUS_SUCCESS, reply)

        if doc is not None:
            with self._lock:
                self._pd_model_uses[doc.hash] = self._pd_model_uses.get(doc.hash, 0) + 1
                uses = self._pd_model_uses[doc.hash]
            if uses >= self.config.routine_after_uses and self.get_routine(doc.hash, RECEIVER) is None:
                self.synthesize_routine(doc, RECEIVER)

        if (nl_count >= self.config.thresholds.server_negotiate_after
                and sender_id and sender_id in self.config.known_peers):
            task_type = self._classify(doc.name if doc else body)
            if task_type:
                try:
                    self.negotiate(sender_id, task_type, task_type, my_side=RECEIVER)
                except NegotiationError as exc:
                    logger.info("%s: server-initiated negotiation failed: %s", self.agent_id, exc)
        return response

    def handle_with_model(self, body: str, doc: ProtocolDocument | None) -> str:
        """Model handling with a bounded tool-call loop; the reply conforms
        to the protocol when one is given."""
        conversation = [
            prompts.server_system(self.agent_id, self.config.tools,
                                  doc.raw_text if doc else None),
            Message("user", body),
        ]
        runners = self._tool_runners()
        for _ in range(self.config.max_tool_rounds):
            reply, usage = self.backend.complete(conversation)
            self._charge(usage, Activity.NATURAL_LANGUAGE)
            call = prompts.parse_tool_call(reply)
            if call is None:
                return reply
            tool, args = call
            conversation.append(Message("assistant", reply))
            if tool in runners:
                try:
                    result = runners[tool](args)
                except Exception as exc:  # noqa: BLE001 - surface tool faults to the model
                    result = {"error": f"tool {tool} failed: {exc}"}
            else:
                result = {"error": f"unknown tool: {tool}"}
            conversation.append(Message("tool", json.dumps(result)))
        raise BackendError(f"tool loop exceeded {self.config.max_tool_rounds} rounds")

    # ── conversations (negotiation transport) ──────────────────────────

    def _next_conversation_id(self) -> str:
        with self._lock:
            self._conv_counter += 1
            return f"{self.agent_id}-{self._conv_counter}"

    def _handle_conversation(self, env: RequestEnvelope, sender_id: str | None) -> ResponseEnvelope:
        try:
            payload = json.loads(env.body)
            conv_id = payload["conversation_id"]
            message = payload["message"]
            from_id = payload.get("from") or sender_id or "peer"
        except (ValueError, KeyError) as exc:
            return ResponseEnvelope(STATUS_FAILURE, f"malformed conversation body: {exc}")

        with self._lock:
            conv = self._conversations.get(conv_id)
            if conv is None:
                opening = prompts.parse_opening(message)
                task_type, task_description, initiator_is_sender = (
                    opening if opening else ("general", message[:80], True))
                my_side = RECEIVER if initiator_is_sender else SENDER
                conv = {
                    "messages": [prompts.negotiation_system(
                        self.agent_id, my_side, task_type, task_description)],
                    "peer": from_id,
                    "task_type": task_type,
                    "my_side": my_side,
                    "done": False,
                }
                self._conversations[conv_id] = conv

        if conv["done"]:
            return self._conversation_reply(conv_id, "This conversation is closed.")

        conv["messages"].append(Message("user", message))
        block = prompts.extract_finalized(message)
        if block is not None:
            self._finalize(block, conv["peer"], conv["task_type"], conv["my_side"])
            conv["done"] = True
            return self._conversation_reply(conv_id, "Acknowledged; the protocol is finalized.")

        reply, usage = self.backend.complete(conv["messages"])
        self._charge(usage, Activity.NEGOTIATION)
        conv["messages"].append(Message("assistant", reply))
        block = prompts.extract_finalized(reply)
        if block is not None:
            self._finalize(block, conv["peer"], conv["task_type"], conv["my_side"])
            conv["done"] = True
        return self._conversation_reply(conv_id, reply)

    @staticmethod
    def _conversation_reply(conv_id: str, message: str) -> ResponseEnvelope:
        return ResponseEnvelope(STATUS_SUCCESS,
                                json.dumps({"conversation_id": conv_id, "message": message}))

    # ── negotiation (initiator side) ───────────────────────────────────

    def _negotiation_lock(self, key) -> threading.Lock:
        with self._lock:
            if key not in self._negotiation_locks:
                self._negotiation_locks[key] = threading.Lock()
            return self._negotiation_locks[key]

    def negotiate(self, peer_id: str, task_type: str, task_description: str,
                  my_side: str = SENDER) -> ProtocolDocument:
        """Negotiate a protocol with *peer_id* over the conversation
        protocol; on success both sides hold byte-identical text.

        Concurrent triggers for the same (peer, task_type) collapse into one
        negotiation; late arrivals reuse its result.
        """
        key = (peer_id, task_type)
        with self._negotiation_lock(key):
            if my_side == SENDER:
                adopted = self.state.adopted(key)
                if adopted:
                    doc = self.get_document(adopted[0])
                    if doc is not None:
                        return doc
            url = self.config.known_peers.get(peer_id)
            if url is None:
                raise NegotiationError(f"unknown peer: {peer_id}")

            conv_id = self._next_conversation_id()
            conversation = [prompts.negotiation_system(
                self.agent_id, my_side, task_type, task_description)]
            pending_opening = prompts.negotiation_opening(
                task_type, task_description, initiator_is_sender=(my_side == SENDER))

            for round_no in range(self.config.negotiation_rounds):
                if round_no == 0:
                    message = pending_opening
                else:
                    try:
                        message, usage = self.backend.complete(conversation)
                    except BackendError as exc:
                        raise NegotiationError(f"backend failure: {exc}") from exc
                    self._charge(usage, Activity.NEGOTIATION)
                conversation.append(Message("assistant", message))

                body = json.dumps({"conversation_id": conv_id,
                                   "from": self.agent_id, "message": message})
                env = RequestEnvelope(BOOTSTRAP_HASH, (BOOTSTRAP_SOURCE,), body)
                resp = self._send(peer_id, env)
                if resp.status != STATUS_SUCCESS:
                    raise NegotiationError(f"peer answered {resp.status}")
                try:
                    reply = json.loads(resp.body)["message"]
                except (ValueError, KeyError) as exc:
                    raise NegotiationError(f"malformed conversation reply: {exc}") from exc
                conversation.append(Message("user", reply))

                block = prompts.extract_finalized(message) or prompts.extract_finalized(reply)
                if block is not None:
                    return self._finalize(block, peer_id, task_type, my_side)
            raise NegotiationError(
                f"no finalized protocol after {self.config.negotiation_rounds} rounds")

    def _finalize(self, block: str, peer_id: str, task_type: str, my_side: str) -> ProtocolDocument:
        doc = parse_document(block)
        self._store_document(doc)
        if self.registry is not None:
            try:
                self.registry.submit(doc.raw_text)
            except TransportError as exc:
                logger.warning("%s: registry submit failed: %s", self.agent_id, exc)
        self.state.reset_server_counter()
        if my_side == SENDER:
            if self.registry is not None:
                self.state.adopt((peer_id, task_type), doc.hash,
                                 (self.registry.pd_url(doc.hash),))
            self.synthesize_routine(doc, SENDER)
        else:
            self.synthesize_routine(doc, RECEIVER)
        return doc

    # ── suitability ────────────────────────────────────────────────────

    def gather_candidates(self, peer_id: str) -> list[tuple[str, str, str, tuple[str, ...]]]:
        """Candidate protocols from the peer's wellknown plus the reference
        registry, as (hash, name, description, sources), deterministically
        ordered."""
        found: dict[str, tuple[str, str, tuple[str, ...]]] = {}
        url = self.config.known_peers.get(peer_id)
        if url:
            try:
                wk = parse_wellknown(self.network.fetch_wellknown(url))
                for digest, sources in wk.entries:
                    if digest == BOOTSTRAP_HASH:
                        continue
                    doc = self.get_document(digest)
                    if doc is None:
                        try:
                            doc = self.resolve_protocol(digest, sources)
                        except (ResolutionError, DocumentError, TransportError):
                            continue
                    found[digest] = (doc.name, doc.description, tuple(sources))
            except (TransportError, DecodeError) as exc:
                logger.info("%s: wellknown fetch from %s failed: %s", self.agent_id, peer_id, exc)
        if self.registry is not None:
            try:
                for digest, name, description in self.registry.query(""):
                    if digest != BOOTSTRAP_HASH:
                        found.setdefault(digest, (name, description,
                                                  (self.registry.pd_url(digest),)))
            except TransportError as exc:
                logger.info("%s: registry query failed: %s", self.agent_id, exc)
        return [(digest, *info) for digest, info in sorted(found.items())]

    def check_suitability(self, task_description: str, candidates) -> str | None:
        """Ask the backend whether any candidate fits; None on no match or
        backend failure (the caller falls back to natural language)."""
        if not candidates:
            return None
        conversation = [
            prompts.suitability_system(self.agent_id),
            prompts.suitability_request(task_description,
                                        [(d, n, desc) for d, n, desc, _ in candidates]),
        ]
        try:
            reply, usage = self.backend.complete(conversation)
            self._charge(usage, Activity.SUITABILITY_CHECK)
        except BackendError as exc:
            logger.info("%s: suitability check failed: %s", self.agent_id, exc)
            return None
        answer = reply.strip().lower()
        if answer in {d for d, _, _, _ in candidates}:
            return answer
        return None

    # ── protocol resolution ────────────────────────────────────────────

    def resolve_protocol(self, digest: str, sources) -> ProtocolDocument:
        """Fetch-and-verify a document: local store, then the reference
        registry, then the given sources in order. Tampered bytes abort the
        resolution outright."""
        cached = self.get_document(digest)
        if cached is not None:
            return cached

        attempts = []
        if self.registry is not None:
            try:
                doc = self.registry.get(digest)
                self._store_document(doc)
                return doc
            except NotFound:
                attempts.append("registry: not found")
            except TransportError as exc:
                attempts.append(f"registry: {exc}")

        for url in sources:
            if url.startswith(("builtin:", "urn:")):
                continue
            try:
                text = self.network.fetch_text(url)
            except (NotFound, TransportError) as exc:
                attempts.append(f"{url}: {exc}")
                continue
            doc = verify_document(text, digest)   # TamperError propagates
            self._store_document(doc)
            return doc
        raise ResolutionError(f"could not resolve {digest}: {attempts}")

    # ── routine synthesis ──────────────────────────────────────────────

    def synthesize_routine(self, doc: ProtocolDocument, side: str) -> Routine | None:
        """Have the backend author a routine spec for *side* of *doc*,
        validate it against the document's worked example, and register it.
        Returns None when synthesis is rejected; the agent keeps using the
        model in that case."""
        existing = self.get_routine(doc.hash, side)
        if existing is not None:
            return existing
        conversation = [
            prompts.synthesis_system(self.agent_id, side, self.config.tools),
            prompts.synthesis_request(doc.raw_text, doc.hash),
        ]
        try:
            reply, usage = self.backend.complete(conversation)
            self._charge(usage, Activity.ROUTINE_IMPLEMENTATION)
        except BackendError as exc:
            logger.info("%s: synthesis backend failure: %s", self.agent_id, exc)
            return None
        try:
            routine = routine_from_spec(reply)
        except RoutineSpecError as exc:
            logger.info("%s: unusable routine spec: %s", self.agent_id, exc)
            return None
        routine = replace(routine, protocol_hash=doc.hash, side=side)

        example = extract_worked_example(doc)
        if example is None:
            logger.info("%s: %.8s has no worked example; registering unvalidated routine",
                        self.agent_id, doc.hash)
        else:
            example_input, example_output = example
            expected = example_input if side == SENDER else example_output
            try:
                produced = execute_routine(routine, json.dumps(example_input), self._tool_runners())
                if json.loads(produced) != expected:
                    logger.info("%s: routine failed its example (%s side); rejected",
                                self.agent_id, side)
                    return None
            except (RoutineError, ValueError) as exc:
                logger.info("%s: routine example execution failed: %s", self.agent_id, exc)
                return None
        self._register_routine(routine)
        return routine

    # ── outbound queries ───────────────────────────────────────────────

    def query(self, peer_id: str, task_type: str, payload: dict,
              task_description: str = "") -> ResponseEnvelope:
        return self.send_task(peer_id, task_type, payload, task_description)[0]

    def send_task(self, peer_id: str, task_type: str, payload: dict,
                  task_description: str = "") -> tuple[ResponseEnvelope, str]:
        """Run the escalation policy and send one query; returns the
        response plus the path taken ("protocol", "negotiate",
        "check_existing" or "natural_language")."""
        try:
            return self._send_task_inner(peer_id, task_type, payload,
                                         task_description or task_type)
        except BackendError as exc:
            return (ResponseEnvelope(STATUS_FAILURE, f"backend error: {exc}"),
                    "natural_language")

    def _send_task_inner(self, peer_id: str, task_type: str, payload: dict,
                         task_description: str) -> tuple[ResponseEnvelope, str]:
        key = (peer_id, task_type)

        adopted = self.state.adopted(key)
        if adopted:
            return self._query_via_protocol(peer_id, key, adopted, task_type,
                                            task_description, payload), "protocol"

        count = self.state.record_interaction(key)
        mode = decide_mode(count, self.config.thresholds)

        if mode is Mode.NEGOTIATE and not self.state.negotiation_failed(key):
            try:
                self.negotiate(peer_id, task_type, task_description, my_side=SENDER)
            except NegotiationError as exc:
                logger.info("%s: negotiation with %s failed: %s", self.agent_id, peer_id, exc)
                self.state.mark_negotiation_failed(key)
            adopted = self.state.adopted(key)
            if adopted:
                return self._query_via_protocol(peer_id, key, adopted, task_type,
                                                task_description, payload), "negotiate"
        elif mode is Mode.CHECK_EXISTING:
            self.state.mark_checked(key)
            candidates = self.gather_candidates(peer_id)
            digest = self.check_suitability(task_description, candidates)
            if digest is not None:
                sources = next(s for d, _, _, s in candidates if d == digest)
                try:
                    doc = self.resolve_protocol(digest, sources)
                    self.state.adopt(key, digest, sources)
                    self.synthesize_routine(doc, SENDER)
                    adopted = self.state.adopted(key)
                    return self._query_via_protocol(peer_id, key, adopted, task_type,
                                                    task_description, payload), "check_existing"
                except (ResolutionError, DocumentError, TransportError) as exc:
                    logger.info("%s: adopting %.8s failed: %s", self.agent_id, digest, exc)

        body = self.compose_body(task_type, task_description, payload, None)
        response = self._send(peer_id, RequestEnvelope(None, (), body))
        if response.status == STATUS_SUCCESS and response.body:
            # The requester owes structured output, so a language reply
            # costs one more model call to extract the fields.
            self.parse_reply(task_type, task_description, response.body)
        return response, "natural_language"

    def _query_via_protocol(self, peer_id, key, adopted, task_type,
                            task_description, payload) -> ResponseEnvelope:
        digest, sources = adopted
        doc = self.get_document(digest)
        routine = self.get_routine(digest, SENDER)
        if routine is not None:
            try:
                body = execute_routine(routine, json.dumps(payload), self._tool_runners())
            except RoutineError as exc:
                logger.info("%s: sender routine failed (%s); composing with model",
                            self.agent_id, exc)
                body = self.compose_body(task_type, task_description, payload, doc)
        else:
            body = self.compose_body(task_type, task_description, payload, doc)

        resp = self._send(peer_id, RequestEnvelope(digest, sources, body))
        if resp.status == STATUS_REJECTED:
            # Advertisement is advisory; the peer may refuse a protocol.
            logger.info("%s: peer %s rejected %.8s; dropping adoption", self.agent_id, peer_id, digest)
            self.state.unadopt(key)
            body = self.compose_body(task_type, task_description, payload, None)
            resp = self._send(peer_id, RequestEnvelope(None, (), body))
        return resp

    def compose_body(self, task_type: str, task_description: str, payload: dict,
                     doc: ProtocolDocument | None) -> str:
        conversation = [
            prompts.compose_system(self.agent_id, task_type, task_description,
                                   doc.raw_text if doc else None),
            prompts.compose_request(payload),
        ]
        reply, usage = self.backend.complete(conversation)
        self._charge(usage, Activity.NATURAL_LANGUAGE)
        return reply

    def parse_reply(self, task_type: str, task_description: str, reply: str) -> dict | None:
        """Turn a natural-language reply into the structured fields the task
        expects. Protocol-mode replies decode as JSON directly and never need
        this; that asymmetry is most of the routine savings."""
        try:
            return json.loads(reply)
        except ValueError:
            pass
        conversation = [
            prompts.parse_system(self.agent_id, task_type, task_description),
            Message("user", reply),
        ]
        try:
            parsed, usage = self.backend.complete(conversation)
            self._charge(usage, Activity.NATURAL_LANGUAGE)
            return json.loads(parsed)
        except (BackendError, ValueError) as exc:
            logger.info("%s: could not parse reply (%s)", self.agent_id, exc)
            return None

    def _send(self, peer_id: str, env: RequestEnvelope) -> ResponseEnvelope:
        url = self.config.known_peers.get(peer_id)
        if url is None:
            return ResponseEnvelope(STATUS_FAILURE, f"unknown peer: {peer_id}")
        try:
            text = self.network.post_envelope(url, encode_request(env), sender_id=self.agent_id)
            return decode_response(text)
        except (TransportError, DecodeError) as exc:
            return ResponseEnvelope(STATUS_FAILURE, f"transport error: {exc}")

    def _charge(self, usage: TokenUsage, activity: Activity) -> None:
        self.ledger.charge(self.config.model_id, usage, activity)
