"""HTTP service around the run loop: a human supplies active-learning
decisions over REST while monitoring progress. Single run, single pending
query at a time (queries are issued serially by the loop)."""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, HTTPException

from selfsup.corpus import Corpus, load_corpus, load_eval_corpus
from selfsup.evidence import evidence_to_record, load_evidences
from selfsup.loop import Decision, RunHistory, run_s4
from selfsup.proposers import FeatureQuery
from selfsup.cli import build_config

log = logging.getLogger(__name__)

MAX_EXAMPLE_SNIPPETS = 10


class ServiceError(RuntimeError):
    pass


@dataclass
class PendingQuery:
    query_id: int
    predicate: list[str]
    labels: list[str]
    entropy: float
    avg_posterior: list[float]
    examples: list[dict] = field(default_factory=list)

    def to_payload(self) -> dict:
        return {
            "query_id": self.query_id,
            "predicate": self.predicate,
            "labels": self.labels,
            "entropy": self.entropy,
            "avg_posterior": self.avg_posterior,
            "examples": self.examples,
        }


class InteractiveChannel:
    """Blocks the loop thread until a decision arrives over HTTP."""

    def __init__(self, service: "LoopService"):
        self.service = service
        self._event = threading.Event()
        self._decision: Decision | None = None

    def decide(self, query: FeatureQuery) -> Decision:
        self._event.clear()  # before publishing, or a fast decision could be lost
        self.service._publish_query(query)
        self._event.wait()
        self.service._clear_query()
        return self._decision

    def submit(self, decision: Decision) -> None:
        self._decision = decision
        self._event.set()


class LoopService:
    """Owns one run at a time plus its state snapshots for the API."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.status = "idle"
        self.run_id: str | None = None
        self._thread: threading.Thread | None = None
        self._channel: InteractiveChannel | None = None
        self._pending: PendingQuery | None = None
        self._pause = threading.Event()
        self._corpus: Corpus | None = None
        self._graph = None
        self._state = None
        self._history = RunHistory()
        self._error: str | None = None
        self._wal_path: str | None = None

    # ---- run control ----

    def start_run(self, payload: dict[str, Any]) -> str:
        with self._lock:
            if self.status in ("running", "awaiting_human", "paused"):
                raise ServiceError("a run is already active")
            train_path = payload.get("train")
            seed_path = payload.get("seed_evidence")
            if not train_path or not os.path.exists(train_path):
                raise ValueError(f"train corpus path missing or not found: {train_path!r}")
            if not seed_path or not os.path.exists(seed_path):
                raise ValueError(f"seed evidence path missing or not found: {seed_path!r}")
            corpus = load_corpus(train_path, format=payload.get("format", "jsonl"))
            seeds = load_evidences(seed_path, corpus)
            eval_corpus = None
            if payload.get("test"):
                eval_corpus = load_eval_corpus(payload["test"], corpus, format=payload.get("format", "jsonl"))
            cfg = build_config(payload)
            checkpoint_dir = payload.get("checkpoint_dir")
            if checkpoint_dir:
                os.makedirs(checkpoint_dir, exist_ok=True)
                self._wal_path = os.path.join(checkpoint_dir, "decisions.jsonl")

            self._corpus = corpus
            self._history = RunHistory()
            self._channel = InteractiveChannel(self)
            self._pause.clear()
            self._error = None
            self._graph = None
            self._state = None
            self.run_id = f"run-{len(corpus)}-{id(corpus):x}"
            self.status = "running"
            run_args = (cfg, corpus, seeds, eval_corpus, checkpoint_dir)
            self._thread = threading.Thread(target=self._worker_main, args=run_args, daemon=True)
            self._thread.start()
            return self.run_id

    def _worker_main(self, cfg, corpus, seeds, eval_corpus, checkpoint_dir):
        try:
            state, graph, _ = run_s4(
                corpus,
                seeds,
                cfg,
                channel=self._channel,
                eval_corpus=eval_corpus,
                checkpoint_dir=checkpoint_dir,
                on_phase=self._gate,
                history=self._history,
                observer=self._observe,
            )
            self._state = state
            self._graph = graph
            self.status = "done"
        except Exception as exc:  # surfaced via /status
            log.exception("run failed")
            self._error = str(exc)
            self.status = "error"

    def _observe(self, graph, state):
        self._graph = graph
        self._state = state

    def _gate(self, phase: str) -> None:
        while self._pause.is_set():
            if self.status == "running":
                self.status = "paused"
            time.sleep(0.05)
        if self.status == "paused":
            self.status = "running"

    def pause(self) -> None:
        self._pause.set()

    def resume(self) -> None:
        self._pause.clear()
        if self.status == "paused":
            self.status = "running"

    def wait(self, timeout: float | None = None) -> None:
        if self._thread is not None:
            self._thread.join(timeout)

    # ---- pending query plumbing ----

    def _publish_query(self, query: FeatureQuery) -> None:
        corpus = self._corpus
        tokens = [corpus.vocab.token(t) for t in query.predicate]
        need = set(query.predicate)
        examples = []
        for inst in corpus.instances:
            if need <= inst.token_set:
                examples.append({"instance_id": inst.id, "text": inst.raw_text, "feature": tokens})
                if len(examples) >= MAX_EXAMPLE_SNIPPETS:
                    break
        self._pending = PendingQuery(
            query_id=query.query_id,
            predicate=tokens,
            labels=list(corpus.labels),
            entropy=float(query.entropy),
            avg_posterior=[float(x) for x in query.avg_posterior],
            examples=examples,
        )
        self.status = "awaiting_human"

    def _clear_query(self) -> None:
        self._pending = None
        self.status = "running"

    def get_pending(self) -> dict | None:
        p = self._pending
        return p.to_payload() if p else None

    def post_decision(self, query_id: int, action: str, label: str | None) -> dict:
        with self._lock:
            p = self._pending
            if p is None or p.query_id != query_id:
                raise ServiceError(f"no pending query with id {query_id}")
            if action not in ("accept", "reject"):
                raise ValueError(f"action must be accept or reject, got {action!r}")
            label_id = None
            if action == "accept":
                if label not in self._corpus.labels:
                    raise ValueError(f"label {label!r} not in {self._corpus.labels}")
                label_id = self._corpus.labels.index(label)
            # durable before the loop resumes
            if self._wal_path:
                with open(self._wal_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"query_id": query_id, "action": action, "label": label}) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            # drop the pending slot now so a duplicate post conflicts even if
            # the loop thread has not woken up yet
            self._pending = None
            self._channel.submit(Decision(action == "accept", label_id))
            return {"ok": True, "query_id": query_id, "action": action}

    # ---- read-only snapshots ----

    def get_status(self) -> dict:
        return {
            "status": self.status,
            "run_id": self.run_id,
            "iterations": len(self._history.rows),
            "labels": list(self._corpus.labels) if self._corpus else [],
            "evidence_count": len(self._graph.active_evidences()) if self._graph else 0,
            "error": self._error,
        }

    def get_history(self) -> dict:
        # nan is not representable in JSON; undefined metrics come back as null
        def scrub(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            return v

        return {"rows": [{k: scrub(v) for k, v in row.items()} for row in self._history.rows]}

    def get_evidence(self) -> dict:
        if self._graph is None:
            return {"evidences": []}
        return {
            "evidences": [evidence_to_record(e, self._corpus) for e in self._graph.evidences]
        }


def create_app(service: LoopService | None = None) -> FastAPI:
    service = service or LoopService()
    app = FastAPI(title="selfsup loop service")
    app.state.service = service

    @app.get("/status")
    def status():
        return service.get_status()

    @app.get("/history")
    def history():
        return service.get_history()

    @app.get("/evidence")
    def evidence():
        return service.get_evidence()

    @app.get("/pending")
    def pending():
        return {"pending": service.get_pending()}

    @app.post("/decision")
    def decision(payload: dict):
        try:
            return service.post_decision(
                int(payload.get("query_id", -1)), payload.get("action", ""), payload.get("label")
            )
        except ServiceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))

    @app.post("/run")
    def run(payload: dict):
        try:
            run_id = service.start_run(payload)
        except ServiceError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValueError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"run_id": run_id}

    @app.post("/pause")
    def pause():
        service.pause()
        return {"ok": True}

    @app.post("/resume")
    def resume():
        service.resume()
        return {"ok": True}

    return app
