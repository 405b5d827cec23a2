"""HTTP service for the semi-automated scope annotation workflow.

Documents are dataset sentences addressed by index. Auto proposals are
seeded into the store on startup; humans refine them through the API and
every save is validated so an export always reloads cleanly.
"""

from __future__ import annotations

import copy
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..corpus import (AnnotatedSentence, load_dataset, sentence_to_record,
                      serialize_ptb, validate_bio)
from ..scope import Lexicon, bio_to_spans, pre_annotate
from .store import ConflictError, DocumentStore, new_record


class ScopeBody(BaseModel):
    bio: list[str]


def _scope_violation(bio: list[str], sentence: AnnotatedSentence,
                     target_index: int) -> str | None:
    target = sentence.targets[target_index]
    problem = validate_bio(bio, len(sentence.tokens), target.span)
    if problem:
        return problem
    if len(bio_to_spans(bio)) != 1:
        return "scope must be a single contiguous span"
    return None


def create_app(dataset_path: str | Path | None = None,
               store_dir: str | Path = "annotation-store",
               sentences: list[AnnotatedSentence] | None = None,
               lexicon: Lexicon | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    if sentences is None:
        if dataset_path is None:
            raise ValueError("create_app needs a dataset path or preloaded sentences")
        sentences = load_dataset(dataset_path)
    lexicon = lexicon if lexicon is not None else Lexicon(frozenset())
    store = DocumentStore(store_dir)

    for doc_id, sentence in enumerate(sentences):
        records = []
        for target in sentence.targets:
            if target.scope_bio is not None:
                provenance = target.scope_provenance or "auto"
                records.append(new_record(target.scope_bio, provenance))
            else:
                proposal = pre_annotate(sentence, target, lexicon)
                records.append(new_record(proposal.bio, proposal.provenance))
        store.seed(doc_id, records)

    app = FastAPI(title="scope annotation service")

    def get_sentence(doc_id: int) -> AnnotatedSentence:
        if not 0 <= doc_id < len(sentences):
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id}")
        return sentences[doc_id]

    @app.get("/api/docs")
    def list_docs() -> list[dict]:
        out = []
        for doc_id, sentence in enumerate(sentences):
            records = store.read(doc_id)["targets"]
            human = sum(r["provenance"] == "human" for r in records)
            out.append({
                "id": doc_id,
                "tokens": sentence.tokens,
                "targets": len(records),
                "human": human,
                "done": human == len(records),
            })
        return out

    @app.get("/api/docs/{doc_id}")
    def get_doc(doc_id: int) -> dict:
        sentence = get_sentence(doc_id)
        records = store.read(doc_id)["targets"]
        return {
            "id": doc_id,
            "tokens": sentence.tokens,
            "ptb": serialize_ptb(sentence.tree),
            "targets": [{
                "span": list(target.span),
                "polarity": target.polarity,
                "record": record,
            } for target, record in zip(sentence.targets, records)],
        }

    @app.post("/api/docs/{doc_id}/targets/{target_index}/scope")
    def save_scope(doc_id: int, target_index: int, body: ScopeBody,
                   if_match: str | None = Header(default=None)) -> dict:
        sentence = get_sentence(doc_id)
        if not 0 <= target_index < len(sentence.targets):
            raise HTTPException(status_code=404,
                                detail=f"document {doc_id} has no target {target_index}")
        problem = _scope_violation(body.bio, sentence, target_index)
        if problem:
            raise HTTPException(status_code=422, detail=problem)
        expected = None
        if if_match is not None:
            try:
                expected = int(if_match.strip('"'))
            except ValueError:
                raise HTTPException(status_code=422,
                                    detail=f"If-Match {if_match!r} is not a version")
        try:
            record = store.save_scope(doc_id, target_index, body.bio, expected)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return record

    @app.post("/api/docs/{doc_id}/targets/{target_index}/pre-annotate")
    def repropose(doc_id: int, target_index: int) -> dict:
        sentence = get_sentence(doc_id)
        if not 0 <= target_index < len(sentence.targets):
            raise HTTPException(status_code=404,
                                detail=f"document {doc_id} has no target {target_index}")
        proposal = pre_annotate(sentence, sentence.targets[target_index], lexicon)
        return {
            "bio": proposal.bio,
            "provenance": proposal.provenance,
            "scope_span": [proposal.scope.start, proposal.scope.stop],
            "opinion_spans": [list(s) for s in proposal.opinion_spans],
        }

    @app.get("/api/export")
    def export() -> JSONResponse:
        records = []
        for doc_id, sentence in enumerate(sentences):
            stored = store.read(doc_id)["targets"]
            merged = copy.deepcopy(sentence)
            for target, record in zip(merged.targets, stored):
                target.scope_bio = list(record["bio"])
                target.scope_provenance = record["provenance"]
            records.append(sentence_to_record(merged))
        return JSONResponse(records)

    @app.get("/api/stats")
    def stats() -> dict:
        return store.stats()

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
