"""One JSON file per document, atomic renames, per-document write locks.

Records carry a version counter for optimistic concurrency and keep their
full edit history. Statistics are recomputed from disk on every request so
they can never go stale.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from pathlib import Path


class ConflictError(RuntimeError):
    """Optimistic-concurrency failure: the record changed under the writer."""


class UnknownDocumentError(KeyError):
    pass


def _atomic_write_json(path: Path, payload: dict) -> None:
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp",
                                    dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, indent=1))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def new_record(bio: list[str], provenance: str) -> dict:
    return {"bio": list(bio), "provenance": provenance, "version": 1, "history": []}


class DocumentStore:
    """Annotation records for every (document, target) pair."""

    def __init__(self, store_dir: str | Path):
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self._locks: dict[int, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, doc_id: int) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(doc_id, threading.Lock())

    def _path(self, doc_id: int) -> Path:
        return self.store_dir / f"doc-{doc_id:05d}.json"

    def exists(self, doc_id: int) -> bool:
        return self._path(doc_id).exists()

    def read(self, doc_id: int) -> dict:
        path = self._path(doc_id)
        if not path.exists():
            raise UnknownDocumentError(f"document {doc_id} not in store")
        return json.loads(path.read_text(encoding="utf-8"))

    def seed(self, doc_id: int, records: list[dict]) -> None:
        """Create the document file if absent; existing records are kept."""
        with self._lock(doc_id):
            if not self._path(doc_id).exists():
                _atomic_write_json(self._path(doc_id),
                                   {"doc": doc_id, "targets": records})

    def save_scope(self, doc_id: int, target_index: int, bio: list[str],
                   expected_version: int | None = None) -> dict:
        """Persist a human edit; returns the updated record."""
        with self._lock(doc_id):
            payload = self.read(doc_id)
            targets = payload["targets"]
            if not 0 <= target_index < len(targets):
                raise UnknownDocumentError(
                    f"document {doc_id} has no target {target_index}")
            record = targets[target_index]
            if expected_version is not None and record["version"] != expected_version:
                raise ConflictError(
                    f"version {expected_version} is stale, record is at "
                    f"{record['version']}")
            record["history"].append({
                "at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
                "bio": record["bio"],
                "provenance": record["provenance"],
            })
            record["bio"] = list(bio)
            record["provenance"] = "human"
            record["version"] += 1
            _atomic_write_json(self._path(doc_id), payload)
            return record

    def document_ids(self) -> list[int]:
        return sorted(int(p.stem.split("-")[1]) for p in self.store_dir.glob("doc-*.json"))

    def stats(self) -> dict:
        """Provenance counts recomputed from disk."""
        total = human = auto = auto_weak = 0
        for doc_id in self.document_ids():
            for record in self.read(doc_id)["targets"]:
                total += 1
                if record["provenance"] == "human":
                    human += 1
                elif record["provenance"] == "auto-weak":
                    auto_weak += 1
                else:
                    auto += 1
        return {
            "total": total,
            "auto": auto,
            "auto_weak": auto_weak,
            "human": human,
            "adjustment_ratio": (human / total) if total else 0.0,
        }
