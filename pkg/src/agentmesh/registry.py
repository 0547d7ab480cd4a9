"""Protocol database: hash-addressed document storage with peer sharing.

A registry stores protocol documents under their digests, answers metadata
queries, and periodically pushes its documents to peer registries (the
simulator triggers a share round every ``share_period`` executed queries).
Content addressing makes replication conflict-free: re-submitting identical
bytes is a no-op, and receivers re-derive the digest themselves, so a
tampered copy can never be stored under the original hash.

Wire surface (implementation-defined, documented in the README):
  POST /pd          raw document text -> digest
  GET  /pd/<hash>   raw document text, 404 when unknown
  GET  /pd?query=kw JSON list of {hash, name, description}
  POST /share       push all documents to peers -> count transmitted
"""

from __future__ import annotations

import glob
import json
import logging
import os
import threading

from .documents import (DocumentError, ProtocolDocument, document_filename,
                        is_valid_hash, parse_document, verify_document)
from .transport import Network, TransportError

logger = logging.getLogger(__name__)


class RegistryIntegrityError(Exception):
    """A stored file does not hash to its filename."""


class RegistryStore:
    """One protocol database; optionally disk-backed, optionally networked."""

    def __init__(self, registry_id: str, network: Network | None = None,
                 peers: tuple[str, ...] = (), root: str | None = None,
                 share_period: int = 10):
        self.registry_id = registry_id
        self.network = network
        self.peers = tuple(peers)
        self.root = root
        self.share_period = share_period
        self._documents: dict[str, ProtocolDocument] = {}
        self._lock = threading.Lock()
        if root:
            self._load()

    def _load(self) -> None:
        os.makedirs(self.root, exist_ok=True)
        for path in sorted(glob.glob(os.path.join(self.root, "*.pd"))):
            digest = os.path.basename(path)[:-3]
            with open(path, "r", encoding="utf-8", newline="") as fh:
                text = fh.read()
            try:
                doc = verify_document(text, digest)
            except DocumentError as exc:
                raise RegistryIntegrityError(f"{path}: {exc}") from exc
            self._documents[doc.hash] = doc

    # -- operations -----------------------------------------------------

    def submit(self, text: str) -> str:
        """Store *text* under its computed digest; idempotent."""
        doc = parse_document(text)
        digest = doc.hash
        with self._lock:
            if digest not in self._documents:
                self._documents[digest] = doc
                if self.root:
                    with open(os.path.join(self.root, document_filename(digest)),
                              "w", encoding="utf-8", newline="") as fh:
                        fh.write(text)
        return digest

    def get(self, digest: str) -> ProtocolDocument | None:
        with self._lock:
            return self._documents.get(digest.lower())

    def query(self, keyword: str = "") -> list[tuple[str, str, str]]:
        """Entries whose metadata name/description contain *keyword*
        (case-insensitive); empty keyword lists everything."""
        needle = keyword.lower()
        out = []
        with self._lock:
            docs = sorted(self._documents.items())
        for digest, doc in docs:
            haystack = f"{doc.name} {doc.description}".lower()
            if not needle or needle in haystack:
                out.append((digest, doc.name, doc.description))
        return out

    def __len__(self) -> int:
        with self._lock:
            return len(self._documents)

    def hashes(self) -> set[str]:
        with self._lock:
            return set(self._documents)

    def share_with_peers(self) -> int:
        """Push every stored document to each peer; returns the number of
        documents transmitted. Unreachable peers are skipped."""
        if self.network is None:
            return 0
        with self._lock:
            snapshot = [doc.raw_text for _, doc in sorted(self._documents.items())]
        transmitted = 0
        for peer in self.peers:
            for text in snapshot:
                try:
                    self.network.post_text(peer.rstrip("/") + "/pd", text)
                    transmitted += 1
                except TransportError as exc:
                    logger.warning("registry %s: peer %s unreachable (%s)",
                                   self.registry_id, peer, exc)
                    break
        return transmitted

    # -- wire host --------------------------------------------------------

    def handle_request(self, method: str, path: str, query: dict[str, str],
                       body: str, sender_id: str | None) -> tuple[int, str, str]:
        if method == "POST" and path == "/pd":
            try:
                return 200, "text/plain", self.submit(body)
            except DocumentError as exc:
                return 400, "text/plain", str(exc)
        if method == "GET" and path.startswith("/pd/"):
            digest = path[len("/pd/"):]
            if not is_valid_hash(digest):
                return 400, "text/plain", f"bad digest: {digest}"
            doc = self.get(digest)
            if doc is None:
                return 404, "text/plain", "not found"
            return 200, "text/plain", doc.raw_text
        if method == "GET" and path == "/pd":
            rows = [{"hash": h, "name": n, "description": d}
                    for h, n, d in self.query(query.get("query", ""))]
            return 200, "application/json", json.dumps(rows)
        if method == "POST" and path == "/share":
            return 200, "text/plain", str(self.share_with_peers())
        return 404, "text/plain", "not found"


class RegistryClient:
    """Talk to a registry over the network (mem:// or http://)."""

    def __init__(self, network: Network, base_url: str):
        self.network = network
        self.base_url = base_url.rstrip("/")

    def pd_url(self, digest: str) -> str:
        return f"{self.base_url}/pd/{digest}"

    def submit(self, text: str) -> str:
        return self.network.post_text(f"{self.base_url}/pd", text)

    def get(self, digest: str) -> ProtocolDocument:
        text = self.network.fetch_text(self.pd_url(digest))
        return verify_document(text, digest)

    def query(self, keyword: str = "") -> list[tuple[str, str, str]]:
        url = f"{self.base_url}/pd"
        if keyword:
            url += f"?query={keyword}"
        rows = json.loads(self.network.fetch_text(url))
        return [(row["hash"], row["name"], row["description"]) for row in rows]

    def share(self) -> int:
        return int(self.network.post_text(f"{self.base_url}/share", ""))
