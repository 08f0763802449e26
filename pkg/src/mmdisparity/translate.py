"""Machine translation of dataset versions, with an on-disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Protocol

from .data import REFERENCE_LANGUAGE, DatasetVersion, Language

logger = logging.getLogger(__name__)

CREDENTIAL_ENV = "MMDISPARITY_TRANSLATOR_TOKEN"


class Translator(Protocol):
    model_id: str

    def translate(self, text: str, source: Language, target: Language) -> str: ...


class StubTranslator:
    """Deterministic test double: prefixes the text with the target tag."""

    model_id = "stub-identity-tag"

    def __init__(self) -> None:
        self.calls = 0

    def translate(self, text: str, source: Language, target: Language) -> str:
        self.calls += 1
        return f"[{Language.parse(target).value}] {text}"


class HttpTranslator:
    """Client for a JSON translation endpoint.

    Sends ``{"text", "source", "target"}`` and expects ``{"translation"}``
    back. The bearer token is read from ``MMDISPARITY_TRANSLATOR_TOKEN``
    unless passed explicitly.
    """

    def __init__(self, endpoint: str, model_id: str = "remote", token: str | None = None,
                 timeout: float = 30.0, transport=None):
        import httpx

        self.endpoint = endpoint
        self.model_id = model_id
        token = token if token is not None else os.environ.get(CREDENTIAL_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)

    def translate(self, text: str, source: Language, target: Language) -> str:
        payload = {"text": text, "source": Language.parse(source).value,
                   "target": Language.parse(target).value, "model": self.model_id}
        resp = self._client.post(self.endpoint, json=payload)
        resp.raise_for_status()
        return resp.json()["translation"]


class TranslationCache:
    """Append-only JSON-lines key/value store of translations.

    Keys hash the translator model id, the language pair and the source text,
    so switching translation backends never reuses stale entries.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._entries[rec["key"]] = rec["value"]

    @staticmethod
    def key(text: str, source: Language, target: Language, model_id: str) -> str:
        blob = json.dumps([model_id, Language.parse(source).value, Language.parse(target).value, text],
                          ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        return self._entries.get(key)

    def put(self, key: str, value: str) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = value
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "value": value}, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries


class TranslationError(RuntimeError):
    """Some texts could not be translated; ``failed_ids`` lists them."""

    def __init__(self, failed_ids: list[str]):
        super().__init__(f"{len(failed_ids)} example(s) could not be translated: {failed_ids[:5]}")
        self.failed_ids = failed_ids


def translate_with_retry(client: Translator, text: str, source: Language, target: Language,
                         retries: int = 3, backoff: float = 0.5, sleep=time.sleep) -> str:
    for attempt in range(retries + 1):
        try:
            return client.translate(text, source, target)
        except Exception as err:  # any client failure is retried
            if attempt == retries:
                raise
            delay = backoff * 2**attempt
            logger.warning("translation failed (%s); retrying in %.2fs", err, delay)
            sleep(delay)
    raise AssertionError("unreachable")


def translate_dataset(
    src: DatasetVersion,
    target: Language | str,
    client: Translator,
    cache: TranslationCache | None = None,
    retries: int = 3,
    backoff: float = 0.5,
    workers: int = 1,
    sleep=time.sleep,
) -> DatasetVersion:
    """Translate every text of ``src`` into ``target``.

    Ids, splits, labels and image references are carried over unchanged.
    Raises :class:`TranslationError` (and returns nothing) if any text still
    fails after ``retries`` retries.
    """
    target = Language.parse(target)
    if src.language is not REFERENCE_LANGUAGE:
        raise ValueError(f"source must be {REFERENCE_LANGUAGE.value}, got {src.language.value}")
    if target is src.language:
        raise ValueError("source equals target")
    cache = cache if cache is not None else TranslationCache()

    texts: dict[str, str] = {}
    pending: dict[str, list[str]] = {}
    for ex in src.examples:
        key = cache.key(ex.text, src.language, target, client.model_id)
        hit = cache.get(key)
        if hit is not None:
            texts[ex.id] = hit
        else:
            pending.setdefault(ex.text, []).append(ex.id)

    failed: list[str] = []

    def work(text: str) -> tuple[str, str | None]:
        try:
            return text, translate_with_retry(client, text, src.language, target, retries, backoff, sleep)
        except Exception as err:
            logger.error("giving up on text after %d retries: %s", retries, err)
            return text, None

    # Unique texts are translated once; duplicates share the result.
    ordered = list(pending)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, ordered))
    else:
        results = [work(t) for t in ordered]
    for text, translated in results:
        if translated is None:
            failed.extend(pending[text])
            continue
        cache.put(cache.key(text, src.language, target, client.model_id), translated)
        for ex_id in pending[text]:
            texts[ex_id] = translated

    if failed:
        raise TranslationError(sorted(failed))
    return src.with_texts(texts, target, "machine-translated")
