"""LearnerPort: the contract the harness trains and scores through.

Two implementations: BuiltinLearnerPort wraps the in-process multi-scale
logistic segmenter; ExternalLearnerPort speaks the line-delimited JSON
protocol to an adapter subprocess (one JSON object per line over the
adapter's stdin/stdout, tensors as FlatTensorFile paths).
"""

from __future__ import annotations

import json
import shlex
import subprocess
from pathlib import Path
from typing import Protocol

import numpy as np

from .data import DatasetManifest, read_patch
from .learner import LearnerConfig, MultiScaleLogisticSegmenter, extract_features
from .tensorfile import read_tensor


class LearnerError(RuntimeError):
    """Learner or adapter failure; the harness maps this to exit code 3."""


class LearnerPort(Protocol):
    """train / predict / embed against ids of a fixed id->file universe."""

    @property
    def embedding_dim(self) -> int: ...

    def train(self, labeled_ids, seed: int) -> None: ...

    def predict_proba(self, ids) -> np.ndarray: ...  # (n, H, W)

    def embed(self, ids) -> np.ndarray: ...  # (n, embedding_dim)

    def close(self) -> None: ...


class BuiltinLearnerPort:
    """In-process port over a combined pool+test manifest.

    Patches and their (training-independent) features are cached by id, so
    repeated repetitions share the extraction work.
    """

    def __init__(self, manifest: DatasetManifest, config: LearnerConfig):
        self._manifest = manifest
        self._config = config
        self._patches: dict[int, object] = {}
        self._features: dict[int, np.ndarray] = {}
        self._model: MultiScaleLogisticSegmenter | None = None
        first = manifest.entries[0]
        patch = self._patch(first.id)
        self._channels = patch.image.shape[0]
        self._shape = patch.mask.shape

    @property
    def embedding_dim(self) -> int:
        return MultiScaleLogisticSegmenter.from_config(self._config).embedding_dim(self._channels)

    def _patch(self, id: int):
        if id not in self._patches:
            patch = read_patch(self._manifest, id)
            self._patches[id] = patch
        return self._patches[id]

    def _feats(self, id: int) -> np.ndarray:
        if id not in self._features:
            self._features[id] = extract_features(self._patch(id), self._config.scales)
        return self._features[id]

    def train(self, labeled_ids, seed: int) -> None:
        ids = list(labeled_ids)
        if not ids:
            raise LearnerError("empty training set")
        patches = [self._patch(i) for i in ids]
        feats = [self._feats(i) for i in ids]
        model = MultiScaleLogisticSegmenter.from_config(self._config)
        model.seed = seed
        try:
            model.fit(patches, features=feats)
        except FloatingPointError as exc:
            raise LearnerError(str(exc)) from exc
        self._model = model

    def predict_proba(self, ids) -> np.ndarray:
        if self._model is None:
            raise LearnerError("model not trained")
        maps = [self._model.predict_proba(self._patch(i), self._feats(i)) for i in ids]
        return np.stack(maps, axis=0)

    def embed(self, ids) -> np.ndarray:
        model = self._model or MultiScaleLogisticSegmenter.from_config(self._config)
        rows = [model.embed(self._patch(i), self._feats(i)) for i in ids]
        return np.asarray(rows, dtype=np.float64)

    def close(self) -> None:
        self._patches.clear()
        self._features.clear()


class ExternalLearnerPort:
    """Adapter-subprocess port. Every request gets exactly one response line;
    a recorded transcript makes runs auditable and comparable."""

    def __init__(self, command: str, manifest_path: str | Path, workdir: str | Path):
        self._command = command
        self._manifest_path = str(Path(manifest_path).resolve())
        self._workdir = Path(workdir)
        self._workdir.mkdir(parents=True, exist_ok=True)
        self.transcript: list[dict] = []
        self._predict_serial = 0
        self._trained = False
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise LearnerError(f"cannot start adapter {command!r}: {exc}") from exc
        hello = self._request({"op": "hello"})
        try:
            self._embedding_dim = int(hello["embedding_dim"])
            self._name = str(hello.get("name", "adapter"))
        except (KeyError, TypeError, ValueError) as exc:
            raise LearnerError(f"malformed hello response: {hello!r}") from exc

    @property
    def embedding_dim(self) -> int:
        return self._embedding_dim

    @property
    def name(self) -> str:
        return self._name

    def _request(self, message: dict) -> dict:
        if self._proc.poll() is not None:
            raise LearnerError("adapter process exited unexpectedly")
        line = json.dumps(message, sort_keys=True)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            reply_line = self._proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise LearnerError(f"adapter pipe failure: {exc}") from exc
        if not reply_line:
            raise LearnerError("adapter closed its stdout without responding")
        try:
            reply = json.loads(reply_line)
        except json.JSONDecodeError as exc:
            raise LearnerError(f"adapter sent non-JSON line: {reply_line!r}") from exc
        self.transcript.append(
            {"request": self._normalize(message), "response": self._normalize(reply)}
        )
        if not reply.get("ok", False):
            raise LearnerError(f"adapter error for op {message.get('op')}: {reply.get('error')}")
        return reply

    def _normalize(self, message: dict) -> dict:
        """Copy for the transcript with run-local paths made run-relative,
        so two runs over the same inputs record identical transcripts."""
        prefix = str(self._workdir.resolve())
        out = {}
        for key, value in message.items():
            if isinstance(value, str) and value.startswith(prefix):
                out[key] = "$RUN" + value[len(prefix):]
            else:
                out[key] = value
        return out

    def train(self, labeled_ids, seed: int) -> None:
        self._request(
            {
                "op": "train",
                "labeled_ids": [int(i) for i in labeled_ids],
                "manifest_path": self._manifest_path,
                "seed": int(seed),
            }
        )
        self._trained = True

    def _predict(self, ids) -> tuple[np.ndarray, np.ndarray]:
        out_dir = self._workdir / f"predict{self._predict_serial:06d}"
        self._predict_serial += 1
        out_dir.mkdir(parents=True, exist_ok=True)
        reply = self._request(
            {"op": "predict", "ids": [int(i) for i in ids], "out_dir": str(out_dir)}
        )
        try:
            proba = read_tensor(reply["proba"])
            emb = read_tensor(reply["embeddings"])
        except (KeyError, ValueError, OSError) as exc:
            raise LearnerError(f"bad predict payload: {exc}") from exc
        n = len(list(ids))
        if proba.ndim != 3 or proba.shape[0] != n:
            raise LearnerError(f"proba tensor has shape {proba.shape}, expected [{n}, H, W]")
        if emb.shape != (n, self._embedding_dim):
            raise LearnerError(
                f"embeddings tensor has shape {emb.shape}, expected [{n}, {self._embedding_dim}]"
            )
        return proba.astype(np.float64), emb.astype(np.float64)

    def predict_proba(self, ids) -> np.ndarray:
        return self._predict(ids)[0]

    def embed(self, ids) -> np.ndarray:
        return self._predict(ids)[1]

    def save_transcript(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for item in self.transcript:
                fh.write(json.dumps(item, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._request({"op": "shutdown"})
            except LearnerError:
                pass
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=10)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
