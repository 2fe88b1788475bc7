"""Versioned JSON envelope shared by tree and additive models."""

from __future__ import annotations

import json
from pathlib import Path

from .additive import AdditiveModel
from .trees import FittedTreeModel

FORMAT = "respforecast-model"
VERSION = 1


def to_json(model) -> str:
    return json.dumps({"format": FORMAT, "version": VERSION, "model": model.to_dict()}, sort_keys=True)


def from_json(text: str):
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise ValueError("not a serialised model document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')!r}")
    body = doc["model"]
    if body["kind"] == "additive":
        return AdditiveModel.from_dict(body)
    return FittedTreeModel.from_dict(body)


def save_model(model, path):
    Path(path).write_text(to_json(model) + "\n")


def load_model(path):
    return from_json(Path(path).read_text())
