"""Scenario loading and validation against the published JSON schema.

Errors are raised as :class:`ConfigurationError` whose message names the
offending JSON path and the line of the scenario file it sits on.
"""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources
from json import scanner
from json.decoder import JSONArray, JSONObject

import jsonschema

from ..errors import ConfigurationError


@lru_cache(maxsize=1)
def scenario_schema() -> dict:
    """The scenario schema as a dict (also shipped as ``scenario.schema.json``)."""
    text = resources.files(__package__).joinpath("scenario.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


class _Spanned(dict):
    """dict remembering the character span it was decoded from."""

    span = (0, 0)


class _SpannedList(list):
    span = (0, 0)


class _SpanDecoder(json.JSONDecoder):
    """Decoder that records the source span of every object and array.

    The pure-Python scanner is used so that the container hooks are called.
    """

    def __init__(self):
        super().__init__()

        def parse_object(s_and_end, *args):
            start = s_and_end[1] - 1
            value, end = JSONObject(s_and_end, *args)
            out = _Spanned(value)
            out.span = (start, end)
            return out, end

        def parse_array(s_and_end, scan_once):
            start = s_and_end[1] - 1
            value, end = JSONArray(s_and_end, scan_once)
            out = _SpannedList(value)
            out.span = (start, end)
            return out, end

        self.parse_object = parse_object
        self.parse_array = parse_array
        self.scan_once = scanner.py_make_scanner(self)


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _locate(text: str, doc, path) -> int:
    """Best-effort line number of the JSON element at ``path``."""
    node = doc
    line = 1
    for key in path:
        span = getattr(node, "span", None)
        if span is not None:
            line = _line_of(text, span[0])
        if isinstance(node, dict) and isinstance(key, str) and key in node:
            if span is not None:
                m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, span[0], span[1])
                if m:
                    line = _line_of(text, m.start())
            node = node[key]
        elif isinstance(node, list) and isinstance(key, int) and 0 <= key < len(node):
            node = node[key]
            inner = getattr(node, "span", None)
            if inner is not None:
                line = _line_of(text, inner[0])
        else:
            break
    else:
        span = getattr(node, "span", None)
        if span is not None:
            line = _line_of(text, span[0])
    return line


def _path_str(path) -> str:
    out = "$"
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def parse_scenario(text: str, source: str = "<scenario>") -> dict:
    """Parse and validate scenario text; returns plain nested dicts."""
    try:
        doc = _SpanDecoder().decode(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(scenario_schema())
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is not None:
        path = list(error.absolute_path)
        line = _locate(text, doc, path)
        raise ConfigurationError(f"{source}:{line}: {_path_str(path)}: {error.message}")
    return json.loads(text)


def load_scenario(path) -> dict:
    """Read, parse and validate a scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, str(path))
