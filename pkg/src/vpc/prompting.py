"""Versioned prompt templates with deterministic variable substitution.

Three builtins ship with the package: the two video questions (show
recognition and fine-grained description) and the correction instruction.
Each template's body is hash-stamped so runs can be audited: provenance
records carry the content hash, and a changed body always changes the hash.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

from .errors import ParseError, VpcError

BUILTIN_IDS = ("p1_show_recognition", "p2_fine_grained_description", "t_correction")

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class UnknownTemplateError(VpcError):
    def __init__(self, template_id: str):
        super().__init__(f"unknown template {template_id!r}")
        self.template_id = template_id


class MissingVariableError(VpcError):
    def __init__(self, name: str):
        super().__init__(f"template variable {name!r} was not provided")
        self.name = name


class UnknownVariableError(VpcError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} does not appear in the template")
        self.name = name


class MalformedTemplateError(ParseError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    version: str
    body: str
    required_vars: frozenset[str] = field(init=False)
    content_hash: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "required_vars", frozenset(_PLACEHOLDER.findall(self.body))
        )
        object.__setattr__(
            self,
            "content_hash",
            hashlib.sha256(self.body.encode("utf-8")).hexdigest(),
        )


def render(tpl: PromptTemplate, vars: Mapping[str, str]) -> str:
    """Substitute every ``{{name}}`` placeholder in one pass.

    Strict: missing variables and extra variables are both errors, so a
    misconfigured call site fails loudly instead of producing a silently
    wrong prompt. Values are not re-scanned for placeholders.
    """
    for name in sorted(tpl.required_vars):
        if name not in vars:
            raise MissingVariableError(name)
    for name in sorted(vars):
        if name not in tpl.required_vars:
            raise UnknownVariableError(name)
    return _PLACEHOLDER.sub(lambda mo: vars[mo.group(1)], tpl.body)


def parse_template(text: str, fallback_id: str = "") -> PromptTemplate:
    """Parse the on-disk template format: a small ``key: value`` header,
    a ``---`` separator line, then the body verbatim."""
    head, sep, body = text.partition("\n---\n")
    if not sep:
        raise MalformedTemplateError("template is missing the '---' header separator")
    meta = {}
    for line in head.splitlines():
        if not line.strip():
            continue
        key, colon, value = line.partition(":")
        if not colon:
            raise MalformedTemplateError(f"bad header line {line!r}")
        meta[key.strip()] = value.strip()
    tpl_id = meta.get("id", fallback_id)
    if not tpl_id:
        raise MalformedTemplateError("template header has no 'id'")
    return PromptTemplate(id=tpl_id, version=meta.get("version", "1"), body=body)


def serialize_template(tpl: PromptTemplate) -> str:
    return f"id: {tpl.id}\nversion: {tpl.version}\n---\n{tpl.body}"


def save_template(tpl: PromptTemplate, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize_template(tpl), encoding="utf-8")


def load_template(path: Union[str, Path]) -> PromptTemplate:
    path = Path(path)
    return parse_template(path.read_text(encoding="utf-8"), fallback_id=path.stem)


def load_builtin(template_id: str) -> PromptTemplate:
    """Load one of the shipped default templates."""
    if template_id not in BUILTIN_IDS:
        raise UnknownTemplateError(template_id)
    text = (
        resources.files("vpc").joinpath(f"templates/{template_id}.txt").read_text("utf-8")
    )
    return parse_template(text, fallback_id=template_id)


def load_prompt_set(prompt_dir: Union[str, Path, None] = None) -> dict[str, PromptTemplate]:
    """The three pipeline templates, with per-file overrides from
    ``prompt_dir`` (files named ``<id>.txt``) taking precedence."""
    templates = {tid: load_builtin(tid) for tid in BUILTIN_IDS}
    if prompt_dir is not None:
        prompt_dir = Path(prompt_dir)
        for tid in BUILTIN_IDS:
            override = prompt_dir / f"{tid}.txt"
            if override.exists():
                templates[tid] = load_template(override)
    return templates
