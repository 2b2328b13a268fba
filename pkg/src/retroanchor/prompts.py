"""Prompt rendering for the disconnection and reactant-prediction stages.

Templates ship as text assets pinned by digest.  Rendering substitutes
only the declared placeholders; every other angle-bracket token in a
template is illustrative output-format text and is left untouched.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from retroanchor.chem import AtomMapSet, Molecule, canonical_smiles, position_tokens
from retroanchor.datasets import ExampleLibrary, Ontology

TEMPLATE_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "position": ("<reaction_ontology>", "<canonicalized_product>"),
    "transition": (
        "<REACTION_POSITION>",
        "<REACTION_NAME>",
        "<PRODUCT_SMILES>",
        "<TRAIN_REACTION_EXAMPLES>",
    ),
    "transition_short": (
        "<REACTION_POSITION>",
        "<REACTION_NAME>",
        "<PRODUCT_SMILES>",
        "<TRAIN_REACTION_EXAMPLES>",
    ),
}

# sha256 of the shipped template bodies; recorded when the assets were
# frozen so accidental edits fail loudly.
TEMPLATE_DIGESTS = {
    "position": "5c893983d571e7129b30daa73788e60d32da8bb842b7912336597b9012bebfba",
    "transition": "cc99ea00a8cc1f7c0bda416d8ae8a5d5dfe08fe8e7344ed197cbc49126229bd8",
    "transition_short": "4888cac87ca674c98bef6ae09963c16cbd7905b7ca330f7a1c109ae852f5aa51",
}

TEMPLATE_DIR_ENV = "RETROANCHOR_TEMPLATE_DIR"

_ALL_PLACEHOLDERS = tuple(
    sorted({token for tokens in TEMPLATE_PLACEHOLDERS.values() for token in tokens})
)


@dataclass(frozen=True)
class PromptTemplate:
    """One named template body with its declared placeholders."""

    name: str
    body: str
    placeholders: tuple[str, ...]
    digest: str


@dataclass(frozen=True)
class RenderedPrompt:
    """Final prompt text plus an audit trail of what was substituted."""

    template_name: str
    text: str
    substitution_record: dict[str, str]
    example_count: int
    template_digest: str


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_template(name: str, override_dir: Path | str | None = None) -> PromptTemplate:
    """Load a template by name from the package assets.

    An override directory (argument or RETROANCHOR_TEMPLATE_DIR) swaps in
    user-provided text without a rebuild; overridden bodies keep their own
    digest so downstream caching still keys off the real content.
    """
    if name not in TEMPLATE_PLACEHOLDERS:
        raise ValueError(f"unknown template {name!r}")
    directory = override_dir if override_dir is not None else os.environ.get(TEMPLATE_DIR_ENV)
    if directory:
        body = (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
    else:
        body = (
            resources.files("retroanchor")
            .joinpath("templates", f"{name}.txt")
            .read_text(encoding="utf-8")
        )
    placeholders = TEMPLATE_PLACEHOLDERS[name]
    missing = [token for token in placeholders if token not in body]
    if missing:
        raise ValueError(f"template {name!r} lacks placeholders: {', '.join(missing)}")
    return PromptTemplate(name=name, body=body, placeholders=placeholders, digest=_digest(body))


def _render(template: PromptTemplate, values: dict[str, str], example_count: int) -> RenderedPrompt:
    text = template.body
    record: dict[str, str] = {}
    for token in template.placeholders:
        value = values[token]
        text = text.replace(token, value)
        record[token] = _digest(value)
    residual = [token for token in _ALL_PLACEHOLDERS if token in text]
    if residual:
        raise ValueError(f"rendered prompt retains placeholders: {', '.join(residual)}")
    return RenderedPrompt(
        template_name=template.name,
        text=text,
        substitution_record=record,
        example_count=example_count,
        template_digest=template.digest,
    )


def render_position_prompt(
    product: Molecule,
    ontology: Ontology,
    template: PromptTemplate | None = None,
) -> RenderedPrompt:
    """Fill the disconnection-stage prompt for one mapped product."""
    if not product.atom_maps():
        raise ValueError("product has no atom maps")
    if len(ontology) == 0:
        raise ValueError("ontology is empty")
    if template is None:
        template = load_template("position")
    elif template.name != "position":
        raise ValueError(f"expected position template, got {template.name!r}")
    values = {
        "<reaction_ontology>": json.dumps(ontology.to_json_obj(), indent=2),
        "<canonicalized_product>": canonical_smiles(product, include_maps=True),
    }
    return _render(template, values, example_count=0)


def render_transition_prompt(
    product: Molecule,
    s: AtomMapSet,
    reaction_name: str | None,
    library: ExampleLibrary,
    variant: str = "full",
    template: PromptTemplate | None = None,
) -> RenderedPrompt:
    """Fill the reactant-prediction prompt for one disconnection site."""
    if variant not in ("full", "short"):
        raise ValueError(f"variant must be 'full' or 'short', got {variant!r}")
    if not s.maps:
        raise ValueError("disconnection set is empty")
    name = "transition" if variant == "full" else "transition_short"
    if template is None:
        template = load_template(name)
    elif template.name != name:
        raise ValueError(f"expected {name} template, got {template.name!r}")
    tokens = position_tokens(product, s)
    values = {
        "<REACTION_POSITION>": json.dumps(tokens),
        "<REACTION_NAME>": json.dumps(reaction_name) if reaction_name else "null",
        "<PRODUCT_SMILES>": json.dumps(canonical_smiles(product, include_maps=True)),
        "<TRAIN_REACTION_EXAMPLES>": json.dumps(list(library.examples), indent=2),
    }
    return _render(template, values, example_count=len(library.examples))
