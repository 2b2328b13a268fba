"""Tests for prompt template loading and rendering."""

from __future__ import annotations

import hashlib
import json

import pytest

from retroanchor.chem import AtomMapSet, annotate_sequential_maps, parse_smiles
from retroanchor.datasets import ExampleLibrary, Ontology, OntologyEntry
from retroanchor.prompts import (
    TEMPLATE_DIGESTS,
    TEMPLATE_PLACEHOLDERS,
    load_template,
    render_position_prompt,
    render_transition_prompt,
)


def _ontology(*names):
    entries = tuple(OntologyEntry(id=n, reaction_class="C-C Coupling") for n in names)
    return Ontology(entries=entries, source_split="train")


def _library(*examples, seed=7):
    return ExampleLibrary(reaction_name="Amide coupling", examples=tuple(examples), seed=seed)


MAPPED_PRODUCT = parse_smiles("[CH3:1][C:2](=[O:3])[NH:4][CH3:5]")


class TestLoadTemplate:
    @pytest.mark.parametrize("name", sorted(TEMPLATE_DIGESTS))
    def test_shipped_bodies_match_pinned_digests(self, name):
        template = load_template(name)
        assert template.digest == TEMPLATE_DIGESTS[name]
        assert hashlib.sha256(template.body.encode()).hexdigest() == TEMPLATE_DIGESTS[name]

    @pytest.mark.parametrize("name", sorted(TEMPLATE_PLACEHOLDERS))
    def test_declared_placeholders_present(self, name):
        template = load_template(name)
        for token in template.placeholders:
            assert token in template.body

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown template"):
            load_template("mystery")

    def test_override_directory_swaps_body(self, tmp_path):
        (tmp_path / "position.txt").write_text(
            "custom <reaction_ontology> and <canonicalized_product>"
        )
        template = load_template("position", override_dir=tmp_path)
        assert template.body.startswith("custom")
        assert template.digest != TEMPLATE_DIGESTS["position"]

    def test_override_missing_placeholder_rejected(self, tmp_path):
        (tmp_path / "position.txt").write_text("no placeholders at all")
        with pytest.raises(ValueError, match="lacks placeholders"):
            load_template("position", override_dir=tmp_path)

    def test_env_override(self, tmp_path, monkeypatch):
        (tmp_path / "position.txt").write_text(
            "env <reaction_ontology> <canonicalized_product>"
        )
        monkeypatch.setenv("RETROANCHOR_TEMPLATE_DIR", str(tmp_path))
        assert load_template("position").body.startswith("env")


class TestPositionPrompt:
    def test_contains_spacing_instruction(self):
        rendered = render_position_prompt(MAPPED_PRODUCT, _ontology("Amide coupling"))
        assert "atoms must be separated by spaces" in rendered.text

    def test_substitutes_ontology_and_product(self):
        ontology = _ontology("Amide coupling", "Suzuki coupling")
        rendered = render_position_prompt(MAPPED_PRODUCT, ontology)
        assert '"id": "Amide coupling"' in rendered.text
        assert "[CH3:1]" in rendered.text
        assert "<reaction_ontology>" not in rendered.text
        assert "<canonicalized_product>" not in rendered.text

    def test_substitution_record_digests_values(self):
        ontology = _ontology("A", "B")
        rendered = render_position_prompt(MAPPED_PRODUCT, ontology)
        expected = hashlib.sha256(
            json.dumps(ontology.to_json_obj(), indent=2).encode()
        ).hexdigest()
        assert rendered.substitution_record["<reaction_ontology>"] == expected
        assert rendered.example_count == 0

    def test_rendering_is_deterministic(self):
        ontology = _ontology("A")
        first = render_position_prompt(MAPPED_PRODUCT, ontology)
        second = render_position_prompt(MAPPED_PRODUCT, ontology)
        assert first.text == second.text

    def test_unmapped_product_rejected(self):
        with pytest.raises(ValueError, match="no atom maps"):
            render_position_prompt(parse_smiles("CCO"), _ontology("A"))

    def test_empty_ontology_rejected(self):
        empty = Ontology(entries=(), source_split="train")
        with pytest.raises(ValueError, match="ontology is empty"):
            render_position_prompt(MAPPED_PRODUCT, empty)

    def test_product_recanonicalized_consistently(self):
        variant = parse_smiles("[CH3:5][NH:4][C:2]([CH3:1])=[O:3]")
        first = render_position_prompt(MAPPED_PRODUCT, _ontology("A"))
        second = render_position_prompt(variant, _ontology("A"))
        assert first.text == second.text


class TestTransitionPrompt:
    def test_position_tokens_quoted_in_input_block(self):
        product = parse_smiles("CC(C)C(=O)O[C:12](=O)[N:14]C")
        rendered = render_transition_prompt(
            product,
            AtomMapSet.of({12, 14}),
            "Carboxylic acid to amide conversion",
            _library(),
        )
        assert '"reaction_center_atoms": "C:12 N:14"' in rendered.text

    def test_absent_name_renders_null(self):
        rendered = render_transition_prompt(
            MAPPED_PRODUCT, AtomMapSet.of({2, 4}), None, _library()
        )
        assert '"forward_reaction_name": null' in rendered.text

    def test_examples_serialized_as_json_array(self):
        library = _library("CCO>>CC.O", "CCN>>CC.N")
        rendered = render_transition_prompt(
            MAPPED_PRODUCT, AtomMapSet.of({2, 4}), "Amide coupling", library
        )
        assert '"CCO>>CC.O"' in rendered.text
        assert rendered.example_count == 2

    def test_empty_library_renders_empty_array(self):
        rendered = render_transition_prompt(
            MAPPED_PRODUCT, AtomMapSet.of({2, 4}), "Amide coupling", _library()
        )
        assert '"retrosynthesis_reaction_examples": []' in rendered.text
        assert rendered.example_count == 0

    def test_variants_pick_distinct_templates(self):
        full = render_transition_prompt(
            MAPPED_PRODUCT, AtomMapSet.of({2, 4}), "n", _library(), variant="full"
        )
        short = render_transition_prompt(
            MAPPED_PRODUCT, AtomMapSet.of({2, 4}), "n", _library(), variant="short"
        )
        assert full.template_digest == TEMPLATE_DIGESTS["transition"]
        assert short.template_digest == TEMPLATE_DIGESTS["transition_short"]
        assert full.text != short.text

    def test_no_declared_placeholder_survives(self):
        rendered = render_transition_prompt(
            MAPPED_PRODUCT, AtomMapSet.of({2, 4}), None, _library("A>>B")
        )
        for token in TEMPLATE_PLACEHOLDERS["transition"]:
            assert token not in rendered.text

    def test_unresolvable_map_rejected(self):
        with pytest.raises(ValueError, match="99"):
            render_transition_prompt(
                MAPPED_PRODUCT, AtomMapSet.of({99}), "n", _library()
            )

    def test_empty_disconnection_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            render_transition_prompt(MAPPED_PRODUCT, AtomMapSet.of(()), "n", _library())

    def test_bad_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            render_transition_prompt(
                MAPPED_PRODUCT, AtomMapSet.of({2}), "n", _library(), variant="tiny"
            )

    def test_aromatic_tokens_keep_lowercase(self):
        product = annotate_sequential_maps(parse_smiles("c1ccccc1CN"))
        ring_map = next(
            a.atom_map for a in product.atoms if a.aromatic
        )
        rendered = render_transition_prompt(
            product, AtomMapSet.of({ring_map}), "n", _library()
        )
        assert f'"c:{ring_map}"' in rendered.text
