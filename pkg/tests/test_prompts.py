from __future__ import annotations

import json

import pytest

from hot.dialogue import (
    DialogueHistory,
    DiffusedThoughts,
    FocusedSummary,
    MedicalRecordSchema,
    ThoughtContent,
    render_dialogue,
)
from hot.prompts import (
    EmptySummary,
    EmptyThoughts,
    PromptError,
    TemplateCatalog,
    UnknownItem,
    UnknownTemplate,
    build_cot_prompts,
    build_diffused_prompt,
    build_focused_prompt,
    build_record_prompt,
    cot_answer_prompt,
    default_catalog,
    fuse_prompt,
)

# the eight diffused-thinking templates, byte for byte
TEMPLATES = {
    1: "Doctor:",
    2: "Doctor may think:",
    3: "Doctor: Let's think step by step,",
    4: "Let's reason like a medical expert:",
    5: "Given the medical nature of the question, Doctor:",
    6: "Doctor: Let's review your medical history and examine your symptoms.",
    7: "Doctor: Let's work together to rule out any serious conditions. My initial thoughts are",
    8: "Doctor: Let's go through the process of elimination to determine the possible causes. "
       "My hypothesis is",
}


def _thoughts(*texts):
    return DiffusedThoughts(tuple(ThoughtContent(i, t, t) for i, t in enumerate(texts, 1)))


def _record(**over):
    schema = MedicalRecordSchema()
    texts = {item: f"{item.lower()} text" for item in schema.items}
    texts.update(over)
    return FocusedSummary.from_texts(schema, texts)


def test_catalog_templates_verbatim():
    cat = default_catalog()
    assert cat.template_ids == list(range(1, 9))
    for k, text in TEMPLATES.items():
        assert cat.template(k) == text


def test_catalog_has_both_languages():
    zh = default_catalog("zh")
    assert zh.lang == "zh" and zh.template_ids == list(range(1, 9))
    assert zh.version == default_catalog("en").version


def test_catalog_load_from_path(tmp_path):
    from importlib import resources

    data = json.loads(resources.files("hot.data").joinpath("catalog.json").read_text(encoding="utf-8"))
    data["languages"]["en"]["templates"]["1"] = "Physician:"
    path = tmp_path / "cat.json"
    path.write_text(json.dumps(data))
    assert TemplateCatalog.load(path).template(1) == "Physician:"


def test_diffused_prompt(dialogue):
    t = render_dialogue(dialogue)
    assert build_diffused_prompt(dialogue, 1) == t + "\nDoctor:"
    assert build_diffused_prompt(dialogue, 3) == t + "\nDoctor: Let's think step by step,"


def test_unknown_template(dialogue):
    with pytest.raises(UnknownTemplate):
        build_diffused_prompt(dialogue, 9)


def test_template_prompts_pairwise_distinct(dialogue):
    prompts = {build_diffused_prompt(dialogue, k) for k in range(1, 9)}
    assert len(prompts) == 8
    hashes = {default_catalog().template_hash(k) for k in range(1, 9)}
    assert len(hashes) == 8


@pytest.mark.parametrize("item", ["Chief Complaint", "Diagnosis"])
def test_focused_prompt_question(dialogue, item):
    assert build_focused_prompt(dialogue, item).endswith(f"What is the {item}?")


def test_focused_prompt_unknown_item(dialogue):
    with pytest.raises(UnknownItem):
        build_focused_prompt(dialogue, "Blood Type")


def test_record_prompt_lists_all_items(dialogue):
    p = build_record_prompt(dialogue)
    for item in MedicalRecordSchema().items:
        assert item in p
    assert p.endswith("Medical record:")


def test_fuse_counts_and_trigger(dialogue):
    p = fuse_prompt(dialogue, _thoughts("a", "b", "c"), _record())
    lines = p.splitlines()
    assert lines[-1] == "Doctor:"
    assert [ln for ln in lines if ln[:3] in ("1. ", "2. ", "3. ", "4. ")] == ["1. a", "2. b", "3. c"]
    record = lines[lines.index("Medical record:") + 1:-1]
    assert len(record) == 6
    assert record[0] == "Chief Complaint: chief complaint text"


def test_fuse_is_deterministic(dialogue):
    assert fuse_prompt(dialogue, _thoughts("x"), _record()) == fuse_prompt(dialogue, _thoughts("x"), _record())


def test_fuse_section_order(dialogue):
    p = fuse_prompt(dialogue, _thoughts("x"), _record(), order=("record", "thoughts", "dialogue"))
    assert p.index("Medical record:") < p.index("Possible thoughts:") < p.index("Patient:")
    with pytest.raises(PromptError):
        fuse_prompt(dialogue, _thoughts("x"), _record(), order=("dialogue", "thoughts"))


def test_fuse_ablation_sections(dialogue):
    assert "Medical record:" not in fuse_prompt(dialogue, _thoughts("x"), None)
    assert "Possible thoughts:" not in fuse_prompt(dialogue, None, _record())
    with pytest.raises(PromptError):
        fuse_prompt(dialogue, None, None)


def test_fuse_empty_inputs(dialogue):
    with pytest.raises(EmptyThoughts):
        fuse_prompt(dialogue, DiffusedThoughts(()), _record())
    schema = MedicalRecordSchema()
    with pytest.raises(EmptySummary):
        fuse_prompt(dialogue, _thoughts("x"), FocusedSummary.from_texts(schema, {}))


def test_fuse_length_linear_in_content(dialogue):
    base = len(fuse_prompt(dialogue, _thoughts("a"), _record()))
    longer = len(fuse_prompt(dialogue, _thoughts("a" * 101), _record()))
    assert longer - base == 100


def test_every_prompt_contains_transcript_once(dialogue):
    t = render_dialogue(dialogue)
    prompts = [build_diffused_prompt(dialogue, 2), build_focused_prompt(dialogue, "Diagnosis"),
               build_record_prompt(dialogue), fuse_prompt(dialogue, _thoughts("a"), _record()),
               build_cot_prompts(dialogue)[0]]
    for p in prompts:
        assert p.count(t) == 1


def test_cot_prompts(dialogue):
    stage1, suffix = build_cot_prompts(dialogue)
    assert stage1.endswith("Let's think step by step,")
    assert suffix == "\nTherefore, the doctor's reply is:"
    assert cot_answer_prompt(stage1, "", suffix) == stage1 + suffix
    assert cot_answer_prompt(stage1, "it is a cold", suffix) == f"{stage1} it is a cold{suffix}"


def test_zh_record_lines_use_fullwidth_colon():
    d = DialogueHistory.from_pairs([("Patient", "我咳嗽")], "z")
    cat = default_catalog("zh")
    schema = MedicalRecordSchema(("主诉", "诊断"))
    rec = FocusedSummary.from_texts(schema, {"主诉": "咳嗽", "诊断": "感冒"})
    p = fuse_prompt(d, _thoughts("多喝水"), rec, cat)
    assert "主诉： 咳嗽" in p and p.endswith("医生：")
