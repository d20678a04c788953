"""Regenerate the bundled fixtures under src/hot/data.

Everything is drawn from a seeded ``random.Random`` so the output is
byte-stable; tests/test_fixtures.py re-runs the builders and compares.

    python3 scripts/build_fixtures.py
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from hot.backends.mock import MockBackend
from hot.corpus import CorpusSample, Lang, Split, save_corpus
from hot.dialogue import DialogueHistory, Role, Turn
from hot.pipeline import HotConfig, Method, run_method
from hot.prompts import build_diffused_prompt, build_record_prompt

DATA = Path(__file__).resolve().parents[1] / "src" / "hot" / "data"
N_SAMPLES = 60
N_TRAIN = 40

EN_CASES = [
    ("a dry cough", "two weeks", "Do I need a chest X-ray?", "a viral bronchitis",
     "rest, drink plenty of fluids and take honey for the cough; if it lasts beyond three weeks get a chest X-ray"),
    ("a sore throat and fever", "three days", "Should I take antibiotics?", "a throat infection",
     "gargle with warm salt water and take paracetamol for the fever; antibiotics are only needed if a strep test is positive"),
    ("headaches every morning", "a month", "Could it be my blood pressure?", "tension headache or high blood pressure",
     "check your blood pressure daily for a week and keep a headache diary, then see your doctor with the readings"),
    ("pain in my lower back", "ten days", "Is it a slipped disc?", "a muscle strain",
     "keep moving gently, use a warm compress and take ibuprofen with food; get an MRI only if the leg becomes numb"),
    ("itchy red patches on my arms", "a week", "Is this contagious?", "contact dermatitis",
     "avoid the new soap, apply a mild steroid cream twice a day and keep the skin moisturised"),
    ("a runny nose and sneezing", "four days", "Is it covid or a cold?", "a common cold",
     "do a rapid antigen test to rule out covid, rest at home and use saline nasal spray"),
    ("stomach pain after meals", "two months", "Could it be an ulcer?", "gastritis or a peptic ulcer",
     "avoid spicy food and alcohol, take an antacid before meals and get a breath test for helicobacter"),
    ("shortness of breath when climbing stairs", "three weeks", "Is my heart ok?", "reduced exercise tolerance that needs a cardiac check",
     "get an ECG and a blood test soon, and go to the emergency room if you feel chest pain"),
    ("a swollen ankle", "two days", "Did I break it?", "an ankle sprain",
     "rest, ice, compression and elevation; get an X-ray if you cannot put weight on the foot"),
    ("trouble sleeping", "six weeks", "Should I take sleeping pills?", "insomnia",
     "keep a fixed bedtime, avoid screens and caffeine in the evening and try cognitive behavioural therapy before pills"),
]

EN_HISTORY = ["no previous illness", "mild asthma as a child", "high blood pressure treated with amlodipine",
              "a knee operation last year", "seasonal allergies"]

ZH_CASES = [
    ("咳嗽", "两周", "需要拍胸片吗？", "病毒性支气管炎", "多休息，多喝水，咳嗽超过三周再拍胸片"),
    ("嗓子疼还发烧", "三天", "要吃抗生素吗？", "咽喉感染", "用温盐水漱口，发烧可以吃退烧药，化验阳性才需要抗生素"),
    ("早上头疼", "一个月", "是不是血压高？", "紧张性头痛或高血压", "每天测血压，记录一周后带着结果来复诊"),
    ("腰疼", "十天", "是腰椎间盘突出吗？", "腰肌劳损", "适当活动，热敷，饭后吃布洛芬，腿麻再做核磁"),
    ("胳膊上起红疹很痒", "一周", "会传染吗？", "接触性皮炎", "停用新换的肥皂，每天涂两次弱效激素药膏"),
    ("流鼻涕打喷嚏", "四天", "是新冠还是感冒？", "普通感冒", "先做抗原检测排除新冠，在家休息，用生理盐水洗鼻"),
    ("饭后胃疼", "两个月", "会不会是胃溃疡？", "胃炎或消化性溃疡", "少吃辛辣，戒酒，饭前吃抑酸药，做呼气试验查幽门螺杆菌"),
    ("爬楼梯就喘", "三周", "心脏有问题吗？", "需要检查心脏功能", "尽快做心电图和血液检查，如果胸痛马上去急诊"),
    ("脚踝肿了", "两天", "骨折了吗？", "踝关节扭伤", "休息冰敷加压抬高，脚不能着地就去拍片"),
    ("睡不着觉", "六周", "要吃安眠药吗？", "失眠", "固定作息，晚上少看手机少喝咖啡，先试行为治疗再考虑药物"),
]

ZH_HISTORY = ["既往体健", "小时候有哮喘", "高血压，服用氨氯地平", "去年做过膝盖手术", "季节性过敏"]


def _en_sample(i: int, rng: random.Random) -> CorpusSample:
    symptom, duration, question, diag, advice = EN_CASES[i % len(EN_CASES)]
    age = rng.randint(18, 80)
    history = rng.choice(EN_HISTORY)
    turns = [
        (Role.PATIENT, f"Hello doctor, I have had {symptom} for {duration}."),
        (Role.DOCTOR, "How old are you and do you have any other medical problems?"),
        (Role.PATIENT, f"I am {age} years old and I have {history}. {question}"),
    ]
    description = None
    if rng.random() < 0.5:
        description = f"{symptom.capitalize()} for {duration}, wants advice."
    sid = f"en-{i:03d}"
    reference = f"It sounds like {diag}. I suggest you {advice}."
    split = Split.TRAIN if i < N_TRAIN else Split.TEST
    dialogue = DialogueHistory(sid, tuple(Turn(r, t) for r, t in turns), description)
    return CorpusSample(sid, dialogue, reference, split, Lang.EN)


def _zh_sample(i: int, rng: random.Random) -> CorpusSample:
    symptom, duration, question, diag, advice = ZH_CASES[i % len(ZH_CASES)]
    age = rng.randint(18, 80)
    history = rng.choice(ZH_HISTORY)
    sid = f"zh-{i:03d}"
    turns = [(Role.PATIENT, f"医生你好，我{symptom}{duration}了，今年{age}岁，{history}。{question}")]
    if rng.random() < 0.5:
        turns += [(Role.DOCTOR, "还有其他不舒服吗？"), (Role.PATIENT, "没有了。")]
    reference = f"考虑是{diag}。建议{advice}。"
    split = Split.TRAIN if i < N_TRAIN else Split.TEST
    dialogue = DialogueHistory(sid, tuple(Turn(r, t) for r, t in turns))
    return CorpusSample(sid, dialogue, reference, split, Lang.ZH)


def build_corpus(lang: str) -> list[CorpusSample]:
    rng = random.Random(f"corpus-{lang}")
    make = _en_sample if lang == "en" else _zh_sample
    return [make(i, rng) for i in range(N_SAMPLES)]


def build_metric_pairs() -> list[dict]:
    """20 hypothesis/reference pairs: anchors, paraphrases, stems, shuffles, Chinese."""
    pairs = [
        {"hyp": "the cat sat", "ref": "the cat sat", "lang_mode": "whitespace"},
        {"hyp": "the the cat", "ref": "the cat", "lang_mode": "whitespace"},
        {"hyp": "cat the sat", "ref": "the cat sat", "lang_mode": "whitespace"},
        {"hyp": "the patients were running a fever", "ref": "the patient runs a fever",
         "lang_mode": "whitespace"},
    ]
    rng = random.Random("metric-pairs")
    en_refs = [f"It sounds like {c[3]}. I suggest you {c[4]}." for c in EN_CASES]
    for k in range(12):
        ref = en_refs[k % len(en_refs)]
        words = ref.split()
        op = k % 4
        if op == 0:  # drop a few words
            hyp = [w for w in words if rng.random() > 0.25]
        elif op == 1:  # swap adjacent words
            hyp = words[:]
            for _ in range(3):
                j = rng.randrange(len(hyp) - 1)
                hyp[j], hyp[j + 1] = hyp[j + 1], hyp[j]
        elif op == 2:  # inflect words so only stems match
            hyp = [w + "s" if w.isalpha() and len(w) > 3 and rng.random() < 0.4 else w for w in words]
        else:  # splice two references
            other = en_refs[(k + 3) % len(en_refs)].split()
            hyp = words[: len(words) // 2] + other[len(other) // 2:]
        pairs.append({"hyp": " ".join(hyp or words[:1]), "ref": ref, "lang_mode": "whitespace"})
    zh_refs = [f"考虑是{c[3]}。建议{c[4]}。" for c in ZH_CASES]
    for k in range(4):
        ref = zh_refs[k]
        chars = list(ref)
        if k % 2 == 0:
            hyp = "".join(c for c in chars if rng.random() > 0.2)
        else:
            hyp = ref[: len(ref) // 2] + zh_refs[k + 4][len(zh_refs[k + 4]) // 2:]
        pairs.append({"hyp": hyp, "ref": ref, "lang_mode": "cjk-char"})
    assert len(pairs) == 20
    return pairs


def build_audit() -> list[str]:
    """Texts seeded with emails, phone numbers, honorific names and addresses."""
    rng = random.Random("audit")
    first = ["John", "Mary", "Ahmed", "Li", "Sofia", "Peter", "Grace", "Omar"]
    last = ["Smith", "Chen", "Garcia", "Okafor", "Novak", "Brown", "O'Neil", "Kim"]
    streets = ["Baker Street", "Elm Road", "Maple Avenue", "Harbour Lane", "Queen Drive"]
    towns = ["Cape Town", "Salt Lake City", "Mexico City", "George Town", "Jersey City"]
    hon = ["Dr.", "Mr.", "Mrs.", "Ms", "Prof."]
    texts = ["Dr. John Smith of Cape Town", "email me at a@b.com"]
    for _ in range(28):
        name = f"{rng.choice(hon)} {rng.choice(first)} {rng.choice(last)}"
        email = f"{rng.choice(first).lower()}.{rng.randint(1, 99)}@clinic{rng.randint(1, 9)}.example.org"
        phone = rng.choice([
            f"+1 ({rng.randint(200, 999)}) {rng.randint(200, 999)}-{rng.randint(1000, 9999)}",
            f"+44 20 {rng.randint(1000, 9999)} {rng.randint(1000, 9999)}",
            f"+86 138 {rng.randint(1000, 9999)} {rng.randint(1000, 9999)}",
            f"020 {rng.randint(1000, 9999)} {rng.randint(1000, 9999)}",
        ])
        addr = f"{rng.randint(1, 999)} {rng.choice(streets)}"
        town = rng.choice(towns)
        texts.append(rng.choice([
            f"Please contact {name} at {email} or call {phone}.",
            f"I live at {addr} in {town} and my number is {phone}.",
            f"{name} saw me last week; her email is {email}.",
            f"Send the results to {addr}, {town}. Phone {phone}.",
        ]))
    return texts


def build_markov() -> dict:
    """Three-token toy model, rows chosen so no entry is zero."""
    return {
        "vocabulary": ["a", "b", "c"],
        "transition": [[0.5, 0.3, 0.2], [0.25, 0.5, 0.25], [0.1, 0.3, 0.6]],
        "initial": [0.4, 0.35, 0.25],
    }


def build_markov_dialogue() -> dict:
    """Small word-level model for CLI demos; its vocabulary includes two record headers."""
    vocab = ["rest", "drink", "water", "take", "paracetamol", "for", "the", "fever", "cough",
             "see", "a", "doctor", "Diagnosis:", "Suggestion:"]
    rng = random.Random("markov-dialogue")
    rows = []
    for _ in vocab:
        w = [rng.randint(1, 9) for _ in vocab]
        rows.append([x / sum(w) for x in w])
    return {"vocabulary": vocab, "transition": rows}


GENERIC_REPLY = "Please rest at home and come back if it gets worse."
RECORD_TEMPLATE = (
    "Chief Complaint: {symptom}\nCurrent Medical History: {symptom} for {duration}\n"
    "Auxiliary Examination: none\nPast History: see dialogue\n"
    "Diagnosis: {diag}\nSuggestion: {advice}"
)


def build_ordering_mock(samples: list[CorpusSample]) -> dict:
    """Mock script whose fused prompts return the gold reply while Direct gets a generic one.

    Diffused and record prompts map to fixed strings, so each fused prompt is
    seed-independent and can be keyed exactly.
    """
    cfg = HotConfig()
    script: dict[str, str] = {}
    for s in samples:
        if s.split is not Split.TEST:
            continue
        case = EN_CASES[int(s.id.split("-")[1]) % len(EN_CASES)]
        script[build_diffused_prompt(s.dialogue, 1, cfg.catalog)] = GENERIC_REPLY
        script[build_record_prompt(s.dialogue, cfg.schema, cfg.catalog)] = RECORD_TEMPLATE.format(
            symptom=case[0], duration=case[1], diag=case[3], advice=case[4])
    probe = MockBackend(script)
    for s in samples:
        if s.split is not Split.TEST:
            continue
        trace = run_method(s.dialogue, Method.HOT, cfg, probe)
        fused = [c.prompt for c in trace.prompts if c.stage == "response"][-1]
        script[fused] = s.reference
    return {"script": script}


def write_all(root: Path = DATA) -> list[Path]:
    written = []
    for lang in ("en", "zh"):
        path = root / f"fixture_{lang}.jsonl"
        save_corpus(build_corpus(lang), path)
        written.append(path)
    blobs = {
        "metric_pairs.json": build_metric_pairs(),
        "anon_audit.json": build_audit(),
        "markov_toy.json": build_markov(),
        "markov_dialogue.json": build_markov_dialogue(),
        "mock_ordering.json": build_ordering_mock(build_corpus("en")),
    }
    for name, obj in blobs.items():
        path = root / name
        path.write_text(json.dumps(obj, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
        written.append(path)
    return written


if __name__ == "__main__":
    for p in write_all():
        print(p)
