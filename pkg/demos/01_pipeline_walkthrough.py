"""
One dialogue, three stages
==========================

Walk a single patient dialogue through the pipeline on the offline mock
backend and look at every prompt it sends.
"""

from hot.backends import MockBackend
from hot.corpus import fixture_path, load_corpus
from hot.pipeline import HotConfig, Method, record_responder, run_method

# a test-split sample from the bundled English fixture
sample = next(s for s in load_corpus(fixture_path("en")) if s.split.value == "test")
print(sample.dialogue.turns[-1].text)

# the mock answers record prompts with a filled-in record and everything else
# with a fixed reply, so all three stages succeed without a model
backend = MockBackend(default="It is likely viral. Rest and drink fluids. Patient: thanks")
backend.responder = record_responder()

cfg = HotConfig(d_count=3)
trace = run_method(sample.dialogue, Method.HOT, cfg, backend)

for call in trace.prompts:
    print(f"--- {call.stage} ---")
    print(call.prompt.splitlines()[-1])
    text = call.completion.text
    print("=>", text.splitlines()[0] if text else "")

# the answer filter cut the reply at the next speaker marker
print("response:", trace.response.text)
print("calls:", trace.calls, "tokens:", trace.generated_tokens)

# the baselines cost one and two calls
for m in (Method.DIRECT, Method.COT):
    t = run_method(sample.dialogue, m, cfg, backend)
    print(m.label, t.calls, repr(t.response.text))
