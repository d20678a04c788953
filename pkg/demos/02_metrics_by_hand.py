"""
Sentence metrics on small pairs
===============================

BLEU, NIST and METEOR(es) on pairs small enough to check with pencil and paper.
"""

import math

from hot.metrics import TokenizedPair, align, count_chunks, score_pair, tokenize

# identical three-token pair: every unigram carries log2(3) bits
v = score_pair("the cat sat", "the cat sat")
print(v.bleu2, v.nist2, math.log2(3))

# one alignment chunk out of three matches -> penalty 0.5 * (1/3)**3
print(v.meteor, 1 - 0.5 / 27)

# repeated word: clipped unigram precision 2/3, bigram precision 1/2
print(score_pair("the the cat", "the cat").bleu2, math.sqrt(2 / 3 * 1 / 2))

# stems let "patients"/"patient" and "running"/"runs" align
hyp, ref = tokenize("the patients were running a fever"), tokenize("the patient runs a fever")
pairs = align(hyp, ref)
print([(hyp[i], ref[j]) for i, j in pairs], "chunks:", count_chunks(pairs))
print(score_pair(" ".join(hyp), " ".join(ref)).meteor)

# Chinese text is scored per character
print(tokenize("多喝水，注意休息", "cjk-char"))
print(score_pair("多喝水，注意休息", "注意休息，多喝水", "cjk-char"))

# an empty hypothesis scores zero and is flagged
print(score_pair("", "rest well"))

# the pair type is what the harness stores
print(TokenizedPair.from_text("Rest, please!", "rest"))
