"""Edit-distance alignment with blank insertion, and the length gate.

When a CTC hypothesis drops or adds tokens relative to the reference,
feeding it straight to the decoder creates dislocated training samples.
Aligning the two with unit-cost edit distance and inserting a blank
sentinel wherever one side lacks a token restores positionwise pairing.
"""

from ctcfuse.alignment import GatingConfig, aef_align, cer, edit_distance, gate, render_alignment
from ctcfuse.data import build_vocab

vocab = build_vocab(["ABCXY"])
tok = vocab.tokenize

print("== the deletion case ==")
ref, hyp = tok("ABCA"), tok("ACA")
cost, script = edit_distance(ref, hyp)
print(f"edit_distance(ABCA, ACA) = {cost}")
pair = aef_align(ref, hyp, vocab.blank_id)
print(render_alignment(pair, vocab.id_to_token))

print()
print("== the insertion case: the blank lands on the reference side ==")
pair = aef_align(tok("AB"), tok("AXB"), vocab.blank_id)
print(render_alignment(pair, vocab.id_to_token))
print("(blank-labelled positions are masked out of the training loss,")
print(" so the decoder is never taught to emit a blank)")

print()
print("== the length gate decides how the hypothesis is used ==")
for mode, t_l, t_r in (("absolute", 2, 0.15), ("relative", 2, 0.15)):
    cfg = GatingConfig(mode=mode, t_l=t_l, t_r=t_r)
    print(f"mode={mode}:")
    for len_ctc, len_gt in ((10, 10), (11, 10), (12, 10), (15, 10)):
        decision = gate(len_ctc, len_gt, cfg)
        print(f"  |hyp|={len_ctc} |ref|={len_gt} -> {decision.value}")

print()
print("== CER is edit distance over reference length ==")
print(f"cer(ABCA, ACA)  = {cer(tok('ABCA'), tok('ACA')):.4f}")
print(f"cer(ABCA, ABCA) = {cer(tok('ABCA'), tok('ABCA')):.4f}")
print(f"cer(AB, '')     = {cer(tok('AB'), ()):.4f}")
