"""Train the tiny model on a planted-signal corpus and look at where it attends.

True claims carry the keyword "genuine" somewhere in their evidence; nothing
else separates the classes. After a short training run the word-level heads
should single that token out.

    python demos/planted_signal_walkthrough.py
"""
import numpy as np

from mac_factcheck.data import Vocabularies, encode_all
from mac_factcheck.model import forward, init_params
from mac_factcheck.synthetic import KEYWORD, planted_corpus, tiny_config
from mac_factcheck.training import AdamState, evaluate_instances, train_epoch

train_records = planted_corpus(64, seed=3)
held_out = planted_corpus(32, seed=103, id_prefix="held")

vocabs = Vocabularies.build(train_records, min_freq=1)
cfg = tiny_config(vocab_size=len(vocabs.words), n_speakers=len(vocabs.speakers),
                  n_publishers=len(vocabs.publishers), use_speakers=False)
train = encode_all(train_records, vocabs, cfg)
test = encode_all(held_out, vocabs, cfg)

params = init_params(cfg, seed=3)
state = AdamState(lr=0.001)
for epoch in range(1, 201):
    loss = train_epoch(params, state, train, cfg, 3, epoch, 32)
    if epoch % 40 == 0:
        print(f"epoch {epoch:3d}  mean loss {loss:.4f}")

for name, data in (("train", train), ("held out", test)):
    rep = evaluate_instances(params, cfg, data)
    print(f"{name:>8}: AUC {rep.auc:.3f}  accuracy {rep.f1_micro:.3f}  F1 macro {rep.f1_macro:.3f}")

# one true held-out claim, head by head
inst = next(i for i in test if i.label == 1)
trace = forward(params, cfg, inst, want_trace=True).trace
for slot in np.flatnonzero(inst.doc_mask):
    tokens = inst.doc_tokens[slot]
    weights = trace.word_weights[slot][:len(tokens)]
    print(f"\ndocument {slot} ({inst.publishers[slot]})")
    for tok, row in zip(tokens, weights):
        marker = "  <-- planted" if tok == KEYWORD else ""
        print(f"  {tok:>10}  " + "  ".join(f"{w:.3f}" for w in row) + marker)
print("\ndocument-level weights per head:")
print(np.round(trace.doc_weights[inst.doc_mask], 3))
