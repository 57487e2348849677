"""
Subgroup separability and label bias
====================================

A subgroup classifier's AUC measures how well group membership can be read
off the inputs.  When it is high, a model trained on labels that miss some
positives in group 1 learns a group-specific shortcut and loses accuracy
there on clean data; when it is near 0.5 the damage is spread thin.
Small sizes keep this quick; the configs in ``configs/`` run the full grid.
"""

import numpy as np

from causalbias import (ModelSpec, ScmConfig, build_scm, group_accuracy, inject_label_bias,
                        measure_separability, sample_dataset, train_erm)

spec = ModelSpec(hidden_widths=(16,), representation_dim=16, epochs=30)
seeds = range(3)

# %%
print("strength  AUC    clean g0/g1    biased g0/g1")
for strength in (0.0, 0.5, 1.0):
    scm = build_scm(ScmConfig(separability_strength=strength, x_a_channels=2))
    rows = []
    for s in seeds:
        train = sample_dataset(scm, 5000, 2 * s)
        test = sample_dataset(scm, 5000, 2 * s + 1)
        biased = inject_label_bias(train, 1, 0.25, s)
        sp = ModelSpec(**{**spec.to_dict(), "seed": s})
        clean = group_accuracy(train_erm(train, sp), test)
        bad = group_accuracy(train_erm(biased, sp), test)
        rows.append([measure_separability(train, test, sp).auc,
                     clean[0], clean[1], bad[0], bad[1]])
    auc, c0, c1, b0, b1 = np.mean(rows, axis=0)
    print(f"{strength:8.1f}  {auc:.3f}  {c0:.3f}/{c1:.3f}    {b0:.3f}/{b1:.3f}")
