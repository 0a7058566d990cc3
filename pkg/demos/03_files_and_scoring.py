"""Round trip through the on-disk formats: feature files in, EER out.

Writes a few feature files to a temporary directory, embeds them with an
untrained aggregator, scores a trial list and reports the EER.  The same
flow is available from the command line as ``graphagg aggregate``,
``graphagg score`` and ``graphagg eer``.

    python3 demos/03_files_and_scoring.py
"""

import tempfile
from pathlib import Path

import numpy as np

from graphagg import AggregatorConfig, aggregate, init_params
from graphagg.evaluation import ScoreSet, compute_eer, score_trials
from graphagg.fileio import (
    Trial,
    parse_trials,
    read_embedding_store,
    read_feature_file,
    write_embedding_store,
    write_feature_file,
    write_trials,
)

rng = np.random.default_rng(1)
centres = {"spk0": rng.standard_normal(8) * 3, "spk1": rng.standard_normal(8) * 3, "spk2": rng.standard_normal(8) * 3}

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    for spk, c in centres.items():
        for k in range(3):
            write_feature_file(tmp / f"{spk}_{k}.gaff", c + rng.standard_normal((20, 8)))

    cfg = AggregatorConfig(in_dim=8, hidden_dim=8, heads=2, keep_ratio=0.8, readout="mean", seed=4)
    params = init_params(cfg)
    store = {p.stem: aggregate(read_feature_file(p), cfg, params).value.ravel() for p in sorted(tmp.glob("*.gaff"))}
    write_embedding_store(tmp / "emb.bin", store)

    ids = sorted(store)
    trials = [Trial(a[:4] == b[:4], a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]
    write_trials(tmp / "trials.txt", trials)

    trials = parse_trials(tmp / "trials.txt")
    scores = score_trials(trials, read_embedding_store(tmp / "emb.bin"))
    res = compute_eer(ScoreSet(scores, [t.target for t in trials]))
    print(f"{len(trials)} trials, EER {res.percent:.2f}% at threshold {res.threshold:.4f}")
