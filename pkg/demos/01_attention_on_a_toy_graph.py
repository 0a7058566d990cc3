"""Attention over a handful of frames, then pooling and readout.

Five frames: four from one voice and one outlier.  The script prints the
attention matrix, which frames gPool keeps, and the resulting embedding.

    python3 demos/01_attention_on_a_toy_graph.py
"""

import numpy as np

from graphagg import AggregatorConfig, aggregate, init_params
from graphagg.gat import gat_head_forward, init_gat_params
from graphagg.pooling import GPoolParams, gpool

rng = np.random.default_rng(0)
voice = np.array([1.0, 0.5, -0.5, 0.0])
frames = voice + 0.1 * rng.standard_normal((5, 4))
frames[3] = [-2.0, 1.5, 2.0, -1.0]  # the outlier

# Identity projection and a hand-set attention vector whose second half
# scores how much each neighbour looks like the voice.
W = np.eye(4)
gamma = np.concatenate([np.zeros(4), 2 * voice])
out, attn = gat_head_forward(frames, W, gamma)
np.set_printoptions(precision=3, suppress=True)
print("attention (row i = how frame i weighs every frame):")
print(attn.value)

pooled = gpool(frames, GPoolParams(voice, keep_ratio=0.8))
print(f"\ngPool keeps {pooled.num_nodes} of 5 frames: {[int(i) for i in pooled.kept_indices]}")

print("\nan untrained aggregator starts near uniform attention:")
layer = init_gat_params(4, 4, heads=1, rng=rng)
print(gat_head_forward(frames, layer.W[0], layer.gamma[0])[1].value[0])

cfg = AggregatorConfig(in_dim=4, hidden_dim=4, heads=2, keep_ratio=0.8, readout="combine_concat")
emb = aggregate(frames, cfg, init_params(cfg))
print(f"\ncombine_concat embedding, width {emb.shape[1]}:")
print(emb.value)
