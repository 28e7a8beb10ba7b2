"""Ranking clusters by confidence and building the semantic language.

Members of confident clusters become language entries (sent as short
quantised codes); the rest are routed classically. The example compares the
fixed threshold with the automatic largest-gap rule and reports the
resulting language's size, code length and complexity.
"""

import numpy as np

from semdisentangle import config, disentangle, pipeline, semlang

cfg = config.load_config(None, {"train.epochs": 60})
data = pipeline.load_data(cfg)
state, _ = pipeline.fit(data, cfg)
A = pipeline.assign(data, state, cfg)

conf = disentangle.cluster_confidence(A)
print("cluster confidence:", np.round(conf, 4))
print("ranking:", disentangle.rank_clusters(conf).tolist())

pre = pipeline.initial_params(cfg, data.dim)
for theta in (0.7, "auto"):
    report = disentangle.split(A, theta)
    lang = pipeline.language(data, report, state, cfg)
    noise_caught = data.is_noise[report.memorizable_ids].sum()
    print(f"\ntheta {theta}: threshold {report.threshold:.4f}, "
          f"{len(report.learnable_ids)} learnable / {len(report.memorizable_ids)} memorizable "
          f"({noise_caught} of {data.is_noise.sum()} noise points set aside)")
    if len(lang):
        bits = semlang.representation_length_bits(lang.code_matrix())
        cx = semlang.language_complexity(lang, A, pre, state.kappa, config.complexity_config(cfg))
        print(f"  {len(lang)} entries, {bits:.2f} bits per representation, "
              f"complexity {cx.total:.2f} nats (cross-entropy {cx.cross_entropy:.2f}, KL {cx.kl:.2f})")

pid = int(lang.ids[0])
label, z = lang.lookup(pid)
print(f"\nreceiver lookup for point {pid}: cluster {label}, representation {np.round(z, 3)}")
