"""Training the encoder with instance and cluster discrimination.

A labelled mixture of four Gaussian contents plus uniform noise is embedded
and trained for a few dozen epochs. The printout follows the two loss terms
and then checks how well the hard cluster labels recover the contents.
"""

import numpy as np

from semdisentangle import config, pipeline

cfg = config.load_config(None, {"train.epochs": 40})
data = pipeline.load_data(cfg)
print(f"{len(data)} records of dimension {data.dim}, {data.is_noise.mean():.0%} noise")


def show(m):
    if m.epoch == 1 or m.epoch % 10 == 0:
        print(f"epoch {m.epoch:3d}  L_I {m.L_I:.4f}  L_D {m.L_D:.4f}  L_T {m.L_T:.4f}")


state, history = pipeline.fit(data, cfg, on_epoch=show)

A = pipeline.assign(data, state, cfg)
print("\ncluster sizes and composition:")
for l in range(A.M):
    members = A.hard_labels == l
    if not members.any():
        print(f"  cluster {l}: empty")
        continue
    labels = data.labels[members]
    top = np.bincount(labels[labels >= 0], minlength=cfg["data.n_contents"])
    print(f"  cluster {l}: {members.sum():4d} points, noise {np.mean(labels < 0):.2f}, "
          f"majority content {top.argmax()} ({top.max()} points)")
