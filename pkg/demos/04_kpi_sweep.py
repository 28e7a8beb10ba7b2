"""Classical, all-semantic and split transmission across content complexity.

Each sweep point generates a mixture of the requested entropy, trains once
and evaluates the three schemes. Shortened training keeps this under a
couple of minutes; the command-line ``sweep`` runs the full version.
"""

from semdisentangle import config, simkpi

cfg = config.load_config(None, {"train.epochs": 40, "split.theta": "auto"})
records = simkpi.run_sweep(cfg["sweep.complexities"], simkpi.SCHEMES, cfg)

print(f"{'scheme':12s} {'nats':>6s} {'bits/repr':>10s} {'impact':>14s} {'tx time s':>10s}")
for r in records:
    print(f"{r.scheme:12s} {r.complexity_nats:6.2f} {r.avg_repr_len_bits:10.2f} "
          f"{r.semantic_impact:14.4g} {r.total_tx_time_s:10.4f}")
