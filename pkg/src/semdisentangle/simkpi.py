"""Transmission KPIs for classical, all-semantic and split (contrastive) routing.

Accounting conventions:

* A record sent classically costs its raw size ``record_bits`` and carries
  ``ceil(record_bits / packet_bits)`` packets; its impact is those packets
  per second of its own airtime.
* A record sent semantically costs the entropy-coded length of its
  quantised representation (at least one bit on the wire).
* A representation of cluster ``c`` regenerates every record of ``c`` whose
  embedding lies within cosine ``RECON_COS`` of the dequantised centroid of
  ``c``; each regenerated record counts its full packet load.
* A scheme's semantic impact is the mean impact of its semantic
  representations. A scheme that sends nothing semantically reports the
  classical figures.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .numcore import DomainError
from .semlang import dequantize, quantize, representation_length_bits

RECON_COS = 0.95
SCHEMES = ("classical", "vanilla", "contrastive")
CSV_HEADER = ["scheme", "complexity_nats", "avg_repr_len_bits", "semantic_impact", "total_tx_time_s"]


@dataclass(frozen=True)
class ChannelConfig:
    rate_bits_per_s: float = 1.0e6
    packet_bits: int = 1024

    def __post_init__(self):
        if not self.rate_bits_per_s > 0:
            raise DomainError("rate_bits_per_s must be positive")
        if self.packet_bits < 1:
            raise DomainError("packet_bits must be a positive integer")


@dataclass
class KpiRecord:
    scheme: str
    complexity_nats: float
    avg_repr_len_bits: float
    semantic_impact: float
    total_tx_time_s: float

    def same_kpis(self, other):
        """Equality of every KPI field, ignoring the scheme tag."""
        a, b = asdict(self), asdict(other)
        a.pop("scheme")
        b.pop("scheme")
        return a == b


def packets_per_record(record_bits, ch):
    return math.ceil(record_bits / ch.packet_bits)


def classical_cost(data, ch, count=None):
    """Raw bits and airtime to send ``count`` records (default: the whole stream)."""
    n = len(data) if count is None else count
    if n < 1 and count is None:
        raise DomainError("classical cost of an empty stream")
    bits = n * data.record_bits
    return bits, bits / ch.rate_bits_per_s


def semantic_impact(regenerable_packets, repr_bits, ch):
    """Packets regenerated per second of representation airtime."""
    if not repr_bits > 0:
        raise DomainError(f"representation length must be positive, got {repr_bits}")
    return regenerable_packets / (repr_bits / ch.rate_bits_per_s)


def classical_record(data, ch, complexity=0.0, scheme="classical"):
    bits, seconds = classical_cost(data, ch)
    ppr = packets_per_record(data.record_bits, ch)
    impact = semantic_impact(len(data) * ppr, bits, ch)
    return KpiRecord(scheme, float(complexity), float(data.record_bits), impact, seconds)


def regenerated_counts(language, Z):
    """Per cluster label, how many of its records the quantised centroid reconstructs."""
    counts = {}
    for lab, c in language.codebook.items():
        r = dequantize(quantize(c, language.q), language.q)
        r = r / np.linalg.norm(r)
        members = np.array([pid for pid in language.ids if language.labels[pid] == lab], dtype=int)
        counts[lab] = int(np.count_nonzero(Z[members] @ r >= RECON_COS)) if members.size else 0
    return counts


def evaluate_scheme(scheme, data, language, ch, Z=None, complexity=0.0):
    """KPI record of one scheme.

    ``language`` holds the semantically sent points (all of them for
    ``vanilla``); every other point goes classically. ``Z`` are the
    unperturbed record embeddings indexed by point id.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}")
    if scheme == "classical" or language is None or len(language) == 0:
        return classical_record(data, ch, complexity, scheme)
    if Z is None:
        raise DomainError("record embeddings are required for semantic schemes")
    n_sem = len(language)
    avg_bits = representation_length_bits(language.code_matrix())
    wire_bits = max(avg_bits, 1.0)
    counts = regenerated_counts(language, Z)
    ppr = packets_per_record(data.record_bits, ch)
    mean_regen = float(np.mean([counts[language.labels[pid]] for pid in language.ids]))
    impact = semantic_impact(mean_regen * ppr, wire_bits, ch)
    classical_bits, _ = classical_cost(data, ch, count=len(data) - n_sem)
    seconds = (wire_bits * n_sem + classical_bits) / ch.rate_bits_per_s
    return KpiRecord(scheme, float(complexity), float(avg_bits), float(impact), float(seconds))


def run_sweep(complexities, schemes, base_config):
    """One KPI record per (complexity, scheme), in input order.

    Each sweep point generates a mixture whose source entropy equals the
    requested complexity (content count, then noise mass, see
    :func:`semdisentangle.datagen.mixture_for_complexity`),
    runs the full pipeline once and evaluates every scheme on it.
    """
    from . import pipeline

    complexities = [float(c) for c in complexities]
    if any(b <= a for a, b in zip(complexities, complexities[1:])):
        raise DomainError("complexities must be strictly increasing")
    schemes = list(schemes)
    for s in schemes:
        if s not in SCHEMES:
            raise DomainError(f"unknown scheme {s!r}")
    seeds = pipeline.sweep_seeds(base_config["seed"], len(complexities))
    jobs = [(c, schemes, base_config, s) for c, s in zip(complexities, seeds)]
    workers = int(base_config.get("sweep.workers", 1))
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(pipeline.sweep_point, *zip(*jobs)))
    else:
        parts = [pipeline.sweep_point(*job) for job in jobs]
    return [rec for part in parts for rec in part]


def _fmt(x):
    return f"{x:.9g}"


def kpi_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.scheme, _fmt(r.complexity_nats), _fmt(r.avg_repr_len_bits),
                    _fmt(r.semantic_impact), _fmt(r.total_tx_time_s)])
    return buf.getvalue()


def kpi_json(records):
    return json.dumps([asdict(r) for r in records], indent=1)


def write_kpis(records, csv_path, json_path=None):
    with open(csv_path, "w", newline="") as fh:
        fh.write(kpi_csv(records))
    if json_path is not None:
        with open(json_path, "w") as fh:
            fh.write(kpi_json(records))
