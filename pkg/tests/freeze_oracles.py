"""Regenerate tests/data/frozen_oracles.json from the slow reference oracles.

Run from the tests directory: ``python freeze_oracles.py``. Only the oracles
and the cohort generator are used here, never the modules under test.
"""

import json
from datetime import date
from pathlib import Path

import numpy as np

from oracles import (
    auc_pairs, best_rank_k_error, post_series, prostatectomy_oracle, radiation_oracle, random_psa_series,
    region_aggregates, sensitivity_oracle,
)

OUT = Path(__file__).parent / "data" / "frozen_oracles.json"
END = date(2015, 6, 30)
N_PSA = 200
N_AUC = 40
SVD_SHAPES = [(20, 30, 3), (40, 25, 5), (60, 90, 10), (30, 30, 29)]


def _date(psa, idx):
    return None if idx is None else post_series(psa, END)[idx].date.isoformat()


def psa_cases():
    out = []
    for seed in range(N_PSA):
        psa = random_psa_series(np.random.default_rng(seed), END)
        out.append({
            "seed": seed,
            "radiation": _date(psa, radiation_oracle(psa, END)),
            "prostatectomy": _date(psa, prostatectomy_oracle(psa, END)),
            "prostatectomy_nonstrict": _date(psa, prostatectomy_oracle(psa, END, strict=False)),
            "sensitivity": _date(psa, sensitivity_oracle(psa, END)),
        })
    return out


def auc_case(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(4, 120))
    y = rng.permutation(np.r_[[0, 1], rng.integers(0, 2, n - 2)])
    s = np.round(rng.normal(size=n) + 0.7 * y, 1)
    return s, y


def auc_cases():
    out = []
    for seed in range(N_AUC):
        s, y = auc_case(seed)
        out.append({"seed": seed, "auc": auc_pairs(s.tolist(), y.tolist())})
    return out


def svd_matrix(seed, n, m):
    return np.random.default_rng(2000 + seed).standard_normal((n, m))


def svd_cases():
    return [{"seed": i, "shape": [n, m], "k": k, "error": best_rank_k_error(svd_matrix(i, n, m), k)}
            for i, (n, m, k) in enumerate(SVD_SHAPES)]


def cohort_cases():
    from snow.synth import GeneratorConfig, generate
    sc = generate(GeneratorConfig(seed=0))
    aggs, positives, positives_sens = {}, 0, 0
    for p in sc.patients:
        e = sc.manifest.patients[p.patient_id]
        aggs[p.patient_id] = region_aggregates(e["regions"], e["scalars"]["total_cores_count"])
        end = p.treatment.end
        main = radiation_oracle if p.treatment.kind == "radiation" else prostatectomy_oracle
        sens = radiation_oracle if p.treatment.kind == "radiation" else sensitivity_oracle
        positives += main(p.psa, end) is not None
        positives_sens += sens(p.psa, end) is not None
    return {"aggregates": aggs, "positives": positives, "positives_sensitivity": positives_sens}


def main():
    OUT.parent.mkdir(exist_ok=True)
    doc = {"psa_end": END.isoformat(), "psa": psa_cases(), "auc": auc_cases(), "svd": svd_cases(),
           "cohort_seed0": cohort_cases()}
    OUT.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
