"""Simulated surprisal table in the external input format.

Writes a CSV with no provenance lines, as a third-party model would, used
as the frozen fixture for the stats-only path:

    python3 tools/external_surprisals.py crates/cli/tests/fixtures/external_surprisals.csv
"""

import csv
import sys

import numpy as np

SEED = 20241015

# experiment -> (items, {condition: mean surprisal in bits}, excluded rows)
DESIGNS = {
    "uk2010e1": (60, {"T": 12.0, "A": 16.0}, [(3, "A"), (17, "A"), (41, "T")]),
    "k93": (40, {"BC": 6.0, "R": 12.0, "U": 12.3}, [(5, "U")]),
    "uk2010e2": (
        40,
        {"typical_most": 11.0, "typical_few": 11.3, "atypical_most": 15.0, "atypical_few": 15.1},
        [],
    ),
    "ito2016e1": (40, {"P": 5.0, "SR": 11.0, "FR": 14.0, "U": 14.4}, [(12, "FR"), (30, "SR")]),
    "om95e2_pronoun_final": (50, {"M": 8.0, "MM": 8.1}, []),
    "pilot": (24, {"X": 9.0, "Y": 10.0}, []),
}


def main(out):
    rng = np.random.default_rng(SEED)
    rows = []
    for exp, (n_items, means, excluded) in DESIGNS.items():
        item_effects = rng.normal(0.0, 2.0, n_items)
        for i in range(n_items):
            item = f"{i + 1}"
            for cond, mu in means.items():
                s = max(0.0, mu + item_effects[i] + rng.normal(0.0, 2.5))
                target = f"w{exp[:3]}{i + 1}{cond.lower()}"
                if (i + 1, cond) in excluded:
                    rows.append([exp, item, cond, target, "", "true", "oov_target"])
                else:
                    rows.append([exp, item, cond, target, f"{s:.4f}", "false", ""])
    with open(out, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["experiment", "item", "condition", "target", "surprisal", "excluded", "reason"])
        w.writerows(rows)


if __name__ == "__main__":
    main(sys.argv[1])
