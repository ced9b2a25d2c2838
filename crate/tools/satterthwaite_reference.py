"""Reference values for the Satterthwaite golden test.

Generates a fixed unbalanced random-intercept dataset, fits it by REML with
statsmodels, and computes Satterthwaite denominator df for two pairwise
contrasts the way lmerTest does: numerical Hessian of the REML deviance in
the variance parameters, numerical gradient of Var(c'beta), delta method.

    python3 tools/satterthwaite_reference.py crates/core/tests/fixtures
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import statsmodels.formula.api as smf

rng = np.random.default_rng(20240607)
rows = []
levels_idx = {"A": 0, "B": 1, "C": 2}
for i in range(14):
    u = rng.normal(0, 1.3)
    for c, effect in (("A", 0.0), ("B", 0.8), ("C", 1.5)):
        # drop some cells so the design is unbalanced
        keep = rng.uniform() > (0.1, 0.25, 0.4)[levels_idx[c]]
        if not keep:
            continue
        rows.append((f"i{i:02d}", c, round(10 + u + effect + rng.normal(0, 1.0), 6)))
df = pd.DataFrame(rows, columns=["item", "cond", "y"])

y = df["y"].to_numpy()
levels = ["A", "B", "C"]
codes = df["cond"].map({l: k for k, l in enumerate(levels)}).to_numpy()
# sum-to-zero coding
X = np.column_stack([np.ones(len(y)), (codes == 0).astype(float) - (codes == 2), (codes == 1).astype(float) - (codes == 2)]).astype(float)
items = sorted(df["item"].unique())
Z = np.array([[1.0 if it == j else 0.0 for j in items] for it in df["item"]])
n, p = X.shape

model = smf.mixedlm("y ~ C(cond, Sum)", df, groups=df["item"])
res = model.fit(reml=True, method="lbfgs", maxiter=10_000)
theta = np.array([float(res.cov_re.iloc[0, 0]), float(res.scale)])


def pieces(t):
    V = t[0] * Z @ Z.T + t[1] * np.eye(n)
    Vi = np.linalg.inv(V)
    XtViX = X.T @ Vi @ X
    beta = np.linalg.solve(XtViX, X.T @ Vi @ y)
    r = y - X @ beta
    dev = np.linalg.slogdet(V)[1] + np.linalg.slogdet(XtViX)[1] + r @ Vi @ r
    return dev, np.linalg.inv(XtViX)


def hessian(f, x, h):
    k = len(x)
    H = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            ei = np.eye(k)[i] * h[i]
            ej = np.eye(k)[j] * h[j]
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
    return H


def richardson(fn, x, rel):
    a = fn(x, rel * x)
    b = fn(x, 2 * rel * x)
    return (4 * a - b) / 3


# refine the optimum with Newton steps on the numerical derivatives
f = lambda t: pieces(t)[0]
for _ in range(20):
    g = np.array([(f(theta + e) - f(theta - e)) / (2 * e[k]) for k, e in enumerate(np.eye(2) * 1e-6 * theta)])
    H = richardson(lambda x, h: hessian(f, x, h), theta, 1e-4)
    theta = theta - np.linalg.solve(H, g)

H = richardson(lambda x, h: hessian(f, x, h), theta, 1e-4)
A = 2 * np.linalg.inv(H)

out = [f"sigma2_item\t{theta[0]:.10f}", f"sigma2_resid\t{theta[1]:.10f}"]
for name, c in (("A-B", np.array([0.0, 1.0, -1.0])), ("A-C", np.array([0.0, 2.0, 1.0]))):
    var = lambda t: c @ pieces(t)[1] @ c
    grad = []
    for k in range(2):
        e = np.eye(2)[k] * 1e-4 * theta[k]
        g1 = (var(theta + e) - var(theta - e)) / (2 * e[k])
        g2 = (var(theta + 2 * e) - var(theta - 2 * e)) / (4 * e[k])
        grad.append((4 * g1 - g2) / 3)
    grad = np.array(grad)
    v = var(theta)
    out.append(f"df {name}\t{2 * v * v / (grad @ A @ grad):.6f}")

dest = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
df.to_csv(dest / "satterthwaite_data.csv", index=False)
(dest / "satterthwaite_reference.tsv").write_text("\n".join(out) + "\n")
print("\n".join(out))
