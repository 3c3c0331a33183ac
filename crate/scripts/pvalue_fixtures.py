"""Reference p-values at 50 digits for the analysis tests.

Writes crates/core/tests/fixtures/pvalues.json. Run once; output is committed.
"""

import json
from pathlib import Path

from mpmath import betainc, gammainc, inf, mp, nsum, exp

mp.dps = 50

F_CASES = [(2.0, 2, 9), (2.4, 2, 9), (0.5, 3, 20), (4.26, 2, 27), (12.0, 1, 5), (1.0, 5, 5), (0.01, 2, 600), (30.0, 2, 597)]
CHI2_CASES = [(4.571428571428571, 2), (0.5, 1), (10.0, 2), (3.0, 5), (25.0, 2), (60.0, 10), (0.001, 3)]
KS_CASES = [0.3, 0.5, 0.8, 1.0, 1.36, 1.63, 2.0, 3.0]
BETA_CASES = [(0.5, 0.5, 0.3), (2.0, 3.0, 0.4), (10.0, 1.5, 0.9), (1.0, 4.5, 0.05), (50.0, 50.0, 0.5)]
GAMMA_CASES = [(0.5, 0.2), (1.0, 1.0), (3.0, 2.5), (10.0, 15.0), (25.0, 20.0)]


def f_sf(f, d1, d2):
    x = mp.mpf(d2) / (d2 + d1 * mp.mpf(f))
    return betainc(mp.mpf(d2) / 2, mp.mpf(d1) / 2, 0, x, regularized=True)


def chi2_sf(x, k):
    return gammainc(mp.mpf(k) / 2, mp.mpf(x) / 2, inf, regularized=True)


def kolmogorov_sf(lam):
    lam = mp.mpf(lam)
    return 2 * nsum(lambda j: (-1) ** (j - 1) * exp(-2 * j * j * lam * lam), [1, inf])


def main():
    out = {
        "f_sf": [{"f": f, "df1": a, "df2": b, "p": float(f_sf(f, a, b))} for f, a, b in F_CASES],
        "chi2_sf": [{"x": x, "df": k, "p": float(chi2_sf(x, k))} for x, k in CHI2_CASES],
        "kolmogorov_sf": [{"lambda": l, "p": float(kolmogorov_sf(l))} for l in KS_CASES],
        "beta_inc": [
            {"a": a, "b": b, "x": x, "value": float(betainc(a, b, 0, x, regularized=True))} for a, b, x in BETA_CASES
        ],
        "gamma_p": [{"a": a, "x": x, "value": float(gammainc(a, 0, x, regularized=True))} for a, x in GAMMA_CASES],
    }
    path = Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/pvalues.json"
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
