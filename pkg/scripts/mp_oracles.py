"""Arbitrary-precision reference values for the special functions and the prior.

Everything here is computed with mpmath at 40 significant digits directly from
the defining formulas, independently of the package's numerical paths, and
frozen into tests/data/oracle_values.json.  Rerun after changing a fixture:

    python scripts/mp_oracles.py
"""

import csv
import json
import pathlib

import mpmath as mp

mp.mp.dps = 40
DATA = pathlib.Path(__file__).resolve().parents[1] / "tests" / "data"


def load(name):
    with open(DATA / name) as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    coords = [(mp.mpf(r[0]), mp.mpf(r[1])) for r in body]
    X = [[mp.mpf(v) for v in r[3:]] for r in body]
    return coords, X, header[3:]


def rho(family, kappa, d, phi):
    u = d / phi
    if d == 0:
        return mp.mpf(1), mp.mpf(0)
    if family == "matern":
        c = mp.mpf(2) ** (1 - kappa) / mp.gamma(kappa)
        r = c * u**kappa * mp.besselk(kappa, u)
    elif family == "cauchy":
        r = (1 + u**2) ** (-kappa)
    elif family == "power_exponential":
        r = mp.e ** (-(u**kappa))
    else:
        r = 1 - mp.mpf(3) / 2 * u + u**3 / 2 if u <= 1 else mp.mpf(0)
    dr = mp.diff(lambda ph: rho_only(family, kappa, d, ph), phi)
    return r, dr


def rho_only(family, kappa, d, phi):
    u = d / phi
    if family == "matern":
        return mp.mpf(2) ** (1 - kappa) / mp.gamma(kappa) * u**kappa * mp.besselk(kappa, u)
    if family == "cauchy":
        return (1 + u**2) ** (-kappa)
    if family == "power_exponential":
        return mp.e ** (-(u**kappa))
    return 1 - mp.mpf(3) / 2 * u + u**3 / 2 if u <= 1 else mp.mpf(0)


def traces(coords, X, family, kappa, phi):
    n = len(coords)
    R = mp.matrix(n, n)
    dR = mp.matrix(n, n)
    for i in range(n):
        for j in range(n):
            d = mp.sqrt((coords[i][0] - coords[j][0]) ** 2 + (coords[i][1] - coords[j][1]) ** 2)
            R[i, j], dR[i, j] = rho(family, kappa, d, phi)
    Xm = mp.matrix(X)
    Ri = R**-1
    V = (Xm.T * Ri * Xm) ** -1
    P = mp.eye(n) - Xm * V * Xm.T * Ri
    Phi = dR * Ri * P
    return sum(Phi[i, i] for i in range(n)), sum((Phi * Phi)[i, i] for i in range(n))


def blocks(nu, n, p, t1, t2):
    nu, m = mp.mpf(nu), mp.mpf(n - p)
    tau = m + nu + 2
    A = nu**2 / ((nu - 2) * (nu - 4)) * (2 * t2 + t1**2)
    B = nu * m / tau
    C = (2 * m / (tau * nu) + 1) * A - (nu + 2) / (nu - 2) * t1**2
    d1 = mp.psi(1, (nu + m) / 2) - mp.psi(1, nu / 2)
    D = -(2 * m / nu * (tau + 2) / (tau * (tau - 2)) + d1)
    B11 = -2 * nu * m / ((nu - 2) * tau) * t1
    B12 = -m / ((tau - 2) * tau)
    C11 = m / ((nu - 2) * (tau - 2) * tau) * t1
    bracket = B * C * D + 16 * (B11 * C11 * B12 - B * C11**2) - 8 * B12**2 * C - B11**2 * D / 2
    return {
        "B": B, "C": C, "D": D, "B11": B11, "B12": B12, "C11": C11,
        "tau_nu": tau, "delta1": d1, "A_term": A, "bracket": bracket,
    }


def f(x):
    return float(x)


def main():
    out = {}
    out["trigamma"] = [[x, f(mp.psi(1, mp.mpf(x)))] for x in
                       [1e-3, 0.1, 0.5, 1.0, 2.5, 7.3, 19.9, 20.0, 100.0, 1234.5, 1e5, 1e6]]
    out["trigamma_diff"] = [[x, h, f(mp.psi(1, mp.mpf(x) + mp.mpf(h)) - mp.psi(1, mp.mpf(x)))] for x, h in
                            [(2.05, 49.5), (10.0, 0.5), (500.0, 3.0), (5e4, 49.5), (5e6, 4.5)]]
    out["bessel_k"] = [[v, x, f(mp.besselk(v, x))] for v, x in
                       [(0.7, 3.0), (0.3, 0.01), (1.2, 5.0), (2.7, 40.0), (0.0, 0.5), (4.5, 0.2)]]
    out["log_bessel_k"] = [[v, x, f(mp.log(mp.besselk(v, x)))] for v, x in [(1.3, 800.0), (0.5, 1000.0), (2.0, 720.5)]]

    # Matérn kappa = 1 on a 3x3 unit lattice, phi = 1.3
    pts = [(mp.mpf(i), mp.mpf(j)) for i in range(3) for j in range(3)]
    out["matern1_lattice"] = [[f(rho_only("matern", 1, mp.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2), mp.mpf("1.3")))
                               if a != b else 1.0 for b in pts] for a in pts]

    # Fisher blocks on the 10x10 lattice (cell centres of [0, 10]^2), exponential, phi = 2
    g = [mp.mpf(k) + mp.mpf("0.5") for k in range(10)]
    lat = [(a, b) for a in g for b in g]
    t1, t2 = traces(lat, [[1]] * 100, "matern", mp.mpf("0.5"), mp.mpf(2))
    bl = blocks(5, 100, 1, t1, t2)
    out["fisher_lattice"] = {"nu": 5.0, "n": 100, "p": 1, "tr_Phi": f(t1), "tr_Phi2": f(t2),
                             **{k: f(v) for k, v in bl.items()}}

    prior_cases = []
    for fname, family, kappa, phi, nu in [
        ("n10.csv", "matern", 0.5, 2.0, 5.0),
        ("n10.csv", "cauchy", 1.0, 1.2, 7.5),
        ("n10.csv", "matern", 1.5, 0.8, 4.6),
        ("n10_trend.csv", "power_exponential", 1.5, 2.0, 5.0),
        ("n10_trend.csv", "spherical", 0.5, 3.0, 12.0),
    ]:
        coords, X, _ = load(fname)
        t1, t2 = traces(coords, X, family, mp.mpf(kappa), mp.mpf(phi))
        bl = blocks(nu, len(coords), len(X[0]), t1, t2)
        prior_cases.append({"file": fname, "family": family, "kappa": kappa, "phi": phi, "nu": nu,
                            "tr_Phi": f(t1), "tr_Phi2": f(t2), "log_prior": f(mp.log(bl["bracket"]) / 2)})
    out["reference_prior"] = prior_cases

    with open(DATA / "oracle_values.json", "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
