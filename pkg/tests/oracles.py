"""Independent reference implementations used only by the tests.

Everything here trades speed for transparency: direct quadrature,
brute-force enumeration, and literal transcriptions, so the production
code has something honest to disagree with.
"""

import itertools

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, stats

M64 = (1 << 64) - 1


# ---------------------------------------------------------------- likelihoods

def stick_likelihood_quad(z, a, b, R):
    """Density of z for a source uniform on segment a-b plus Gaussian noise."""
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    R = np.asarray(R, dtype=float)
    Rinv = np.linalg.inv(R)
    norm = 1.0 / (2.0 * np.pi * np.sqrt(np.linalg.det(R)))

    def f(t):
        d = z - (a + t * (b - a))
        return norm * np.exp(-0.5 * d @ Rinv @ d)

    val, _ = integrate.quad(f, 0.0, 1.0, limit=200, epsabs=1e-14, epsrel=1e-11)
    return val


def _axis_factor_quad(t, e, sigma):
    """One axis of the separable interior model: uniform on [-e, e], then
    1D Gaussian noise with std sigma, evaluated at offset t."""
    def f(s):
        return np.exp(-0.5 * ((t - s) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))

    val, _ = integrate.quad(f, -e, e, limit=200, epsabs=1e-14, epsrel=1e-11)
    return val


def interior_likelihood_quad(z, center, v1, v2, e1, e2, R):
    """Numerical integral of the separable interior model.

    The model projects the noise onto the rectangle axes (sigma_i^2 =
    v_i' R v_i), so its double integral factorizes into two 1D integrals;
    the area normalization 1/(4 e1 e2) folds the per-axis 1/(2 e_i).
    """
    z = np.asarray(z, dtype=float)
    center = np.asarray(center, dtype=float)
    rel = z - center
    t1 = float(rel @ v1)
    t2 = float(rel @ v2)
    s1 = float(np.sqrt(v1 @ R @ v1))
    s2 = float(np.sqrt(v2 @ R @ v2))
    f1 = _axis_factor_quad(t1, e1, s1)
    f2 = _axis_factor_quad(t2, e2, s2)
    return f1 * f2 / (4.0 * e1 * e2)


def interior_likelihood_grid2d(z, center, v1, v2, e1, e2, R, n=160):
    """True joint integral over the rectangle (no separability assumption).

    Agrees with the separable model only when R is diagonal in the
    rectangle frame; used for the aligned-noise cross-check.
    """
    z = np.asarray(z, dtype=float)
    center = np.asarray(center, dtype=float)
    xg, wg = leggauss(n)
    u1 = xg * e1
    w1 = wg * e1
    u2 = xg * e2
    w2 = wg * e2
    pts = (center[None, None]
           + u1[:, None, None] * v1[None, None]
           + u2[None, :, None] * v2[None, None])
    d = pts - z[None, None]
    Rinv = np.linalg.inv(R)
    quad = np.einsum("abi,ij,abj->ab", d, Rinv, d)
    dens = np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(np.linalg.det(R)))
    return float((w1[:, None] * w2[None, :] * dens).sum() / (4.0 * e1 * e2))


# ----------------------------------------------------------------- rate model

def pois_gamma_integral(n, alpha, beta):
    """∫ Pois(n; g) Gamma(g; alpha, rate=beta) dg by adaptive quadrature."""
    mode = (alpha + n) / beta
    hi = mode + 40.0 * np.sqrt((alpha + n) / beta**2) + 40.0 / beta

    def f(g):
        return stats.poisson.pmf(n, g) * stats.gamma.pdf(g, alpha, scale=1.0 / beta)

    val, _ = integrate.quad(f, 0.0, hi, limit=500,
                            points=[mode], epsabs=1e-13, epsrel=1e-12)
    return val


# --------------------------------------------------------------------- GOSPA

def gospa_brute(truths, estimates, c, p, base_dist):
    """Exhaustive minimum over all partial matchings, alpha = 2 form.

    Returns the p-th-power objective assembled exactly the way the
    production metric assembles it, so equality can be checked without
    tolerance.
    """
    n, m = len(truths), len(estimates)
    cp = c ** p
    half = 0.5 * cp
    dist = np.array([[base_dist(t, e) for e in estimates] for t in truths],
                    dtype=float).reshape(n, m)

    best = None
    for k in range(min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                pairs = [(r, cl) for r, cl in zip(rows, cols) if dist[r, cl] < c]
                loc = sum(dist[r, cl] ** p for r, cl in pairs)
                total = loc + half * ((n - len(pairs)) + (m - len(pairs)))
                if best is None or total < best:
                    best = total
    return best ** (1.0 / p)


# -------------------------------------------------------------- associations

def associations_brute(g, targets):
    """All admissible joint cluster assignments as canonical frozensets.

    Every candidate cluster takes one of its gated targets or NEW, birth
    clusters take NEW, clutter clusters take CLUTTER, and no target is
    used twice.
    """
    targets = set(targets)
    cluster_ids = sorted(set(g.candidates) | set(g.birth_clusters))
    base = {c: "clutter" for c in g.clutter_clusters}

    options = []
    for c in cluster_ids:
        if c in g.birth_clusters:
            options.append((c, ["new"]))
        else:
            opts = [t for t in g.candidates[c] if t in targets]
            opts.append("new")
            options.append((c, opts))

    out = set()
    for combo in itertools.product(*(opts for _, opts in options)):
        used = [t for t in combo if not isinstance(t, str)]
        if len(used) != len(set(used)):
            continue
        assignment = dict(base)
        assignment.update({c: t for (c, _), t in zip(options, combo)})
        out.add(frozenset(assignment.items()))
    return out


# ----------------------------------------------------------------------- rng

def splitmix64_ref(state):
    """Reference splitmix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return state, (z ^ (z >> 31)) & M64
