"""Independent key-rate oracle.

Computes the asymptotic trusted-detector heterodyne secret fraction two ways:
closed-form symplectic eigenvalues, and brute force from the full covariance
matrix of the entanglement-based model (Alice EPR mode, channel output,
detector inefficiency/electronic-noise EPR pair, heterodyne conditioning).
"""
import sys
import numpy as np


def g(x):
    x = max(x, 0.0)
    if x == 0.0:
        return 0.0
    return (x + 1) * np.log2(x + 1) - x * np.log2(x)


def closed_form(va, t, xi, eta, eps, beta):
    v = va + 1
    chi_line = 1 / t - 1 + xi
    chi_het = (1 + (1 - eta) + 2 * eps) / eta
    chi_tot = chi_line + chi_het / t
    i_ab = np.log2((v + chi_tot) / (1 + chi_tot))
    a = v * v * (1 - 2 * t) + 2 * t + t * t * (v + chi_line) ** 2
    b = t * t * (v * chi_line + 1) ** 2
    l12 = [np.sqrt((a + s * np.sqrt(a * a - 4 * b)) / 2) for s in (1, -1)]
    den = (t * (v + chi_tot)) ** 2
    c = (a * chi_het**2 + b + 1 + 2 * chi_het * (v * np.sqrt(b) + t * (v + chi_line)) + 2 * t * (v * v - 1)) / den
    d = ((v + np.sqrt(b) * chi_het) / (t * (v + chi_tot))) ** 2
    l34 = [np.sqrt((c + s * np.sqrt(c * c - 4 * d)) / 2) for s in (1, -1)]
    chi_be = sum(g((l - 1) / 2) for l in l12) - sum(g((l - 1) / 2) for l in l34)
    return i_ab, chi_be, beta * i_ab - chi_be


def omega(n):
    w = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(n), w)


def symplectic_eigs(gam):
    n = gam.shape[0] // 2
    ev = np.linalg.eigvals(1j * omega(n) @ gam)
    return np.sort(np.abs(ev))[::2]


def brute(va, t, xi, eta, eps, beta):
    v = va + 1
    i2, z = np.eye(2), np.diag([1.0, -1.0])
    b_var = t * (v + 1 / t - 1 + xi)
    c_ab = np.sqrt(t * (v * v - 1))
    nv = 1 + 2 * eps / (1 - eta)
    c_f = np.sqrt(nv * nv - 1)
    # mode order: A, B1, F0, G
    gam = np.zeros((8, 8))
    gam[0:2, 0:2] = v * i2
    gam[0:2, 2:4] = gam[2:4, 0:2] = c_ab * z
    gam[2:4, 2:4] = b_var * i2
    gam[4:6, 4:6] = nv * i2
    gam[6:8, 6:8] = nv * i2
    gam[4:6, 6:8] = gam[6:8, 4:6] = c_f * z
    # mutual information: Bob heterodynes B1 after detector; Alice heterodynes A
    s = np.eye(8)
    se, ce = np.sqrt(eta), np.sqrt(1 - eta)
    s[2:4, 2:4] = se * i2
    s[2:4, 4:6] = ce * i2
    s[4:6, 2:4] = -ce * i2
    s[4:6, 4:6] = se * i2
    gp = s @ gam @ s.T
    # per-quadrature measured variance (up to the common 1/2 factor of heterodyne)
    vb = gp[2, 2] + 1
    vb_given_a = vb - gp[2, 0] ** 2 / (gp[0, 0] + 1)
    i_ab = np.log2(vb / vb_given_a)
    s_e = sum(g((l - 1) / 2) for l in symplectic_eigs(gam[0:4, 0:4]))
    idx = [0, 1, 4, 5, 6, 7]
    gx = gp[np.ix_(idx, idx)]
    sxb = gp[np.ix_(idx, [2, 3])]
    gb = gp[2:4, 2:4]
    cond = gx - sxb @ np.linalg.inv(gb + np.eye(2)) @ sxb.T
    s_cond = sum(g((l - 1) / 2) for l in symplectic_eigs(cond))
    chi_be = s_e - s_cond
    return i_ab, chi_be, beta * i_ab - chi_be


if __name__ == "__main__":
    op_point = (1.16, 1.0, 0.0328, 0.5, 0.024, 0.95)
    np.set_printoptions(precision=17)
    print("operating point closed:", repr(closed_form(*op_point)))
    print("operating point brute: ", repr(brute(*op_point)))
    worst = 0.0
    for va in np.linspace(0.5, 20, 5):
        for t in np.linspace(0.05, 1.0, 5):
            for xi in np.linspace(0.0, 0.1, 5):
                p = (va, t, xi, 0.5, 0.024, 0.95)
                a, b = closed_form(*p), brute(*p)
                for x, y in zip(a, b):
                    worst = max(worst, abs(x - y) / max(abs(y), 1e-300))
    print("worst rel diff:", worst)
    for va in (1.16, 1.0):
        print(va, [round(closed_form(va, 10 ** (-0.02 * d), 0.0328, 0.5, 0.024, 0.95)[2], 6) for d in range(0, 81, 10)])
