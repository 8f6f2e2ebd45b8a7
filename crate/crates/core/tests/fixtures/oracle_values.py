"""Independent numpy evaluation of reference values frozen into the Rust tests.

Run: python3 oracle_values.py > oracle_values.json
"""
import json
import numpy as np

H = 40.0
NA = 8
lam0 = 10 ** (-50 / 10)
xi = 20.0
alpha_si = 10 ** (-110 / 10)
sigma2 = 10 ** (-79 / 10) / 1000.0
wavelength = 0.09
pk = 0.01
depot = np.array([1700.0, 2900.0])
target = np.array([1900.0, 2800.0])
devices = np.array([[2200, 3100], [2000, 2900], [2200, 2650], [1800, 3100], [1700, 2600]], float)


def dist(q, g):
    return np.sqrt(H ** 2 + np.sum((q - g) ** 2))


def steer(q, g):
    c = H / dist(q, g)
    return np.exp(-1j * np.pi * np.arange(NA) * c)


def h_si():
    m = np.zeros((NA, NA), complex)
    for p in range(NA):
        for q in range(NA):
            d = wavelength / 2 * (NA + (q + 1) - (p + 1))
            m[p, q] = np.sqrt(alpha_si) * np.exp(1j * 2 * np.pi * d / wavelength)
    return m


def tx(q, p):
    return np.sqrt(p / NA) * steer(q, target)


def h_r(q):
    a = steer(q, target)
    return np.sqrt(lam0 * xi * dist(q, target) ** -4) * np.outer(a, a.conj())


def exact_comm(q, p, k):
    x = tx(q, p)
    interf = np.linalg.norm((h_r(q) + h_si()) @ x) ** 2
    return lam0 * pk * NA * dist(q, devices[k]) ** -2 / (interf + NA * sigma2)


def exact_radar(q, p, k):
    x = tx(q, p)
    echo = np.linalg.norm(h_r(q) @ x) ** 2
    dev = 0.0 if k is None else lam0 * pk * dist(q, devices[k]) ** -2
    return echo / (dev + np.linalg.norm(h_si() @ x) ** 2 + NA * sigma2)


lam_si = alpha_si * NA
lam_t = lam0 * xi * NA
lam_k = lam0 * pk


def comm_lb(q, p, k):
    return lam_k * dist(q, devices[k]) ** -2 / (
        (np.sqrt(lam_t) * dist(q, target) ** -2 + np.sqrt(lam_si)) ** 2 * p + sigma2)


def radar_lb(q, p, k):
    extra = 0.0 if k is None else lam_k * dist(q, devices[k]) ** -2
    return lam_t * p * dist(q, target) ** -4 / (extra + lam_si * p + sigma2)


out = {
    "sigma2_w": sigma2,
    "lambda_si": lam_si,
    "lambda_t": lam_t,
    "lambda_k": lam_k,
    "distance_500": float(np.sqrt(H ** 2 + 500.0 ** 2)),
    "psi1_no_data": 25.03 * 5120 ** -0.55,
    "psi2_no_data": 0.82 * 800 ** -0.22,
    "exact_comm_depot_k1_p004": exact_comm(depot, 0.04, 0),
    "exact_radar_depot_k1_p004": exact_radar(depot, 0.04, 0),
    "exact_radar_depot_none_p004": exact_radar(depot, 0.04, None),
    "comm_lb_depot_k1_p004": comm_lb(depot, 0.04, 0),
    "radar_lb_depot_none_p004": radar_lb(depot, 0.04, None),
    "radar_lb_depot_k1_p004": radar_lb(depot, 0.04, 0),
    "radar_ceiling_depot": lam_t * dist(depot, target) ** -4 / lam_si,
    "exact_comm_over_target_k2_p002": exact_comm(target, 0.02, 1),
    "exact_radar_over_target_k2_p002": exact_radar(target, 0.02, 1),
}
print(json.dumps(out, indent=2))
