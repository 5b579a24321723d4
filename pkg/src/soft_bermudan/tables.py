"""Published reference values and the settings that produce them."""
from __future__ import annotations

LAMBDAS = (0.1, 0.01, 0.001)

# Bermudan put, x0 = K = 100, r = 0.05, sigma = 0.1, T = 1, dates {0, .25, .5, .75}
PUT_SETTINGS = {
    "model": {"initial": 100.0, "rate": 0.05, "dividend": 0.0, "volatility": 0.1},
    "schedule": {"count": 4, "maturity": 1.0},
    "reward": {"kind": "put", "strike": 100.0},
}
PUT_LONGSTAFF_SCHWARTZ = 2.311
PUT_EUROPEAN = 1.928
# lambda -> (v^0, .., v^5) of policy improvement, then the TD price
PUT_POLICY_TRACE = {
    0.1: (1.928, 1.639, 1.647, 1.649, 1.647, 1.649),
    0.01: (1.928, 2.165, 2.179, 2.180, 2.180, 2.179),
    0.001: (1.928, 2.286, 2.298, 2.303, 2.302, 2.302),
}
PUT_TD = {0.1: 1.645, 0.01: 2.175, 0.001: 2.299}


def max_call_settings(dimension: int, x0: float) -> dict:
    """Symmetric max-call: r = 0.05, dividend 0.1, sigma = 0.2, rho = 0, K = 100, T = 3, 9 dates."""
    return {
        "model": {"initial": float(x0), "dimension": dimension, "rate": 0.05, "dividend": 0.1,
                  "volatility": 0.2, "correlation": 0.0},
        "schedule": {"count": 9, "maturity": 3.0},
        "reward": {"kind": "max_call", "strike": 100.0},
    }


# (lambda, x0) -> v^0..v^8 for the d = 2 max-call
MAX_CALL_POLICY_TRACE = {
    (0.1, 90): (6.656, 5.653, 5.697, 5.700, 5.717, 5.700, 5.704, 5.706, 5.705),
    (0.1, 100): (11.193, 11.494, 11.577, 11.583, 11.584, 11.581, 11.586, 11.583, 11.582),
    (0.1, 110): (16.929, 19.126, 19.284, 19.283, 19.293, 19.298, 19.293, 19.302, 19.301),
    (0.01, 90): (6.656, 7.578, 7.652, 7.667, 7.684, 7.680, 7.680, 7.679, 7.679),
    (0.01, 100): (11.193, 13.293, 13.497, 13.500, 13.501, 13.497, 13.501, 13.502, 13.502),
    (0.01, 110): (16.929, 20.661, 21.000, 20.966, 20.969, 20.967, 20.971, 20.976, 20.978),
    (0.001, 90): (6.656, 7.921, 8.027, 8.029, 8.030, 8.030, 8.030, 8.029, 8.031),
    (0.001, 100): (11.193, 13.635, 13.870, 13.849, 13.849, 13.850, 13.848, 13.850, 13.848),
    (0.001, 110): (16.929, 20.913, 21.310, 21.312, 21.313, 21.308, 21.299, 21.301, 21.302),
}

# (d, x0) -> (TD at lambda 0.1, 0.01, 0.001), (PI at lambda 0.1, 0.01, 0.001), deep-stopping benchmark
MAX_CALL_BY_DIMENSION = {
    (2, 90): ((5.694, 7.666, 8.020), (5.705, 7.679, 8.031), 8.074),
    (2, 100): ((11.580, 13.504, 13.849), (11.582, 13.502, 13.848), 13.899),
    (2, 110): ((19.256, 20.977, 21.296), (19.301, 20.978, 21.302), 21.349),
    (10, 90): ((22.900, 25.846, 26.298), (23.067, 25.996, 26.450), 26.240),
    (10, 100): ((35.052, 37.945, 38.371), (35.180, 38.157, 38.599), 38.337),
    (10, 110): ((47.536, 50.463, 50.960), (47.816, 50.838, 51.268), 50.886),
    (50, 90): ((50.279, 53.704, 54.161), (50.643, 54.454, 55.136), 54.057),
    (50, 100): ((65.683, 69.301, 69.830), (66.867, 70.645, 70.725), 69.736),
    (50, 110): ((81.575, 84.993, 85.606), (82.481, 86.214, 86.236), 85.463),
}

TOLERANCE = {"t1": 0.03, "t2": 0.15, "t3": {2: 0.15, 10: 0.5}}
