"""Shared builders for the test modules."""
import numpy as np

from collabhar.ingest import LabelClass, LabelInterval, SessionData


def make_session(n=500, rate=50.0, labels=None, agent="P1", group=1, day=1, rng=None, valid=None):
    """Small hand-built session with all three channels."""
    rng = rng or np.random.default_rng(0)
    if labels is None:
        labels = [LabelInterval(0.0, n / rate, LabelClass.A3)]
    return SessionData(
        agent_id=agent,
        group_id=group,
        day_index=day,
        sample_rate=rate,
        valid=np.ones(n, dtype=bool) if valid is None else valid,
        potential_mv=rng.normal(20.0, 0.5, n),
        accel_wrist=rng.normal(0.0, 0.3, (n, 3)) + [0.0, 0.0, 1.0],
        accel_calf=rng.normal(0.0, 0.3, (n, 3)) + [0.0, 0.0, 1.0],
        labels=list(labels),
    )


def fd_gradient_error(rng, l2=1e-3, h=1e-6):
    """Relative error between analytic and central-difference loss gradients
    on one random small instance."""
    from collabhar.classify import loss_gradient, weighted_loss

    n, d, k = int(rng.integers(3, 12)), int(rng.integers(1, 5)), int(rng.integers(2, 5))
    X = rng.normal(size=(n, d))
    Y = np.eye(k)[rng.integers(0, k, n)]
    w = rng.uniform(0.1, 3.0, n)
    W = rng.normal(size=(k, d))
    b = rng.normal(size=k)
    dW, db = loss_gradient(W, b, X, Y, w, l2)
    analytic = np.concatenate([dW.ravel(), db])
    params = np.concatenate([W.ravel(), b])

    def total(p):
        return weighted_loss(p[: k * d].reshape(k, d), p[k * d:], X, Y, w, l2).sum()

    numeric = np.empty_like(params)
    for i in range(len(params)):
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        numeric[i] = (total(up) - total(dn)) / (2 * h)
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)


def separable_toy(rng, n=60):
    """1-D set with x < 0 in class "neg" and x > 0 in class "pos"."""
    x = np.concatenate([-rng.uniform(0.05, 2.0, n // 2), rng.uniform(0.05, 2.0, n - n // 2)])
    y = np.array(["neg"] * (n // 2) + ["pos"] * (n - n // 2))
    return x[:, None], y
