"""Finite-difference audit of every differentiable op plus a miniature
end-to-end model, printed as a table.  Useful when touching backward rules.

    python scripts/grad_audit.py
"""

import numpy as np

from carn import nn_ops as N
from carn import tensor as tt
from carn.gradcheck import grad_check, grad_check_params
from carn.model import CarnConfig, CarnModel
from carn.tensor import Tensor


def proj(out, r):
    return tt.mean(tt.mul(out, Tensor(r)))


def main():
    r = np.random.default_rng(0)
    a = r.standard_normal((3, 4))
    b = r.standard_normal((3, 4)) + 3.0
    ra = r.standard_normal((3, 4))
    x4 = r.standard_normal((1, 2, 4, 6))
    w = r.standard_normal((3, 2, 3, 3))
    bias = r.standard_normal(3)
    wt = r.standard_normal((2, 3, 3, 3))
    h = 3
    results = {}
    results["add"] = grad_check(lambda p, q: proj(tt.add(p, q), ra), [a, b])
    results["sub"] = grad_check(lambda p, q: proj(tt.sub(p, q), ra), [a, b])
    results["mul"] = grad_check(lambda p, q: proj(tt.mul(p, q), ra), [a, b])
    results["div"] = grad_check(lambda p, q: proj(tt.div(p, q), ra), [a, b])
    results["hypot"] = grad_check(lambda p, q: proj(tt.hypot(p, q), ra), [a + 2, b])
    results["sigmoid"] = grad_check(lambda p: proj(tt.sigmoid(p), ra), [a])
    results["tanh"] = grad_check(lambda p: proj(tt.tanh(p), ra), [a])
    results["power(0.3)"] = grad_check(lambda p: proj(tt.power(p, 0.3), ra),
                                       [np.abs(a) + 0.5])
    results["mean"] = grad_check(lambda p: tt.mean(p), [a])
    results["sum"] = grad_check(lambda p: tt.sum_(p), [a])

    probe = N.conv2d(Tensor(x4), Tensor(w), Tensor(bias), (1, 2), (1, 1)).data
    rc = r.standard_normal(probe.shape)
    results["conv2d"] = grad_check(
        lambda p, q, s: proj(N.conv2d(p, q, s, (1, 2), (1, 1)), rc), [x4, w, bias])
    probe = N.conv_transpose2d(Tensor(x4), Tensor(wt), None, (1, 2), (0, 1), (0, 1)).data
    rct = r.standard_normal(probe.shape)
    results["conv_transpose2d"] = grad_check(
        lambda p, q: proj(N.conv_transpose2d(p, q, None, (1, 2), (0, 1), (0, 1)), rct),
        [x4, wt])
    rl = r.standard_normal((3, 5))
    results["linear"] = grad_check(
        lambda p, q, s: proj(N.linear(p, q, s), rl),
        [r.standard_normal((3, 4)), r.standard_normal((5, 4)), r.standard_normal(5)])
    rx = r.standard_normal(x4.shape)
    results["prelu"] = grad_check(
        lambda p, s: proj(N.prelu(p, s), rx),
        [x4 + np.sign(x4) * 0.1, r.standard_normal(2) * 0.2 + 0.25])
    results["batchnorm(train)"] = grad_check(
        lambda p, g, be: proj(N.batchnorm2d(p, g, be, np.zeros(2), np.ones(2), True), rx),
        [x4, r.standard_normal(2) * 0.4 + 1.0, r.standard_normal(2) * 0.2])

    rlstm = r.standard_normal((1, 4, h))

    def lstm_fn(xx, p1, p2, p3, p4):
        out, _ = N.lstm_forward(xx, [(p1, p2, p3, p4)], h)
        return proj(out, rlstm)

    results["lstm"] = grad_check(lstm_fn, [
        r.standard_normal((1, 4, 2)),
        r.standard_normal((4 * h, 2)) * 0.4, r.standard_normal((4 * h, h)) * 0.4,
        r.standard_normal(4 * h) * 0.1, r.standard_normal(4 * h) * 0.1])

    for variant, seed in [("plain", 2), ("gated", 6)]:
        model = CarnModel(CarnConfig(variant=variant, seed=seed,
                                     enc_channels=(2,) * 6, freq_bins=64,
                                     lstm_hidden=2, lstm_layers=2),
                          dtype=np.float64)
        model.train()
        rr = np.random.default_rng(seed + 100)
        x = rr.standard_normal((1, 2, 3, 64))
        rp = rr.standard_normal((1, 2, 3, 64))
        results[f"end-to-end ({variant})"] = grad_check_params(
            lambda: proj(model.forward(Tensor(x)), rp), model.parameters(),
            eps_scale=1e-5, max_coords_per_param=4, seed=seed)

    width = max(len(k) for k in results)
    for name, err in results.items():
        print(f"{name:<{width}}  max rel err {err:.3e}")
    worst = max(results.values())
    print(f"\nworst: {worst:.3e}")


if __name__ == "__main__":
    main()
