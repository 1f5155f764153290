"""Independent reference implementations used as test oracles."""
import numpy as np

from msth.network import backward


def finite_difference_check(model, x, y, loss_kind, h=1e-6):
    """Largest relative error between analytic and central-difference gradients."""
    _, g = backward(model, x, y, loss_kind)
    worst = 0.0
    for li, layer in enumerate(model.layers):
        for param, grad in ((layer.W, g.dW[li]), (layer.b, g.db[li])):
            it = np.nditer(param, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = param[idx]
                param[idx] = old + h
                lp, _ = backward(model, x, y, loss_kind)
                param[idx] = old - h
                lm, _ = backward(model, x, y, loss_kind)
                param[idx] = old
                fd = (lp - lm) / (2 * h)
                an = grad[idx]
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst


def random_smooth_case(rng, seed, kink_margin=1e-3):
    """Random small network and batch whose ReLU pre-activations all sit away from the kink.

    Biases are drawn at random so dead upstream units do not pin downstream
    pre-activations at exactly zero.
    """
    from msth.network import build_model

    depth = int(rng.integers(1, 4))
    sizes = [int(rng.integers(1, 5)) for _ in range(depth)] + [int(rng.integers(2, 4))]
    acts = [str(rng.choice(["relu", "tanh", "identity"])) for _ in range(depth - 1)] + ["identity"]
    m = build_model(sizes, acts, seed=seed)
    for layer in m.layers:
        layer.b = rng.normal(scale=0.5, size=layer.b.shape)
    while True:
        x = rng.normal(size=(4, sizes[0]))
        h, near_kink = x, False
        for layer in m.layers:
            z = h @ layer.W.T + layer.b
            if layer.activation == "relu" and np.min(np.abs(z)) < kink_margin:
                near_kink = True
            h = np.maximum(z, 0.0) if layer.activation == "relu" else (np.tanh(z) if layer.activation == "tanh" else z)
        if not near_kink:
            return m, x, sizes


def reference_sgd_mlp(Ws, bs, X, Y, lr, wd, steps, batch):
    """Plain-MLP trainer: relu hidden layers, identity output, half-SSE/B loss, SGD with L2."""
    Ws = [w.copy() for w in Ws]
    bs = [b.copy() for b in bs]
    for t in range(steps):
        lo = (t * batch) % len(X)
        xb, yb = X[lo:lo + batch], Y[lo:lo + batch]
        hs, zs = [xb], []
        for i, (W, b) in enumerate(zip(Ws, bs)):
            z = hs[-1] @ W.T + b
            zs.append(z)
            hs.append(z if i == len(Ws) - 1 else np.maximum(z, 0.0))
        delta = (hs[-1] - yb) / xb.shape[0]
        grads = [None] * len(Ws)
        for i in range(len(Ws) - 1, -1, -1):
            dz = delta * (np.ones_like(zs[i]) if i == len(Ws) - 1 else (zs[i] > 0).astype(np.float64))
            grads[i] = (dz.T @ hs[i], np.sum(dz, axis=0))
            delta = dz @ Ws[i]
        for i in range(len(Ws)):
            Ws[i] -= lr * (grads[i][0] + wd * Ws[i])
            bs[i] -= lr * (grads[i][1] + wd * bs[i])
    return Ws, bs
