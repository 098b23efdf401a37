"""Show the time embedding and verify the network's gradients numerically.

The sinusoidal embedding turns a signed tick difference into a smooth
fixed-width vector; nearby deltas get nearby codes, and the sign lives in
the sine channels. The second half builds a small TransitionNet, runs one
backward pass, and compares every parameter gradient against central
finite differences.
"""

import numpy as np

from edgereid.nn import cross_entropy, gradient_check, sinusoidal_embed
from edgereid.transition import TransitionNet, TransitionNetConfig


def show_embedding():
    print("sinusoidal embedding, dim=8, max period 10000")
    for delta in (-50, -1, 0, 1, 50, 400):
        vec = sinusoidal_embed(np.array([float(delta)]), 8, 10000.0)[0]
        cells = " ".join(f"{v:+.3f}" for v in vec)
        print(f"  delta {delta:+5d} -> [{cells}]")
    print()


def check_gradients():
    config = TransitionNetConfig(num_cameras=4, embed_dim=8, num_blocks=2)
    rng = np.random.default_rng(7)
    model = TransitionNet(config, rng)

    cams = rng.integers(0, 4, size=4)
    t_query = rng.integers(0, 100, size=4).astype(float)
    t_target = t_query + rng.integers(-200, 201, size=4)
    targets = rng.integers(0, 4, size=4)

    def loss_fn():
        logits = model.forward(cams, t_query, t_target, train=True)
        return cross_entropy(logits, targets)[0]

    model.zero_grads()
    logits = model.forward(cams, t_query, t_target, train=True)
    loss, glogits = cross_entropy(logits, targets)
    model.backward(glogits)

    report = gradient_check(loss_fn, model.named_params())
    name, err = report.worst()
    print(f"gradient check on a 4-camera model, loss {loss:.4f}")
    print(f"  {len(report.errors)} parameter tensors, worst {name}: "
          f"rel err {err:.2e} -> {'pass' if report.passed else 'FAIL'}")


if __name__ == "__main__":
    show_embedding()
    check_gradients()
