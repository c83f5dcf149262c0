"""Tour of the tensor core: forward ops, backward, and a gradient check.

Run:  python3 demos/01_autodiff_and_blocks.py
"""

import numpy as np

from ssmail import autodiff as ad
from ssmail import nn
from ssmail.autodiff import Tensor

# A tiny expression: loss = sum((tanh(x W))^2)
rng = np.random.default_rng(0)
x = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
w = Tensor(rng.uniform(-1, 1, (3, 2)), requires_grad=True)
loss = ad.sum_(ad.square(ad.tanh(ad.matmul(x, w))))
ad.backward(loss)
print("loss:", loss.item())
print("dL/dW:\n", np.round(w.grad, 4))

# Central-difference check of the same gradient.
def f(wv):
    return float(np.sum(np.tanh(x.data @ wv) ** 2))

eps = 1e-5
fd = np.zeros_like(w.data)
for i in range(w.data.size):
    pert = w.data.copy().ravel()
    pert[i] += eps
    hi = f(pert.reshape(w.shape))
    pert[i] -= 2 * eps
    lo = f(pert.reshape(w.shape))
    fd.ravel()[i] = (hi - lo) / (2 * eps)
print("max |backward - finite difference|:", np.abs(w.grad - fd).max())

# The building blocks share one parameter format.
mlp = nn.MLP(rng, [3, 16, 2])
out = mlp(Tensor(rng.uniform(-1, 1, (5, 3))))
print("\nMLP out shape:", out.shape, "| parameters:", mlp.params.n_params)

lstm = nn.init_lstm(rng, 4, 8)
h, c = nn.lstm_step(lstm, Tensor(np.zeros((2, 4))),
                    Tensor(np.zeros((2, 8))), Tensor(np.zeros((2, 8))))
print("LSTM from zero state stays at zero:", float(np.abs(h.data).max()))

# Adam drives a quadratic to its minimum.
p = nn.ParameterSet()
wq = p.add("w", np.zeros(1))
adam = nn.AdamState(p, learning_rate=0.1)
for _ in range(200):
    ad.backward(ad.sum_(ad.square(wq - 3.0)))
    nn.adam_step(adam, p)
print("Adam on (w-3)^2 after 200 steps: w =", wq.data[0])
