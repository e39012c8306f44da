"""Does backpropagation through time agree with finite differences?

We build a small two-layer model, pick one caption, and compare every entry of
the analytic gradient with a central difference. The numerical side runs the
forward pass in long double so that rounding noise stays far below the step.

    python3 demos/01_gradient_check.py
"""

import numpy as np

from videodesc.gradcheck import gradient_pair, random_instance
from videodesc.numerics import relative_error

p, v, tokens = random_instance(seed=0, visual_dim=8, hidden=12, vocab_size=15, length=5)
print(f"{p.theta.size} parameters, caption token ids {tokens}")

analytic, numeric = gradient_pair(p, v, tokens)
err = relative_error(analytic, numeric)

# Break the error down by parameter block so that a bug in one gate shows up by name.
offset = 0
for name, shape in p.layout:
    size = int(np.prod(shape))
    block = err[offset:offset + size]
    print(f"  {name:<14} {str(shape):<10} max rel err {block.max():.2e}")
    offset += size

print(f"overall max relative error {err.max():.2e} (tolerance 1e-4)")
