"""Pure-Python twins of the routines in ``_kernels.pyx``.

Row and column updates are vectorised with numpy, but each element sees the
same multiply/subtract sequence as the compiled loop, so results match bit
for bit (the extension is built with FP contraction disabled).
"""
import math

import numpy as np


def jacobi_eigh(a, max_sweeps=100):
    n = a.shape[0]
    v = np.eye(n, dtype=np.float64)
    for sweep in range(1, max_sweeps + 1):
        sm = 0.0
        for p in range(n - 1):
            for x in a[p, p + 1:].tolist():
                sm = sm + abs(x)
        if sm == 0.0:
            return a.diagonal().copy(), v, sweep - 1
        tresh = 0.2 * sm / float(n * n) if sweep < 4 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(a[p, q])
                g = 100.0 * abs(apq)
                app = abs(float(a[p, p]))
                aqq = abs(float(a[q, q]))
                if sweep > 4 and app + g == app and aqq + g == aqq:
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                elif abs(apq) > tresh:
                    h = float(a[q, q]) - float(a[p, p])
                    if abs(h) + g == abs(h):
                        t = apq / h
                    else:
                        theta = 0.5 * h / apq
                        t = 1.0 / (abs(theta) + math.sqrt(1.0 + theta * theta))
                        if theta < 0.0:
                            t = -t
                    c = 1.0 / math.sqrt(1.0 + t * t)
                    s = t * c
                    x = a[:, p].copy()
                    y = a[:, q].copy()
                    a[:, p] = c * x - s * y
                    a[:, q] = s * x + c * y
                    x = a[p, :].copy()
                    y = a[q, :].copy()
                    a[p, :] = c * x - s * y
                    a[q, :] = s * x + c * y
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    x = v[:, p].copy()
                    y = v[:, q].copy()
                    v[:, p] = c * x - s * y
                    v[:, q] = s * x + c * y
    return a.diagonal().copy(), v, -1
