"""Two-pass (column then row) standardization with population sd, plain numpy."""
import math
import numpy as np

X = np.array([[1, 2, 3], [4, 5, 6], [9, 7, 8]], dtype=float)
C = (X - X.mean(axis=0)) / X.std(axis=0)
R = (C - C.mean(axis=1, keepdims=True)) / C.std(axis=1, keepdims=True)
np.set_printoptions(precision=17)
for row in R:
    print(", ".join(repr(float(v)) for v in row))
print("ln 300 =", repr(math.log(300.0)))
