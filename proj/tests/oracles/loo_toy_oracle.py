"""Leave-one-out by hand for the 6-point toy set used in the estimator tests.

One feature; class 0 = {0.0, 1.0, 2.6}, class 1 = {3.0, 4.0, 5.0}. The point
2.6 sits between the classes. Classifier: nearest shrunken centroids with
delta = 0 (class-frequency priors, pooled sd + median offset).
"""
import math

xs = [0.0, 1.0, 2.6, 3.0, 4.0, 5.0]
ys = [0, 0, 0, 1, 1, 1]


def nsc_predict(train_x, train_y, x):
    n = len(train_x)
    classes = sorted(set(train_y))
    cent = {k: sum(v for v, c in zip(train_x, train_y) if c == k) / train_y.count(k) for k in classes}
    ss = sum((v - cent[c]) ** 2 for v, c in zip(train_x, train_y))
    s = math.sqrt(ss / (n - len(classes)))
    scale = s + s  # s0 = median over a single feature = s
    best, best_score = None, None
    for k in classes:
        score = (x - cent[k]) ** 2 / scale**2 - 2 * math.log(train_y.count(k) / n)
        if best_score is None or score < best_score:
            best, best_score = k, score
    return best


preds = []
for j in range(6):
    tx = xs[:j] + xs[j + 1:]
    ty = ys[:j] + ys[j + 1:]
    preds.append(nsc_predict(tx, ty, xs[j]))
print("predictions", preds)
print("misclassified", sum(p != y for p, y in zip(preds, ys)))


# e1 / e2 on the 1 x 6 matrix X = xs with q = 1. The matrix has rank 1, so
# an exact factorization is X = a * b with b = xs / a for some a != 0. e1
# runs leave-one-out on b; e2 refits a on five columns and encodes the held
# out column by least squares, b_j = x_j / a. Either way every fold sees the
# features scaled by one nonzero constant, so the predictions are those of
# plain leave-one-out for any a. Checked here for several a values.
for a in (0.37, -2.1, 5.0):
    b = [v / a for v in xs]
    e1 = []
    for j in range(6):
        e1.append(nsc_predict(b[:j] + b[j + 1:], ys[:j] + ys[j + 1:], b[j]))
    e2 = []
    for j, a_fold in enumerate((a, 1.3 * a, -a, 0.5 * a, 2 * a, -3 * a)):
        tb = [v / a_fold for k, v in enumerate(xs) if k != j]
        e2.append(nsc_predict(tb, ys[:j] + ys[j + 1:], xs[j] / a_fold))
    print("a", a, "e1", e1, "e2", e2)

# margins of the closest calls, to bound how far an inexact factorization may
# drift before a prediction flips
for j in range(6):
    tx, ty = xs[:j] + xs[j + 1:], ys[:j] + ys[j + 1:]
    n = 5
    cent = {k: sum(v for v, c in zip(tx, ty) if c == k) / ty.count(k) for k in (0, 1)}
    s = math.sqrt(sum((v - cent[c]) ** 2 for v, c in zip(tx, ty)) / (n - 2))
    sc = [(xs[j] - cent[k]) ** 2 / (2 * s) ** 2 - 2 * math.log(ty.count(k) / n) for k in (0, 1)]
    print("sample", j, "score gap", abs(sc[0] - sc[1]))
