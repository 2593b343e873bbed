"""Independent reference implementations used to check the library.

Everything here is written the slow, obvious way (per-pixel loops,
explicit enumeration, closed forms) and stays independent of the code
paths under test.
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# image oracles

def naive_histogram(pixels, levels):
    counts = [0] * levels
    for row in pixels:
        for v in row:
            counts[int(v)] += 1
    cdf = []
    run = 0
    for c in counts:
        run += c
        cdf.append(run)
    cdf_min = next(cdf[i] for i in range(levels) if counts[i] > 0)
    return counts, cdf, cdf_min


def naive_equalize(pixels, levels, grid_rows, grid_cols, literal_total=None):
    """Per-patch CDF-lookup equalization, pixel by pixel."""
    pixels = np.asarray(pixels)
    rows, cols = pixels.shape
    out = np.zeros_like(pixels)
    rb = np.linspace(0, rows, grid_rows + 1).astype(int)
    cb = np.linspace(0, cols, grid_cols + 1).astype(int)
    for gi in range(grid_rows):
        for gj in range(grid_cols):
            patch = pixels[rb[gi]:rb[gi + 1], cb[gj]:cb[gj + 1]]
            counts, cdf, cdf_min = naive_histogram(patch, levels)
            total = literal_total if literal_total is not None else patch.size
            denom = total - cdf_min
            for r in range(rb[gi], rb[gi + 1]):
                for c in range(cb[gj], cb[gj + 1]):
                    if denom <= 0:
                        out[r, c] = 0
                    else:
                        mapped = (cdf[int(pixels[r, c])] - cdf_min) / denom * (levels - 1)
                        out[r, c] = min(levels - 1, max(0, int(math.floor(mapped + 0.5))))
    return out


# ---------------------------------------------------------------------------
# gradient / tensor oracles

def naive_partials(img):
    """Central differences with one-sided borders, per pixel."""
    img = np.asarray(img, dtype=float)
    rows, cols = img.shape
    du = np.zeros_like(img)
    dv = np.zeros_like(img)
    for r in range(rows):
        for c in range(cols):
            if rows == 1:
                du[r, c] = 0.0
            elif r == 0:
                du[r, c] = img[1, c] - img[0, c]
            elif r == rows - 1:
                du[r, c] = img[r, c] - img[r - 1, c]
            else:
                du[r, c] = (img[r + 1, c] - img[r - 1, c]) / 2.0
            if cols == 1:
                dv[r, c] = 0.0
            elif c == 0:
                dv[r, c] = img[r, 1] - img[r, 0]
            elif c == cols - 1:
                dv[r, c] = img[r, c] - img[r, c - 1]
            else:
                dv[r, c] = (img[r, c + 1] - img[r, c - 1]) / 2.0
    return du, dv


def naive_directional(img, theta):
    du, dv = naive_partials(img)
    return math.cos(theta) * du + math.sin(theta) * dv


def naive_windowed_product(a, b, weights):
    """Double-loop windowed correlation of a*b with zero padding."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    weights = np.asarray(weights, float)
    rows, cols = a.shape
    wh, ww = weights.shape
    oh, ow = wh // 2, ww // 2
    prod = a * b
    out = np.zeros_like(prod)
    for r in range(rows):
        for c in range(cols):
            acc = 0.0
            for i in range(wh):
                for j in range(ww):
                    rr, cc = r + i - oh, c + j - ow
                    if 0 <= rr < rows and 0 <= cc < cols:
                        acc += weights[i, j] * prod[rr, cc]
            out[r, c] = acc
    return out


# ---------------------------------------------------------------------------
# eigenvalue oracles (for squared-singular-value checks)

def eig_sym_2x2(m):
    a, b, d = m[0, 0], m[0, 1], m[1, 1]
    t = a + d
    disc = math.sqrt(max((a - d) ** 2 + 4 * b * b, 0.0))
    return sorted([(t + disc) / 2.0, (t - disc) / 2.0], reverse=True)


def eig_sym_3x3(m):
    """Closed-form roots of the characteristic polynomial (trig method)."""
    p1 = m[0, 1] ** 2 + m[0, 2] ** 2 + m[1, 2] ** 2
    q = (m[0, 0] + m[1, 1] + m[2, 2]) / 3.0
    if p1 == 0.0:
        return sorted([m[0, 0], m[1, 1], m[2, 2]], reverse=True)
    p2 = sum((m[i, i] - q) ** 2 for i in range(3)) + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    b = (np.asarray(m, float) - q * np.eye(3)) / p
    r = np.linalg.det(b) / 2.0
    r = min(1.0, max(-1.0, r))
    phi = math.acos(r) / 3.0
    e1 = q + 2.0 * p * math.cos(phi)
    e3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    return sorted([e1, e2, e3], reverse=True)


def eig_sym_deflate(m, k=None, iters=20000, tol=1e-14):
    """Top-k eigenvalues of a symmetric PSD matrix by power iteration with
    Hotelling deflation."""
    s = np.asarray(m, dtype=float).copy()
    n = s.shape[0]
    if k is None:
        k = n
    rng = np.random.default_rng(12345)
    out = []
    for _ in range(k):
        v = rng.normal(size=n)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _i in range(iters):
            w = s @ v
            norm = np.linalg.norm(w)
            if norm == 0.0:
                lam = 0.0
                break
            v = w / norm
            new_lam = float(v @ (s @ v))
            if abs(new_lam - lam) <= tol * max(abs(new_lam), 1.0):
                lam = new_lam
                break
            lam = new_lam
        out.append(lam)
        s = s - lam * np.outer(v, v)
    return out


def eigenvalues_gram(matrix):
    """Eigenvalues of A A^T by the characteristic-polynomial oracle for
    2x2/3x3, iterated deflation for larger (descending)."""
    a = np.asarray(matrix, dtype=float)
    gram = a @ a.T
    n = gram.shape[0]
    if n == 2:
        return eig_sym_2x2(gram)
    if n == 3:
        return eig_sym_3x3(gram)
    return eig_sym_deflate(gram)


# ---------------------------------------------------------------------------
# binarization / labeling oracles

def brute_otsu_bin(values):
    """Exhaustive inter-class-variance maximization over the 256 bins."""
    v = np.asarray(values, float).ravel()
    lo, hi = v.min(), v.max()
    bins = np.clip(((v - lo) / (hi - lo) * 256.0).astype(int), 0, 255)
    best_t, best_var = 0, -1.0
    for t in range(256):
        left = bins <= t
        w0, w1 = left.sum(), (~left).sum()
        if w0 == 0 or w1 == 0:
            continue
        mu0, mu1 = bins[left].mean(), bins[~left].mean()
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_var, best_t = var, t
    return best_t


def flood_fill_labels(mask):
    """8-connected labeling by BFS in raster discovery order."""
    mask = np.asarray(mask, bool)
    rows, cols = mask.shape
    labels = np.zeros((rows, cols), dtype=int)
    nxt = 0
    for r in range(rows):
        for c in range(cols):
            if mask[r, c] and labels[r, c] == 0:
                nxt += 1
                stack = [(r, c)]
                labels[r, c] = nxt
                while stack:
                    rr, cc = stack.pop()
                    for dr in (-1, 0, 1):
                        for dc in (-1, 0, 1):
                            nr, nc = rr + dr, cc + dc
                            if 0 <= nr < rows and 0 <= nc < cols and mask[nr, nc] and labels[nr, nc] == 0:
                                labels[nr, nc] = nxt
                                stack.append((nr, nc))
    return labels, nxt


# ---------------------------------------------------------------------------
# classifier oracles

def naive_block_resize(img, out_rows, out_cols):
    """Direct 2-D area integration per output cell."""
    img = np.asarray(img, float)
    rows, cols = img.shape
    out = np.zeros((out_rows, out_cols))
    for i in range(out_rows):
        for j in range(out_cols):
            r_lo, r_hi = i * rows / out_rows, (i + 1) * rows / out_rows
            c_lo, c_hi = j * cols / out_cols, (j + 1) * cols / out_cols
            acc = 0.0
            for r in range(int(math.floor(r_lo)), min(int(math.ceil(r_hi)), rows)):
                for c in range(int(math.floor(c_lo)), min(int(math.ceil(c_hi)), cols)):
                    dr = min(r_hi, r + 1) - max(r_lo, r)
                    dc = min(c_hi, c + 1) - max(c_lo, c)
                    if dr > 0 and dc > 0:
                        acc += dr * dc * img[r, c]
            out[i, j] = acc / ((r_hi - r_lo) * (c_hi - c_lo))
    return out


def perceptron_separable(points, labels, epochs=200):
    """Hand-built perceptron; returns True when the set is linearly separable."""
    x = np.asarray(points, float)
    y = np.asarray([1 if l else -1 for l in labels], float)
    w = np.zeros(x.shape[1] + 1)
    aug = np.hstack([x, np.ones((len(x), 1))])
    for _ in range(epochs):
        errs = 0
        for xi, yi in zip(aug, y):
            if yi * (w @ xi) <= 0:
                w = w + yi * xi
                errs += 1
        if errs == 0:
            return True
    return False


# ---------------------------------------------------------------------------
# metric oracles

def pixel_iou(a, b):
    """IoU by enumerating the pixel sets of two inclusive boxes."""

    def cells(box):
        x, y, w, h = box
        return {(yy, xx) for yy in range(y, y + h) for xx in range(x, x + w)}

    ca, cb = cells(a), cells(b)
    union = len(ca | cb)
    return len(ca & cb) / union if union else 0.0


def brute_confusion(scored, threshold):
    tp = fp = tn = fn = 0
    for score, positive in scored:
        predicted = score >= threshold
        if predicted and positive:
            tp += 1
        elif predicted and not positive:
            fp += 1
        elif not predicted and positive:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def exact_threshold_ap(scored):
    """AP over the exact threshold set {0} U scores U {1}."""
    thresholds = sorted(set([0.0, 1.0] + [s for s, _ in scored]))
    n_pos = sum(1 for _, p in scored if p)
    pts = []
    for t in thresholds:
        tp, fp, _, _ = brute_confusion(scored, t)
        r = tp / n_pos if n_pos else 0.0
        p = tp / (tp + fp) if (tp + fp) else 0.0
        pts.append((r, p))
    total = 0.0
    for i, (r, p) in enumerate(pts):
        r_next = pts[i + 1][0] if i + 1 < len(pts) else 0.0
        total += p * (r - r_next)
    return total


def best_assignment_counts(dets, gts, thr):
    """Exhaustive greedy-equivalent matching oracle for tiny inputs.

    Replays greedy matching by score order, but scans all ground truths
    per detection by explicit max; suitable for <= 4 boxes per side.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i][1])
    taken = set()
    tp = 0
    for i in order:
        box = dets[i][0]
        best_v, best_j = 0.0, -1
        for j, g in enumerate(gts):
            if j in taken:
                continue
            v = pixel_iou(box, g)
            if v > best_v:
                best_v, best_j = v, j
        if best_j >= 0 and best_v >= thr:
            taken.add(best_j)
            tp += 1
    return tp, len(dets) - tp, len(gts) - tp
