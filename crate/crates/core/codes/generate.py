"""Writes the bundled alist files into the directory given as the only argument."""
import random, itertools, sys
import numpy as np

def gf2_rank(M):
    M = M.copy() % 2
    r = 0
    rows, cols = M.shape
    for c in range(cols):
        piv = None
        for i in range(r, rows):
            if M[i, c]:
                piv = i; break
        if piv is None: continue
        M[[r, piv]] = M[[piv, r]]
        for i in range(rows):
            if i != r and M[i, c]:
                M[i] ^= M[r]
        r += 1
        if r == rows: break
    return r

def build(n, m, wc, seed):
    rng = random.Random(seed)
    E = n * wc
    cap = -(-E // m)
    H = np.zeros((m, n), dtype=np.uint8)
    deg = [0] * m
    pairs = set()
    for j in range(n):
        chosen = []
        for _ in range(wc):
            cands = [r for r in range(m) if r not in chosen and deg[r] < cap
                     and all((min(r, c), max(r, c)) not in pairs for c in chosen)]
            if not cands:
                return None
            md = min(deg[r] for r in cands)
            cands = [r for r in cands if deg[r] == md]
            r = rng.choice(cands)
            chosen.append(r)
        for a, b in itertools.combinations(sorted(chosen), 2):
            pairs.add((a, b))
        for r in chosen:
            H[r, j] = 1; deg[r] += 1
    # no 4-cycles: every pair of rows shares at most one column
    return H

def find(n, k, wc, seed0):
    m = n - k
    for s in range(seed0, seed0 + 10000):
        H = build(n, m, wc, s)
        if H is None: continue
        if gf2_rank(H) != m: continue
        ov = H.astype(int) @ H.T.astype(int)
        np.fill_diagonal(ov, 0)
        if ov.max() > 1: continue
        return H, s
    raise SystemExit("no code")

def alist(H):
    m, n = H.shape
    cols = [[i + 1 for i in range(m) if H[i, j]] for j in range(n)]
    rows = [[j + 1 for j in range(n) if H[i, j]] for i in range(m)]
    out = [f"{n} {m}", f"{max(map(len, cols))} {max(map(len, rows))}",
           " ".join(str(len(c)) for c in cols), " ".join(str(len(r)) for r in rows)]
    out += [" ".join(map(str, c)) for c in cols]
    out += [" ".join(map(str, r)) for r in rows]
    return "\n".join(out) + "\n"

def hamming(r):
    n = 2 ** r - 1
    H = np.zeros((r, n), dtype=np.uint8)
    for j in range(n):
        for i in range(r):
            H[i, j] = ((j + 1) >> i) & 1
    return H

d = sys.argv[1]
open(f"{d}/hamming_7_4.alist", "w").write(alist(hamming(3)))
open(f"{d}/hamming_15_11.alist", "w").write(alist(hamming(4)))
open(f"{d}/repetition_3_1.alist", "w").write(alist(np.array([[1,1,0],[0,1,1]], dtype=np.uint8)))
for (n, k) in [(49, 24), (121, 60)]:
    H, s = find(n, k, 3, 2024)
    print(n, k, "seed", s)
    open(f"{d}/ldpc_{n}_{k}.alist", "w").write(alist(H))
