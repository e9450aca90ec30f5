"""Writes crates/core/tests/data/chisq_oracle.tsv: chi-squared upper tails by
quadrature of the density, independent of any incomplete-gamma routine."""
import mpmath as mp

mp.mp.dps = 40


def sf(t, k):
    k = mp.mpf(k)
    t = mp.mpf(t)
    c = 1 / (mp.power(2, k / 2) * mp.gamma(k / 2))
    f = lambda x: c * mp.power(x, k / 2 - 1) * mp.exp(-x / 2)
    # break points past t keep the adaptive rule accurate on the long tail
    pts = [t] + [t + s for s in (1, 5, 20, 60, 200)] + [mp.inf]
    return mp.quad(f, pts)


pairs = [(3.841459, 1)]
ts = [0.001, 0.05, 0.3, 1.0, 2.5, 4.0, 7.5, 12.0, 20.0, 35.0, 60.0]
dfs = [1, 2, 3, 4, 5, 7, 10, 15, 25, 40, 80]
i = 0
for t in ts:
    for k in dfs:
        if len(pairs) >= 50:
            break
        if i % 2 == 0 or t * 2 < k:
            pairs.append((t * (1 + k / 10), k))
        i += 1
pairs = pairs[:50]
assert len(pairs) == 50, len(pairs)
print("# upper tail of chi-squared(df) at t by adaptive quadrature of the density (mpmath, 40 digits)")
print("t\tdf\tsf")
for t, k in pairs:
    print(f"{t!r}\t{k}\t{mp.nstr(sf(t, k), 20)}")
