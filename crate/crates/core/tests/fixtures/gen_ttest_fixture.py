"""Reference paired t-test p-values at 50 significant digits (mpmath).

p = I_{df/(df+t^2)}(df/2, 1/2), the regularized incomplete beta form of the
two-sided Student-t tail.
"""
import json
import random

import mpmath as mp

mp.mp.dps = 50
rng = random.Random(20240611)
cases = []
for _ in range(50):
    n = rng.randint(2, 30)
    a = [round(rng.uniform(0.4, 1.0), 4) for _ in range(n)]
    shift = rng.uniform(-0.05, 0.05)
    b = [round(min(1.0, max(0.0, x + shift + rng.gauss(0, 0.03))), 4) for x in a]
    d = [mp.mpf(str(x)) - mp.mpf(str(y)) for x, y in zip(a, b)]
    mean = mp.fsum(d) / n
    sd = mp.sqrt(mp.fsum((x - mean) ** 2 for x in d) / (n - 1))
    t = mean / (sd / mp.sqrt(n))
    df = n - 1
    p = mp.betainc(mp.mpf(df) / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
    cases.append({"a": a, "b": b, "t": mp.nstr(t, 20), "p": mp.nstr(p, 20)})

with open("ttest_fixture.json", "w") as f:
    json.dump(cases, f, indent=1)
