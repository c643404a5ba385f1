"""Regenerates the CLI test fixtures. Synthetic; shaped like a randomized
HIV trial with heavy administrative censoring."""
import csv
import math
import random

rng = random.Random(7)

with open("actg.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["time", "event", "treatment", "karnof", "cd40", "age"])
    for _ in range(400):
        karnof = rng.choice([70, 80, 90, 90, 100, 100])
        cd40 = max(10.0, rng.gauss(350, 120))
        age = max(15.0, rng.gauss(35, 9))
        a = 1 if rng.random() < 0.5 else 0
        z = (cd40 - 350) / 120
        lp = -7.9 - 0.03 * (karnof - 90) + 0.02 * (age - 35) - 0.4 * z + a * (-0.2 - 0.8 * z)
        t = rng.expovariate(math.exp(lp))
        c = rng.uniform(500, 1250)
        w.writerow([round(min(t, c), 1), int(t <= c), a, karnof, round(cd40, 1), round(age, 1)])

with open("two_stage.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["time", "event", "treatment", "x0", "stage1_treatment", "x1"])
    for _ in range(300):
        x0 = rng.gauss(0, 1)
        a0 = 1 if rng.random() < 0.5 else 0
        t0 = rng.expovariate(math.exp(-1.2 + 0.3 * x0 + a0 * (0.2 - 0.6 * x0)))
        c = rng.uniform(1.0, 5.0)
        if min(t0, c) <= 1.0:
            w.writerow([round(min(t0, c), 4), int(t0 <= c), a0, round(x0, 4), "", ""])
            continue
        x1 = rng.gauss(0.5 * x0, 1)
        a1 = 1 if rng.random() < 0.5 else 0
        t = 1.0 + rng.expovariate(math.exp(-1.0 + 0.2 * x1 + a1 * (-0.1 - 0.7 * x1)))
        w.writerow([round(min(t, c), 4), int(t <= c), a0, round(x0, 4), a1, round(x1, 4)])
