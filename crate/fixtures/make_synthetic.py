"""Writes synthetic_121.csv: 121 business-day closes from a seeded
fat-tailed random walk. Not market data."""
import datetime as dt
import random

rng = random.Random(20131231)
day = dt.date(2013, 12, 31)
price = 150.0
rows = [(day, price)]
while len(rows) < 121:
    day += dt.timedelta(days=1)
    if day.weekday() >= 5:
        continue
    r = rng.gauss(0.002, 0.025)
    if rng.random() < 0.05:
        r += rng.choice([-1, 1]) * rng.uniform(0.04, 0.10)
    price = round(price * (1 + r), 2)
    rows.append((day, price))

with open("synthetic_121.csv", "w") as f:
    f.write("date,close\n")
    for d, p in rows:
        f.write(f"{d.isoformat()},{p:.2f}\n")
