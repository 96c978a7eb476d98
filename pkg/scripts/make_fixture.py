"""Regenerate the bundled synthetic fixture (stations.csv, incidents.csv).

The station file realizes the Columbia (116th) to NYU (8th St) corridor with
a handful of competing branches. Travel times are invented (1-3 minutes per
local hop, longer for express and transfer links); coordinates are close to
the real stations. Incidents are sampled from a seeded spatial mixture.

    python scripts/make_fixture.py
"""

import csv
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "saferoute" / "data"

COORDS = {
    "116th": (40.8081, -73.9641),
    "110th": (40.8041, -73.9668),
    "103rd": (40.7995, -73.9684),
    "96th Red": (40.7938, -73.9724),
    "86th Red": (40.7889, -73.9762),
    "79th": (40.7839, -73.9799),
    "72nd Red": (40.7785, -73.9819),
    "66th": (40.7735, -73.9822),
    "59th": (40.7682, -73.9819),
    "50th Red": (40.7617, -73.9838),
    "42nd": (40.7553, -73.9873),
    "34th Red": (40.7506, -73.9911),
    "28th Red": (40.7475, -73.9934),
    "23rd Red": (40.7441, -73.9956),
    "18th": (40.7410, -73.9979),
    "14th Red": (40.7377, -74.0002),
    "6th Av L": (40.7373, -73.9969),
    "57th Yellow": (40.7648, -73.9807),
    "49th Yellow": (40.7599, -73.9841),
    "34th Yellow Orange": (40.7496, -73.9880),
    "28th Yellow": (40.7456, -73.9887),
    "23rd Yellow": (40.7413, -73.9893),
    "Union Sq": (40.7359, -73.9906),
    "8th": (40.7305, -73.9925),
    "7th Av Orange": (40.7627, -73.9818),
    "47-50 Orange": (40.7587, -73.9812),
    "42nd Orange": (40.7543, -73.9845),
}

# (train, [stations in order], [minutes between consecutive stations])
LINES = [
    ("1", ["116th", "110th", "103rd", "96th Red", "86th Red", "79th", "72nd Red", "66th", "59th",
           "50th Red", "42nd", "34th Red", "28th Red", "23rd Red", "18th", "14th Red"],
     [2.0, 1.5, 2.0, 1.5, 1.5, 1.5, 1.5, 1.5, 2.0, 1.5, 2.0, 1.5, 1.5, 1.5, 1.5]),
    ("2/3", ["96th Red", "72nd Red", "42nd", "34th Red", "14th Red"], [6.0, 8.0, 2.5, 5.5]),
    ("N/Q/R/W", ["57th Yellow", "49th Yellow", "42nd", "34th Yellow Orange", "28th Yellow",
                 "23rd Yellow", "Union Sq", "8th"], [2.0, 1.5, 2.0, 1.5, 1.5, 2.0, 1.5]),
    ("B/D", ["59th", "7th Av Orange", "47-50 Orange", "42nd Orange", "34th Yellow Orange"],
     [2.5, 2.0, 2.0, 2.0]),
    ("L", ["14th Red", "6th Av L", "Union Sq"], [3.0, 2.0]),
    ("transfer", ["42nd", "42nd Orange"], [3.0]),
]


def station_rows():
    rows = []
    for train, stops, times in LINES:
        for i, name in enumerate(stops):
            lat, lon = COORDS[name]
            if i + 1 < len(stops):
                rows.append([name, train, "", stops[i + 1], times[i], lat, lon])
            else:
                rows.append([name, train, stops[i - 1], "", times[i - 1], lat, lon])
    return rows


def incident_rows(seed=20240601):
    rng = np.random.default_rng(seed)
    names = list(COORDS)
    # per-station intensity, a few hotspots, and a far-away cluster outside 8 km
    weight = rng.gamma(2.0, 1.0, size=len(names))
    centres = [COORDS[n] for n in names]
    start = datetime(2018, 1, 1)
    span = (datetime(2020, 1, 1) - start).total_seconds()
    rows = []
    n_main = 900
    pick = rng.choice(len(names), size=n_main, p=weight / weight.sum())
    for k in range(n_main):
        lat0, lon0 = centres[pick[k]]
        lat = lat0 + rng.normal(0, 0.006)
        lon = lon0 + rng.normal(0, 0.008)
        # mild upward drift over the two years
        u = rng.random() ** 0.85
        ts = start + timedelta(seconds=float(u * span))
        rows.append([ts.isoformat(timespec="minutes"), round(lat, 5), round(lon, 5)])
    for _ in range(60):   # Coney Island area, > 8 km from every fixture station
        ts = start + timedelta(seconds=float(rng.random() * span))
        rows.append([ts.isoformat(timespec="minutes"), round(40.575 + rng.normal(0, 0.004), 5),
                     round(-73.975 + rng.normal(0, 0.004), 5)])
    for _ in range(40):   # outside the 2018-2019 window
        year = int(rng.choice([2016, 2017, 2020]))
        ts = datetime(year, int(rng.integers(1, 13)), int(rng.integers(1, 28)), int(rng.integers(0, 24)))
        lat0, lon0 = centres[int(rng.integers(len(names)))]
        rows.append([ts.isoformat(timespec="minutes"), lat0, lon0])
    rows.sort(key=lambda r: r[0])
    rows.append(["2019-05-04T10:00", 999, -73.98])
    rows.append(["not a date", 40.75, -73.98])
    return rows


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "stations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["station", "train", "prev_stop", "next_stop", "time_min", "lat", "lon"])
        w.writerows(station_rows())
    with open(OUT / "incidents.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["occurred_at", "latitude", "longitude"])
        w.writerows(incident_rows())


if __name__ == "__main__":
    main()
