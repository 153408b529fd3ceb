"""Exercises the Python bindings against the bundled networks and fixtures."""

import csv
import io
import json
import math
from collections import defaultdict
from pathlib import Path

import safemobility as sm

ROOT = Path(__file__).resolve().parent.parent
T0 = 1_600_000_000


def main():
    net = sm.Network.load(str(ROOT / "networks" / "thessaloniki40.json"))
    assert len(net.detector_ids) == 40
    tiny = sm.Network.load(str(ROOT / "networks" / "tiny3.json"))
    dist, nodes = tiny.shortest_distance("A", "C")
    assert (dist, nodes) == (200.0, ["A", "B", "C"]), (dist, nodes)
    assert tiny.shortest_distance("C", "A") is None

    d = sm.haversine(40.63, 22.94, 40.6309, 22.94)
    assert abs(d - 100.0) < 0.5, d

    salt = bytes(range(16))
    p = sm.pseudonymize("00:11:22:33:44:55", salt)
    assert len(p) == 64 and p == sm.pseudonymize("00-11-22-33-44-55", salt)
    assert "001122334455" in sm.mac_variants("00:11:22:33:44:55")

    assert sm.robust_mean([60, 61, 59, 300]) == 60
    assert sm.robust_mean([]) is None

    trips, singles = sm.segment([("A", 0), ("B", 10), ("C", 2000)], 900)
    assert trips == [[("A", 0), ("B", 10)]] and singles == [("C", 2000)]

    plan = [("Green", 30), ("Yellow", 3), ("Red", 27)]
    assert sm.phase_at("Green", 5, plan, 4.9) == "Green"
    assert sm.phase_at("Green", 5, plan, 6) == "Yellow"
    assert sm.phase_at("Green", 5, plan, 8) == "Red"

    # 200 m in 20 s is 36 km/h
    [trip] = tiny.trips([("A", T0), ("B", T0 + 10), ("C", T0 + 20)])
    assert trip["distance"] == 200.0 and trip["duration"] == 20
    dash = tiny.dashboard([("A", T0), ("B", T0 + 10), ("C", T0 + 20)], 0, T0 + 60)
    assert math.isclose(dash["avg_speed"], 36.0), dash

    demand = (ROOT / "fixtures" / "sim" / "demand.json").read_text()
    detections_csv, truth = net.simulate(demand)
    assert len(truth) == 52
    streams = defaultdict(list)
    for row in csv.DictReader(io.StringIO(detections_csv)):
        streams[row["mac"]].append((row["detector_id"], int(row["timestamp"])))
    model = sm.TrafficModel(net, list(streams.values()), T0 + 7200)
    assert model.states()
    gt = truth[0]
    best = model.route(gt["origin"], gt["destination"], gt["departure"])
    assert best["path"][0]["from"] == gt["origin"]
    cmp = model.compare(gt["origin"], gt["destination"], gt["departure"])
    assert {leg["cost_source"] for leg in cmp["freeflow"]["per_link"]} == {"freeflow"}

    spat = (ROOT / "fixtures" / "spat" / "intersections.json").read_text()
    alerts = sm.AlertService(spat, T0)
    first = json.loads(spat)["intersections"][0]
    lat = first["lat"]
    lon = first["lon"] - 80 / (111_320 * math.cos(math.radians(lat)))
    kinds = [a["kind"] for a in alerts.alerts(lat, lon, 8.0, 90.0, T0 + 5)]
    assert kinds[0] == "PedestrianCrossing" and "RedLightAtArrival" in kinds, kinds
    assert alerts.alerts(lat, lon, 8.0, 90.0, T0 + 60) == []
    assert alerts.stale_suppressed == 1

    responses = (ROOT / "fixtures" / "surveys" / "responses.csv").read_text()
    kpi = sm.evaluate_kpi(responses)
    assert [r["comparison_phase"] for r in kpi["reports"]] == ["Intermediate", "PostPilot"]
    print(sm.kpi_table(responses))
    print("python smoke test ok")


if __name__ == "__main__":
    main()
