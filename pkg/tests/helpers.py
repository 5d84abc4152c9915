"""Small hand-built scenarios for unit tests."""
from avnet.config import QosTable
from avnet.scenario import BaseStation, BsKind, MecServer, RoadGeometry, Scenario, Vehicle

ROAD = RoadGeometry(length_m=1000.0, lanes=4, lane_width_m=3.5)
DS = QosTable().delay_sensitive
DT = QosTable().delay_tolerant


def enb(id, x, y=-10.0, **kw):
    kw.setdefault("range_m", 600.0)
    return BaseStation(id, BsKind.ENB, (x, y), 40.0, kw.pop("range_m"), -30.0, -35.0, 1.0, **kw)


def ap(id, x, y=-10.0, **kw):
    kw.setdefault("range_m", 180.0)
    return BaseStation(id, BsKind.WIFI_AP, (x, y), 28.45, kw.pop("range_m"), -40.0, -35.0, 0.8, **kw)


def av(id, x, lane=0, app=DS, compute=1e8, storage=1e7, workload=2e6, T=10.0, L=0.1):
    if not app.delay_sensitive:
        compute, workload, L = 0.0, 0.0, None
    return Vehicle(id, (x, ROAD.lane_center(lane)), lane, app, compute, storage, workload, T, L)


def scenario(bss, vehicles, mecs=None, road=ROAD):
    if mecs is None:
        mecs = (MecServer("M1", 1.2e10, 4e9, 25e6, tuple(b.id for b in bss)),)
    return Scenario(road, tuple(vehicles), tuple(bss), tuple(mecs))
