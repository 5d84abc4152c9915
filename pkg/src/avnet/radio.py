"""Downlink link budget: log-distance pathloss, per-slice SINR and spectral efficiency."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .scenario import BaseStation, BsKind, MecServer, Scenario, distance_m

WIFI_SLICE = "W"
D_MIN_M = 1.0
INTERFERENCE_FACTOR = 2.0


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


def pathloss_db(bs: BaseStation, distance_m: float, d_min: float = D_MIN_M) -> float:
    """Gain in dB (negative) at ``distance_m``: ``a + b*log10(d)``, distance floored at ``d_min``."""
    if not distance_m > 0:
        raise ValueError(f"distance must be positive, got {distance_m}")
    return bs.pathloss_a_db + bs.pathloss_b_db * math.log10(max(distance_m, d_min))


def received_power_dbm(bs: BaseStation, distance_m: float, d_min: float = D_MIN_M) -> float:
    return bs.tx_power_dbm + pathloss_db(bs, distance_m, d_min)


@dataclass(frozen=True)
class ReusePattern:
    slices: tuple[tuple[str, float], ...]
    bs_slices: dict[str, frozenset[str]]

    def __post_init__(self):
        total = sum(r for _, r in self.slices)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"slice ratios sum to {total}, not 1")
        if any(r < 0 for _, r in self.slices):
            raise ValueError("slice ratios must be nonnegative")
        known = {sid for sid, _ in self.slices}
        for b, ss in self.bs_slices.items():
            if not ss:
                raise ValueError(f"BS {b} has no slice")
            if not ss <= known:
                raise ValueError(f"BS {b} uses unknown slices {sorted(ss - known)}")

    @property
    def slice_ids(self) -> tuple[str, ...]:
        return tuple(sid for sid, _ in self.slices)

    @property
    def beta(self) -> np.ndarray:
        return np.array([r for _, r in self.slices])

    def ratio(self, slice_id: str) -> float:
        return dict(self.slices)[slice_id]


def slice_ids(s: Scenario, mec: MecServer) -> tuple[str, ...]:
    """One dedicated slice per eNB (ascending id), then the shared Wi-Fi slice if APs exist."""
    bss = [s.bs(b) for b in mec.bs_ids]
    enbs = sorted(b.id for b in bss if b.kind is BsKind.ENB)
    has_ap = any(b.kind is BsKind.WIFI_AP for b in bss)
    return tuple(enbs) + ((WIFI_SLICE,) if has_ap else ())


def disks_disjoint(a: BaseStation, ra: float, b: BaseStation, rb: float) -> bool:
    return distance_m(a.position_m, b.position_m) > ra + rb


def reuse_structure(s: Scenario, mec: MecServer) -> dict[str, frozenset[str]]:
    """Slices each BS of ``mec`` transmits on.

    An eNB uses only its dedicated slice. An AP uses the Wi-Fi slice plus the
    slice of every eNB whose protected disk its coverage disk misses.
    """
    out = {}
    enbs = [s.bs(b) for b in mec.bs_ids if s.bs(b).kind is BsKind.ENB]
    for bid in mec.bs_ids:
        b = s.bs(bid)
        if b.kind is BsKind.ENB:
            out[bid] = frozenset({bid})
        else:
            reused = {e.id for e in enbs if disks_disjoint(b, b.range_m, e, e.protected_radius_m)}
            out[bid] = frozenset({WIFI_SLICE} | reused)
    return out


def build_reuse_pattern(s: Scenario, mec: MecServer, beta) -> ReusePattern:
    ids = slice_ids(s, mec)
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != len(ids):
        raise ValueError(f"{mec.id} has {len(ids)} slices {ids}, got {beta.size} ratios")
    return ReusePattern(tuple(zip(ids, (float(x) for x in beta))), reuse_structure(s, mec))


def reuse_is_legal(s: Scenario, rp: ReusePattern) -> bool:
    for bid, ss in rp.bs_slices.items():
        b = s.bs(bid)
        for sid in ss:
            if sid == WIFI_SLICE or sid == bid:
                continue
            e = s.bs(sid)
            if b.kind is not BsKind.WIFI_AP or e.kind is not BsKind.ENB:
                return False
            if not disks_disjoint(b, b.range_m, e, e.protected_radius_m):
                return False
    return True


def sinr(s: Scenario, rp: ReusePattern, bs_id: str, av_id: int, slice_id: str,
         interference_factor: float = INTERFERENCE_FACTOR, d_min: float = D_MIN_M) -> float:
    """Linear SINR at ``av_id`` from ``bs_id`` on ``slice_id``.

    Every other BS transmitting on the slice interferes at full power when the
    AV lies within ``interference_factor`` times that BS's range.
    """
    if slice_id not in rp.bs_slices.get(bs_id, ()):
        raise ValueError(f"BS {bs_id} does not transmit on slice {slice_id}")
    v = s.vehicle(av_id)
    bs = s.bs(bs_id)
    signal = dbm_to_mw(received_power_dbm(bs, distance_m(bs.position_m, v.position_m), d_min))
    interference = 0.0
    for other, ss in rp.bs_slices.items():
        if other == bs_id or slice_id not in ss:
            continue
        ob = s.bs(other)
        d = distance_m(ob.position_m, v.position_m)
        if d <= interference_factor * ob.range_m:
            interference += dbm_to_mw(received_power_dbm(ob, d, d_min))
    return signal / (dbm_to_mw(s.noise_dbm) + interference)


def efficiency_from_sinr(mac_efficiency: float, sinr_linear):
    return mac_efficiency * np.log2(1.0 + sinr_linear)


def spectral_efficiency(s: Scenario, rp: ReusePattern, bs_id: str, av_id: int, slice_id: str,
                        interference_factor: float = INTERFERENCE_FACTOR, d_min: float = D_MIN_M) -> float:
    g = sinr(s, rp, bs_id, av_id, slice_id, interference_factor, d_min)
    return float(efficiency_from_sinr(s.bs(bs_id).mac_efficiency, g))


def achievable_rate_bps(s: Scenario, rp: ReusePattern, bs_id: str, av_id: int, bandwidth_hz: float,
                        interference_factor: float = INTERFERENCE_FACTOR, d_min: float = D_MIN_M) -> float:
    """Rate the AV would get holding all of ``bs_id``'s slices alone (the rate reading of gamma)."""
    return sum(
        rp.ratio(sid) * bandwidth_hz * spectral_efficiency(s, rp, bs_id, av_id, sid, interference_factor, d_min)
        for sid in sorted(rp.bs_slices[bs_id])
    )


@dataclass(frozen=True)
class LinkQuality:
    bs_id: str
    av_id: int
    sinr_db_per_slice: dict[str, float]
    spectral_eff_per_slice: dict[str, float]


def link_quality(s: Scenario, rp: ReusePattern, bs_id: str, av_id: int,
                 interference_factor: float = INTERFERENCE_FACTOR, d_min: float = D_MIN_M) -> LinkQuality:
    sinr_db, eff = {}, {}
    mac = s.bs(bs_id).mac_efficiency
    for sid in sorted(rp.bs_slices[bs_id]):
        g = sinr(s, rp, bs_id, av_id, sid, interference_factor, d_min)
        sinr_db[sid] = 10.0 * math.log10(g)
        eff[sid] = float(efficiency_from_sinr(mac, g))
    return LinkQuality(bs_id, av_id, sinr_db, eff)


def dump_link_quality_csv(fh, s: Scenario, rp: ReusePattern, **kw):
    """Write ``bs_id,av_id,slice_id,sinr_db,eff`` rows for every covered (BS, AV) pair of the pattern."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["bs_id", "av_id", "slice_id", "sinr_db", "eff"])
    for bid in sorted(rp.bs_slices):
        b = s.bs(bid)
        for v in s.vehicles:
            if distance_m(b.position_m, v.position_m) > b.range_m:
                continue
            lq = link_quality(s, rp, bid, v.id, **kw)
            for sid in sorted(lq.sinr_db_per_slice):
                w.writerow([bid, v.id, sid, repr(lq.sinr_db_per_slice[sid]), repr(lq.spectral_eff_per_slice[sid])])


@dataclass
class LinkTable:
    """Dense per-MEC link data used by the solvers.

    ``eff[j, k, s]`` is the spectral efficiency of BS ``bs_ids[j]`` towards AV
    ``av_ids[k]`` on slice ``slice_ids[s]`` (zero when the BS does not use the
    slice or does not cover the AV). Slice ratios scale bandwidth only, so the
    table is independent of beta.
    """

    bs_ids: tuple[str, ...]
    av_ids: tuple[int, ...]
    slice_ids: tuple[str, ...]
    cover: np.ndarray
    eff: np.ndarray
    sinr: np.ndarray
    primary_slice: np.ndarray

    def coefficients(self, beta) -> np.ndarray:
        """Spectral efficiency pooled over slices, ``sum_s beta_s * eff[j, k, s]``."""
        return self.eff @ np.asarray(beta, dtype=float)


def link_table(s: Scenario, mec: MecServer, av_ids=None,
               interference_factor: float = INTERFERENCE_FACTOR, d_min: float = D_MIN_M) -> LinkTable:
    structure = reuse_structure(s, mec)
    sids = slice_ids(s, mec)
    bs_ids = tuple(sorted(mec.bs_ids))
    if av_ids is None:
        av_ids = tuple(v.id for v in s.vehicles)
    av_ids = tuple(av_ids)
    bss = [s.bs(b) for b in bs_ids]
    bpos = np.array([b.position_m for b in bss]).reshape(-1, 2)
    vpos = np.array([s.vehicle(k).position_m for k in av_ids], dtype=float).reshape(-1, 2)
    dist = np.hypot(bpos[:, None, 0] - vpos[None, :, 0], bpos[:, None, 1] - vpos[None, :, 1])
    if np.any(dist <= 0):
        raise ValueError("an AV sits exactly on a BS")
    tx = np.array([b.tx_power_dbm for b in bss])[:, None]
    a = np.array([b.pathloss_a_db for b in bss])[:, None]
    bexp = np.array([b.pathloss_b_db for b in bss])[:, None]
    rx_mw = dbm_to_mw(tx + a + bexp * np.log10(np.maximum(dist, d_min)))
    reach = dist <= interference_factor * np.array([b.range_m for b in bss])[:, None]
    cover = dist <= np.array([b.range_m for b in bss])[:, None]
    uses = np.array([[sid in structure[b] for sid in sids] for b in bs_ids], dtype=bool).reshape(len(bs_ids), len(sids))
    noise = dbm_to_mw(s.noise_dbm)
    J, N, S = len(bs_ids), len(av_ids), len(sids)
    g = np.zeros((J, N, S))
    for si in range(S):
        tx_on = uses[:, si]
        interf_all = (rx_mw * (reach & tx_on[:, None])).sum(axis=0)
        for j in range(J):
            if not tx_on[j]:
                continue
            own = rx_mw[j] * reach[j]
            g[j, :, si] = rx_mw[j] / (noise + interf_all - own)
    mac = np.array([b.mac_efficiency for b in bss])[:, None, None]
    eff = np.where(cover[:, :, None] & uses[:, None, :], mac * np.log2(1.0 + g), 0.0)
    primary = np.array([sids.index(b) if b in sids else sids.index(WIFI_SLICE) for b in bs_ids], dtype=int)
    return LinkTable(bs_ids, av_ids, sids, cover, eff, g, primary)
