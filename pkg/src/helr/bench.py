"""Desk-scale protocol benchmarking: wall-clock per verification and
template byte sizes, per protocol and security level."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .classifier import build_tables, synth_user_probes, synthetic_model
from .harness import enroll_user, make_deployment, pick_balanced_theta, run_verification
from .templates import mal_template_to_bytes, sh_template_to_bytes, theta_vector_to_bytes


@dataclass
class BenchResult:
    protocol: str
    level: int
    k: int
    n: int
    delta: float
    window_len: int
    times: list[float] = field(default_factory=list)  # seconds per verification
    template_bytes: int = 0
    theta_vector_bytes: int = 0
    enroll_seconds: float = 0.0

    @property
    def quartiles(self):
        q1, med, q3 = np.percentile(self.times, [25, 50, 75])
        return float(q1), float(med), float(q3)

    def summary(self) -> dict:
        q1, med, q3 = self.quartiles
        return {
            "protocol": self.protocol,
            "level": self.level,
            "k": self.k,
            "n": self.n,
            "delta": self.delta,
            "window_len": self.window_len,
            "sessions": len(self.times),
            "median_s": round(med, 4),
            "q1_s": round(q1, 4),
            "q3_s": round(q3, 4),
            "min_s": round(min(self.times), 4),
            "max_s": round(max(self.times), 4),
            "template_bytes": self.template_bytes,
            "theta_vector_bytes": self.theta_vector_bytes,
            "enroll_s": round(self.enroll_seconds, 4),
        }


def run_bench(level: int, k: int, n: int, delta: float, sessions: int,
              seed: int = 0, protocols=("sh", "mal"), rho: float = 0.8,
              early_exit: bool = False) -> list[BenchResult]:
    """Genuine verifications against one enrolled user, timed one by one.
    Single-threaded; the tables and threshold are shared by both protocols."""
    model = synthetic_model([rho] * k)
    tables = build_tables(model, n, delta)
    tables = tables.with_theta(pick_balanced_theta(tables, model, seed))
    dep = make_deployment(level, tables, seed=seed)

    nrng = np.random.default_rng(seed)
    features, probes = synth_user_probes(model, sessions, nrng)
    uid = b"bench-user"

    results = []
    for protocol in protocols:
        t0 = time.perf_counter()
        enroll_user(dep, uid, features, protocol, seed=seed)
        enroll_s = time.perf_counter() - t0
        res = BenchResult(protocol=protocol, level=level, k=k, n=n, delta=delta,
                          window_len=tables.window_len, enroll_seconds=enroll_s)
        if protocol == "sh":
            res.template_bytes = len(sh_template_to_bytes(dep.params,
                                                          dep.server_store.get_sh(uid)))
        else:
            template, tv = dep.server_store.get_mal(uid)
            res.template_bytes = len(mal_template_to_bytes(dep.params, template))
            res.theta_vector_bytes = len(theta_vector_to_bytes(dep.params, tv))
        for s in range(sessions):
            t0 = time.perf_counter()
            run_verification(dep, uid, probes[s], protocol, seed=s,
                             early_exit=early_exit)
            res.times.append(time.perf_counter() - t0)
        results.append(res)
    return results


def template_size_table(levels=(96, 112, 128), shapes=((16, 36), (64, 49), (64, 94))):
    """Analytic template sizes in bytes for each (n, k) shape and level,
    from the fixed-length wire encodings."""
    from .group import params_for_level

    rows = []
    for n, k in shapes:
        for level in levels:
            p = params_for_level(level)
            ct = 2 * p.encoding_len
            sig = 16 + p.scalar_len
            sh = 2 + 0 + 8 + k * n * ct  # uid prefix (empty uid) + counts + cells
            mal = 2 + 8 + k * n * (4 + 2 * ct + 2 * sig)
            rows.append({"n": n, "k": k, "level": level,
                         "sh_bytes": sh, "mal_bytes": mal})
    return rows
