"""Operator CLI: table generation, synthetic data, enrollment, verification
sessions, DET reports, benchmarks and scripted attacks.

Exit codes: 0 success (and match), 2 configuration error, 3 verification
no-match, 4 protocol abort.  Every command is deterministic under --seed
except wall-clock timings.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import classifier as cl
from .attacks import SCRIPTS, run_attack
from .bench import run_bench
from .errors import HelrError
from .group import params_for_level
from .harness import enroll_user, make_deployment, run_verification
from .store import FileStore
from .transport import Outcome, tcp_pair

EXIT_CONFIG = 2
EXIT_NO_MATCH = 3
EXIT_ABORT = 4


def _fail(message: str, code: int = EXIT_CONFIG):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_rho(rho: str, k: int) -> list[float]:
    vals = [float(x) for x in rho.split(",") if x.strip()]
    if len(vals) == 1:
        vals = vals * k
    if len(vals) != k:
        raise HelrError(f"need 1 or {k} correlation values, got {len(vals)}")
    return vals


def _model_from_options(k, rho, train):
    if train is not None:
        pairs = cl.load_vectors(train)
        if pairs.shape[0] % 2:
            raise HelrError("training file must hold an even number of rows (adjacent genuine pairs)")
        a, b = pairs[0::2], pairs[1::2]
        return cl.estimate_model(a, b, np.ones(len(a), dtype=bool))
    if rho is None:
        raise HelrError("give either --rho or --train")
    return cl.synthetic_model(_parse_rho(rho, k))


def _store_paths(store: str):
    root = Path(os.environ.get("HELR_STORE", store))
    return root, root / "config.json"


def _load_deployment(store: str, tables):
    root, cfg_path = _store_paths(store)
    if not cfg_path.exists():
        raise HelrError(f"store {root} is not initialized; run enroll first")
    cfg = json.loads(cfg_path.read_text())
    params = params_for_level(cfg["level"])
    dep = make_deployment(cfg["level"], tables, seed=cfg["key_seed"],
                          server_store=FileStore(root / "server", params),
                          client_store=FileStore(root / "client", params))
    return dep, cfg


@click.group()
def main():
    """Encrypted biometric verification with quantized likelihood-ratio
    lookup tables over (2,2)-threshold ElGamal."""


@main.command("gen-tables")
@click.option("--k", type=int, required=True, help="feature count")
@click.option("--n", type=int, required=True, help="feature level (bins per axis)")
@click.option("--delta", type=float, required=True, help="score quantization step")
@click.option("--rho", type=str, default=None,
              help="genuine correlation(s): one value or k comma-separated")
@click.option("--train", type=click.Path(exists=True), default=None,
              help="feature-vector file of adjacent genuine pairs to estimate the model from")
@click.option("--theta", type=int, default=None, help="decision threshold (default: FMR-calibrated)")
@click.option("--target-fmr", type=float, default=0.001, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def gen_tables(k, n, delta, rho, train, theta, target_fmr, out):
    """Build the quantized score tables and write the table file."""
    try:
        if delta <= 0:
            raise HelrError("score step must be positive")
        model = _model_from_options(k, rho, train)
        tables = cl.build_tables(model, n, delta, theta=theta, target_fmr=target_fmr)
        cl.save_tables(tables, out)
    except HelrError as exc:
        _fail(str(exc))
    click.echo(f"tables={out}")
    click.echo(f"k={tables.k} n={tables.n} delta={tables.delta}")
    click.echo(f"theta={tables.theta} s_max={tables.s_max} s_min={tables.s_min} "
               f"window_len={tables.window_len}")
    for i in range(tables.k):
        t = tables.tables[i]
        click.echo(f"table_{i:02d} min={int(t.min())} max={int(t.max())}")


@main.command("synth")
@click.option("--k", type=int, required=True)
@click.option("--rho", type=str, required=True)
@click.option("--count", type=int, default=8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
def synth(k, rho, count, seed, out_dir):
    """Write enrollment features, genuine probes and impostor probes for a
    synthetic identity."""
    try:
        model = cl.synthetic_model(_parse_rho(rho, k))
    except HelrError as exc:
        _fail(str(exc))
    rng = np.random.default_rng(seed)
    features, probes = cl.synth_user_probes(model, count, rng)
    impostors = rng.standard_normal((count, k))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cl.save_vectors(features[None, :], out / "enroll.vec")
    cl.save_vectors(probes, out / "genuine.vec")
    cl.save_vectors(impostors, out / "impostor.vec")
    click.echo(f"wrote {out/'enroll.vec'} {out/'genuine.vec'} {out/'impostor.vec'}")


@main.command("enroll")
@click.option("--tables", "tables_path", type=click.Path(exists=True), required=True)
@click.option("--level", type=click.Choice(["96", "112", "128"]), default="96", show_default=True)
@click.option("--store", type=click.Path(), default="helr-store", show_default=True,
              help="store root (HELR_STORE env var overrides)")
@click.option("--uid", type=str, required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--row", type=int, default=0, show_default=True)
@click.option("--protocol", type=click.Choice(["sh", "mal", "both"]), default="both", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def enroll(tables_path, level, store, uid, features_path, row, protocol, seed):
    """Enroll a user into the store (initializes keys on first use)."""
    try:
        tables = cl.load_tables(tables_path)
        root, cfg_path = _store_paths(store)
        root.mkdir(parents=True, exist_ok=True)
        if cfg_path.exists():
            cfg = json.loads(cfg_path.read_text())
            if cfg["level"] != int(level):
                raise HelrError(f"store was initialized at level {cfg['level']}")
        else:
            cfg = {"level": int(level), "key_seed": seed}
            cfg_path.write_text(json.dumps(cfg))
        params = params_for_level(cfg["level"])
        dep = make_deployment(cfg["level"], tables, seed=cfg["key_seed"],
                              server_store=FileStore(root / "server", params),
                              client_store=FileStore(root / "client", params))
        rows = cl.load_vectors(features_path)
        if not 0 <= row < len(rows):
            raise HelrError(f"row {row} out of range (file has {len(rows)})")
        enroll_user(dep, uid.encode(), rows[row], protocol, seed=seed)
    except HelrError as exc:
        _fail(str(exc))
    click.echo(f"enrolled uid={uid} protocol={protocol} store={root}")


@main.command("verify")
@click.option("--tables", "tables_path", type=click.Path(exists=True), required=True)
@click.option("--store", type=click.Path(), default="helr-store", show_default=True)
@click.option("--uid", type=str, required=True)
@click.option("--probe", "probe_path", type=click.Path(exists=True), required=True)
@click.option("--row", type=int, default=0, show_default=True)
@click.option("--protocol", type=click.Choice(["sh", "mal"]), default="mal", show_default=True)
@click.option("--transport", type=click.Choice(["inproc", "tcp"]), default="inproc", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def verify(tables_path, store, uid, probe_path, row, protocol, transport, seed):
    """Run one verification session. Exit 0 match, 3 no-match, 4 abort."""
    try:
        tables = cl.load_tables(tables_path)
        dep, _ = _load_deployment(store, tables)
        rows = cl.load_vectors(probe_path)
        if not 0 <= row < len(rows):
            raise HelrError(f"row {row} out of range (file has {len(rows)})")
        channel = tcp_pair() if transport == "tcp" else None
        result = run_verification(dep, uid.encode(), rows[row], protocol,
                                  seed=seed, channel=channel)
        if channel is not None:
            for end in channel:
                end.close()
    except HelrError as exc:
        _fail(str(exc))
    click.echo(f"outcome={result.client_outcome.value} protocol={protocol} "
               f"transport={transport} messages={len(result.transcript)}")
    if result.client_outcome is Outcome.NO_MATCH:
        sys.exit(EXIT_NO_MATCH)
    if result.client_outcome is Outcome.ABORT:
        sys.exit(EXIT_ABORT)


@main.command("det")
@click.option("--k", type=int, default=36, show_default=True)
@click.option("--n", type=int, default=16, show_default=True)
@click.option("--delta", type=float, default=0.5, show_default=True)
@click.option("--rho", type=str, required=True)
@click.option("--tables", "tables_path", type=click.Path(exists=True), default=None,
              help="reuse an existing table file instead of rebuilding")
@click.option("--genuine", type=int, default=5000, show_default=True)
@click.option("--impostor", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), default="helr-reports", show_default=True)
def det(k, n, delta, rho, tables_path, genuine, impostor, seed, out_dir):
    """Classifier DET report on synthetic data: CSV, figures, key=value."""
    from .plots import save_det_figure, save_score_figure

    try:
        model = cl.synthetic_model(_parse_rho(rho, k))
        tables = (cl.load_tables(tables_path) if tables_path
                  else cl.build_tables(model, n, delta))
        if tables.k != model.k:
            raise HelrError("table file and model disagree on feature count")
    except HelrError as exc:
        _fail(str(exc))
    rng = np.random.default_rng(seed)
    ga, gb = cl.synth_pairs(model, genuine, True, rng)
    ia, ib = cl.synth_pairs(model, impostor, False, rng)
    g_scores = cl.score_pairs(tables, ga, gb)
    i_scores = cl.score_pairs(tables, ia, ib)
    metrics = cl.det_metrics(g_scores, i_scores)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "det.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fmr", "fnmr"])
        w.writerows(metrics.points())
    save_det_figure(metrics, out / "det.png",
                    title=f"DET, k={tables.k} n={tables.n} delta={tables.delta}")
    save_score_figure(g_scores, i_scores, tables.theta, out / "scores.png")
    click.echo(f"eer={metrics.eer:.6f}")
    click.echo(f"eer_threshold={metrics.eer_threshold:.2f}")
    click.echo(f"fnmr_at_fmr_0.001={metrics.fnmr_at_fmr(0.001):.6f}")
    click.echo(f"theta={tables.theta} s_max={tables.s_max}")
    click.echo(f"csv={out/'det.csv'} det_figure={out/'det.png'} score_figure={out/'scores.png'}")


@main.command("bench")
@click.option("--level", type=click.Choice(["96", "112", "128"]), default="128", show_default=True)
@click.option("--k", type=int, default=94, show_default=True)
@click.option("--n", type=int, default=64, show_default=True)
@click.option("--delta", type=float, default=1.5, show_default=True)
@click.option("--sessions", type=int, default=10, show_default=True)
@click.option("--protocol", type=click.Choice(["sh", "mal", "both"]), default="both", show_default=True)
@click.option("--rho", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--early-exit", is_flag=True,
              help="stop the final scan at the first zero (reproduces the timing asymmetry)")
@click.option("--out-dir", type=click.Path(), default="helr-reports", show_default=True)
def bench(level, k, n, delta, sessions, protocol, rho, seed, early_exit, out_dir):
    """Time verifications and report medians, quartiles and template sizes."""
    from .plots import save_bench_figure

    protocols = ("sh", "mal") if protocol == "both" else (protocol,)
    try:
        results = run_bench(int(level), k, n, delta, sessions, seed=seed,
                            protocols=protocols, rho=rho, early_exit=early_exit)
    except HelrError as exc:
        _fail(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["protocol", "level", "session", "seconds"])
        for r in results:
            for i, t in enumerate(r.times):
                w.writerow([r.protocol, r.level, i, f"{t:.6f}"])
    save_bench_figure(results, out / "bench.png",
                      title=f"k={k} n={n} delta={delta}, {sessions} genuine sessions")
    for r in results:
        click.echo(" ".join(f"{key}={val}" for key, val in r.summary().items()))
    click.echo(f"csv={out/'bench.csv'} figure={out/'bench.png'}")


@main.command("attack")
@click.option("--script", type=click.Choice(sorted(SCRIPTS)), required=True)
@click.option("--protocol", type=click.Choice(["sh", "mal"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--level", type=click.Choice(["96", "112", "128"]), default="96", show_default=True)
def attack(script, protocol, seed, level):
    """Run one scripted adversary and print the machine-readable outcome."""
    try:
        report = run_attack(script, protocol, seed, level=int(level))
    except HelrError as exc:
        _fail(str(exc))
    click.echo(report.to_json())


if __name__ == "__main__":
    main()
