"""Command line interface: sample, estimate, eigen, verify, scan, report.

Settings come from built-in defaults, then an optional ``key = value``
config file (one section per subcommand, plus a shared ``[model]``
section), then command-line flags.  Every run writes ``manifest.json`` next
to its outputs.  The default output directory is ``$DYSONFK_OUT`` or
``./dysonfk-out``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .couplings import family_from_config
from .estimators import (batch_means, beta_scan, cluster_tail, cut_statistics, hn_convergence,
                         moment_check)
from .oracle import verify_identities
from .sampler import RCConfig, SweepRecord, rc_mcmc
from .transfer import NotConverged, build_transfer_matrix, eigenfunction_profile, power_iteration

OUT_ENV = "DYSONFK_OUT"
MODEL_KEYS = {"coupling": str, "alpha": float, "beta": float, "J": str}

# key -> (type, default); None default means "required" unless noted
SCHEMAS = {
    "sample": {**MODEL_KEYS, "volume": int, "lo": int, "q": float, "boundary": str, "exterior": str,
               "sweeps": int, "burn_in": int, "thin": int, "seed": int, "chains": int, "workers": int,
               "origin": int, "spins": bool, "out": str},
    "estimate": {"input": list, "n_max": int, "min_count": int, "hn": bool, **MODEL_KEYS,
                 "L": int, "ns": str, "n_w": int, "n_alpha": int, "panel_size": int, "seed": int,
                 "out": str},
    "eigen": {**MODEL_KEYS, "m": int, "tol": float, "max_iters": int, "h_csv": str, "out": str},
    "verify": {**MODEL_KEYS, "L": int, "range_cutoff": int, "out": str},
    "scan": {**MODEL_KEYS, "beta_grid": str, "volumes": str, "sweeps": int, "burn_in": int,
             "seed": int, "out": str},
    "report": {"input": list, "out": str},
}

DEFAULTS = {
    "sample": {"coupling": "dyson", "alpha": 2.0, "beta": 0.3, "volume": 1024, "lo": 0, "q": 2.0,
               "boundary": "free", "exterior": "Z", "sweeps": 1000, "burn_in": 100, "thin": 1,
               "chains": 1, "workers": 1, "spins": False},
    "estimate": {"n_max": 4, "min_count": 30, "hn": False, "coupling": "dyson", "alpha": 2.0,
                 "beta": 0.3, "L": 512, "ns": "4,8,16,32,64", "n_w": 200000, "n_alpha": 600,
                 "panel_size": 100, "seed": 0},
    "eigen": {"coupling": "dyson", "alpha": 2.0, "beta": 0.5, "m": 12, "tol": 1e-10,
              "max_iters": 100000},
    "verify": {"coupling": "dyson", "alpha": 2.0, "beta": 0.4, "L": 2, "range_cutoff": 3},
    "scan": {"coupling": "dyson", "alpha": 2.0, "beta_grid": "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0",
             "volumes": "512,1024", "sweeps": 2000, "seed": 0},
    "report": {},
}

REQUIRED = {"sample": ("seed",)}


class ConfigError(ValueError):
    pass


def _convert(key: str, typ, raw):
    if raw is None:
        return None
    try:
        if typ is bool:
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is list:
            return [v for v in (raw if isinstance(raw, list) else str(raw).split()) if v]
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: invalid value {raw!r}") from None


def read_config_file(path, subcommand: str) -> dict:
    """Values from the ``[model]`` and ``[<subcommand>]`` sections; unknown keys rejected."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path):
        raise ConfigError(f"config: cannot read {path}")
    schema = SCHEMAS[subcommand]
    out = {}
    for section in ("model", subcommand):
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            k = key.replace("-", "_")
            if k not in schema:
                raise ConfigError(f"{k}: unknown key in section [{section}] of {path}")
            out[k] = _convert(k, schema[k], raw)
    for section in cp.sections():
        if section not in ("model",) + tuple(SCHEMAS):
            raise ConfigError(f"[{section}]: unknown section in {path}")
    return out


def parse_config(subcommand: str, flags: dict, config_path=None) -> tuple:
    """(resolved config, provenance) with flags overriding file values."""
    schema = SCHEMAS[subcommand]
    file_vals = read_config_file(config_path, subcommand) if config_path else {}
    flag_vals = {k: _convert(k, schema[k], v) for k, v in flags.items() if k in schema and v is not None}
    unknown = [k for k, v in flags.items() if k not in schema and v is not None]
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key for {subcommand}")
    cfg = dict(DEFAULTS[subcommand])
    cfg.update(file_vals)
    cfg.update(flag_vals)
    for k in REQUIRED.get(subcommand, ()):
        if cfg.get(k) is None:
            raise ConfigError(f"{k}: required for {subcommand} (no implicit entropy)")
    prov = {}
    for k in sorted(set(file_vals) | set(flag_vals)):
        prov[k] = {"file": file_vals.get(k), "flag": flag_vals.get(k)}
    _validate(subcommand, cfg)
    return cfg, prov


def _family(cfg: dict):
    try:
        return family_from_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _validate(subcommand: str, cfg: dict) -> None:
    if "coupling" in cfg:
        _family(cfg)
    for k in ("volume", "sweeps", "chains", "workers", "thin", "m", "L", "n_w", "n_alpha"):
        if k in cfg and cfg[k] is not None and cfg[k] < (0 if k == "sweeps" else 1):
            raise ConfigError(f"{k}: must be positive, got {cfg[k]}")
    if cfg.get("boundary") not in (None, "free", "wired"):
        raise ConfigError(f"boundary: must be free or wired, got {cfg['boundary']!r}")
    if cfg.get("q") is not None and cfg["q"] < 1:
        raise ConfigError(f"q: must be >= 1, got {cfg['q']}")


def _out_dir(cfg: dict) -> Path:
    p = Path(cfg.get("out") or os.environ.get(OUT_ENV) or "dysonfk-out")
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{p}: cannot create output directory ({exc.strerror})") from exc
    return p


def _write_manifest(out: Path, subcommand: str, cfg: dict, prov: dict, outputs: list, t0: float,
                    seeds=None) -> Path:
    man = {
        "subcommand": subcommand,
        "config": cfg,
        "sources": prov,
        "seeds": seeds,
        "version": __version__,
        "outputs": [str(Path(o).name) for o in outputs],
        "wall_clock_seconds": round(time.time() - t0, 3),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return path


# --- sample --------------------------------------------------------------

def _rc_config(cfg: dict) -> RCConfig:
    lo = cfg["lo"]
    return RCConfig(lo, lo + cfg["volume"], _family(cfg), q=cfg["q"], boundary=cfg["boundary"],
                    exterior=cfg["exterior"], sweeps=cfg["sweeps"], burn_in=cfg["burn_in"],
                    seed=cfg["seed"], thinning=cfg["thin"], origin=cfg.get("origin"))


def _run_chain(args) -> list:
    cfg, chain = args
    rc = _rc_config(cfg)
    return [r.to_json() for r in rc_mcmc(rc, chain=chain, record_spins=cfg["spins"])]


def cmd_sample(cfg: dict, prov: dict) -> int:
    t0 = time.time()
    out = _out_dir(cfg)
    jobs = [(cfg, c) for c in range(cfg["chains"])]
    if cfg["workers"] > 1 and cfg["chains"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["workers"]) as ex:
            lines = list(ex.map(_run_chain, jobs))
    else:
        lines = [_run_chain(j) for j in jobs]
    path = out / "sweeps.jsonl"
    with open(path, "w") as fh:
        for chain_lines in lines:
            for ln in chain_lines:
                fh.write(ln + "\n")
    recs = [SweepRecord.from_json(ln) for chain_lines in lines for ln in chain_lines]
    summary = {"n_records": len(recs)}
    if recs:
        for key in ("w", "largest", "origin_size", "n_edges", "r_limit"):
            summary[key] = batch_means([getattr(r, key) for r in recs]).as_dict()
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "sample", cfg, prov, [path, spath], t0,
                    seeds=[[cfg["seed"], c] for c in range(cfg["chains"])])
    print(json.dumps(summary, sort_keys=True))
    return 0


# --- estimate ------------------------------------------------------------

def _load_records(path) -> list:
    recs = []
    with open(path) as fh:
        for k, line in enumerate(fh, 1):
            if line.strip():
                try:
                    recs.append(SweepRecord.from_json(line))
                except (KeyError, json.JSONDecodeError) as exc:
                    raise ValueError(f"{path}:{k}: malformed sweep record ({exc})") from None
    return recs


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_estimate(cfg: dict, prov: dict) -> int:
    t0 = time.time()
    out = _out_dir(cfg)
    outputs = []
    report = {}
    if cfg.get("hn"):
        res = hn_convergence(_family(cfg), cfg["L"], [int(v) for v in cfg["ns"].split(",")],
                             n_w=cfg["n_w"], n_alpha=cfg["n_alpha"], panel_size=cfg["panel_size"],
                             seed=cfg["seed"])
        report["hn_convergence"] = res.as_dict()
        p = out / "hn.csv"
        _write_csv(p, ["n", "sup_diff", "sup_diff_se", "bound", "xi_N_gt_n", "inf_h"],
                   [[n, *(res.sup_diff(n) if n in res.diff else (math.nan, math.nan)), res.bound[n],
                     res.xi_tail[n].mean, float(np.min(res.h[n][0]))] for n in res.ns])
        outputs.append(p)
    inputs = cfg.get("input") or []
    if not inputs and not cfg.get("hn"):
        raise ConfigError("input: at least one sweep file (or hn = true) is required")
    recs = []
    configs = []
    for path in inputs:
        recs.extend(_load_records(path))
        man = Path(path).parent / "manifest.json"
        if man.exists():
            configs.append(json.loads(man.read_text()).get("config"))
    if recs:
        report["n_records"] = len(recs)
        report["largest"] = batch_means([r.largest for r in recs]).as_dict()
        report["origin_size"] = batch_means([r.origin_size for r in recs]).as_dict()
        fit = cluster_tail(recs, min_count=cfg["min_count"])
        report["cluster_tail"] = fit.as_dict()
        if not fit.degenerate and fit.c > 0:
            report["moment_check"] = moment_check(recs, cfg["n_max"], fit)
        cs = cut_statistics(recs)
        report["cut_statistics"] = cs
        p1, p2 = out / "tail.csv", out / "xi.csv"
        _write_csv(p1, ["n", "survival", "count"],
                   [[int(n), float(s), int(c)] for n, s, c in zip(fit.n, fit.survival, fit.counts)])
        _write_csv(p2, ["n", "xi_N_gt_n"], list(enumerate(cs["xi_N_gt_n"])))
        outputs += [p1, p2]
    if configs:
        report["source_config"] = configs[0] if all(c == configs[0] for c in configs) else configs
    rp = out / "estimate.json"
    rp.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    outputs.append(rp)
    _write_manifest(out, "estimate", cfg, prov, outputs, t0)
    print(f"wrote {rp}")
    return 0


# --- eigen / verify / scan --------------------------------------------------

def cmd_eigen(cfg: dict, prov: dict) -> int:
    t0 = time.time()
    out = _out_dir(cfg)
    M = build_transfer_matrix(_family(cfg), cfg["m"])
    status = 0
    try:
        lam, h, res, iters = power_iteration(M, cfg["tol"], cfg["max_iters"])
        converged = True
    except NotConverged as exc:
        lam, h, res, iters, converged, status = exc.lam, exc.h, exc.residual, exc.iterations, False, 2
    rec = {"m": cfg["m"], "lambda": lam, "residual": res, "iters": iters, "converged": converged,
           "var_profile": eigenfunction_profile(h, cfg["m"])}
    path = out / "eigen.json"
    path.write_text(json.dumps(rec, indent=2) + "\n")
    outputs = [path]
    if cfg.get("h_csv"):
        hp = Path(cfg["h_csv"])
        _write_csv(hp, ["state_index", "h_value"], [[i, repr(float(v))] for i, v in enumerate(h)])
        outputs.append(hp)
    _write_manifest(out, "eigen", cfg, prov, outputs, t0)
    print(json.dumps(rec))
    return status


def cmd_verify(cfg: dict, prov: dict) -> int:
    t0 = time.time()
    out = _out_dir(cfg)
    rep = verify_identities(cfg["L"], _family(cfg), cfg["range_cutoff"])
    print(rep.table())
    path = out / "verify.json"
    path.write_text(json.dumps(rep.as_dict(), indent=2) + "\n")
    _write_manifest(out, "verify", cfg, prov, [path], t0)
    return 0 if rep.passed else 1


def cmd_scan(cfg: dict, prov: dict) -> int:
    t0 = time.time()
    out = _out_dir(cfg)
    grid = [float(v) for v in cfg["beta_grid"].split(",")]
    vols = [int(v) for v in cfg["volumes"].split(",")]
    res = beta_scan(_family(cfg), grid, vols, cfg["sweeps"], cfg["seed"], cfg.get("burn_in"))
    p1 = out / "scan.csv"
    keys = list(res["rows"][0])
    _write_csv(p1, keys, [[r[k] for k in keys] for r in res["rows"]])
    p2 = out / "scan.json"
    p2.write_text(json.dumps(res, indent=2) + "\n")
    _write_manifest(out, "scan", cfg, prov, [p1, p2], t0)
    print(f"crossing: {res['crossing']} ({res['crossing_label']})")
    return 0


# --- report ----------------------------------------------------------------

POOLED = ("largest", "origin_size")


def _pool(ests: list) -> dict:
    w = np.array([1.0 / e["std_error"] ** 2 if e["std_error"] > 0 else 0.0 for e in ests])
    m = np.array([e["mean"] for e in ests])
    if w.sum() == 0:
        return {"mean": float(m.mean()), "std_error": 0.0, "n_samples": sum(e["n_samples"] for e in ests)}
    return {"mean": float(np.sum(w * m) / w.sum()), "std_error": float(1.0 / math.sqrt(w.sum())),
            "n_samples": int(sum(e["n_samples"] for e in ests))}


def _comparable(c):
    if not isinstance(c, dict):
        return None
    return {k: v for k, v in c.items() if k not in ("seed", "out", "chains", "workers")}


def cmd_report(cfg: dict, prov: dict) -> int:
    t0 = time.time()
    out = _out_dir(cfg)
    inputs = cfg.get("input") or []
    if not inputs:
        raise ConfigError("input: at least one estimate file is required")
    reps = []
    for path in inputs:
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: unreadable estimate report ({exc})") from None
        if not isinstance(d, dict) or not any(k in d for k in POOLED + ("hn_convergence",)):
            raise ValueError(f"{path}: not an estimate report (schema mismatch)")
        reps.append((path, d))
    cfgs = [_comparable(d.get("source_config")) for _, d in reps]
    poolable = len(reps) > 1 and all(c is not None and c == cfgs[0] for c in cfgs)
    lines, rows = [], []
    if poolable:
        lines.append(f"pooled over {len(reps)} inputs with identical configuration")
        for key in POOLED:
            ests = [d[key] for _, d in reps if key in d]
            if ests:
                p = _pool(ests)
                lines.append(f"  {key:<12} {p['mean']:.6g} +- {p['std_error']:.3g} (n={p['n_samples']})")
                rows.append(["pooled", key, p["mean"], p["std_error"], p["n_samples"]])
    else:
        if len(reps) > 1:
            lines.append("inputs differ in configuration; reported separately")
        for path, d in reps:
            lines.append(f"[{path}]")
            for key in POOLED:
                if key in d:
                    e = d[key]
                    lines.append(f"  {key:<12} {e['mean']:.6g} +- {e['std_error']:.3g} (n={e['n_samples']})")
                    rows.append([str(path), key, e["mean"], e["std_error"], e["n_samples"]])
            if "cluster_tail" in d:
                t = d["cluster_tail"]
                lines.append(f"  tail fit     K={t['K']:.4g} c={t['c']:.4g} CI95={t['c_ci95']}")
            if "hn_convergence" in d:
                h = d["hn_convergence"]
                for n, v in h["sup_diff"].items():
                    lines.append(f"  h_n n={n:<4} sup|h_2n-h_n|={v[0]:.4g} +- {v[1]:.2g}  "
                                 f"bound={h['bound'][n]:.4g}")
    text = "\n".join(lines) + "\n"
    tp, cp = out / "summary.txt", out / "summary.csv"
    tp.write_text(text)
    _write_csv(cp, ["source", "quantity", "mean", "std_error", "n_samples"], rows)
    _write_manifest(out, "report", cfg, prov, [tp, cp], t0)
    sys.stdout.write(text)
    return 0


COMMANDS = {"sample": cmd_sample, "estimate": cmd_estimate, "eigen": cmd_eigen,
            "verify": cmd_verify, "scan": cmd_scan, "report": cmd_report}


def _model_flags(p):
    p.add_argument("--coupling", choices=["dyson", "finite"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--J", help="finite coupling values J(0),J(1),... (J(0) must be 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dysonfk", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file with [model] and per-command sections")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./dysonfk-out)")

    p = sub.add_parser("sample", help="run random-cluster chains and write sweep records")
    common(p)
    _model_flags(p)
    p.add_argument("--volume", type=int)
    p.add_argument("--lo", type=int, help="left end of the volume (default 0)")
    p.add_argument("--q", type=float)
    p.add_argument("--boundary", choices=["free", "wired"])
    p.add_argument("--exterior", choices=["Z", "N"])
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--origin", type=int)
    p.add_argument("--spins", action="store_const", const=True)
    p.add_argument("--replay", help="rerun the configuration stored in a manifest.json")

    p = sub.add_parser("estimate", help="estimators over sweep files, or the h_n panel")
    common(p)
    p.add_argument("--input", nargs="+")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--hn", action="store_const", const=True)
    _model_flags(p)
    p.add_argument("--L", type=int)
    p.add_argument("--ns")
    p.add_argument("--n-w", dest="n_w", type=int)
    p.add_argument("--n-alpha", dest="n_alpha", type=int)
    p.add_argument("--panel-size", dest="panel_size", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("eigen", help="leading eigenpair of the truncated transfer operator")
    common(p)
    _model_flags(p)
    p.add_argument("--m", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--h-csv", dest="h_csv")

    p = sub.add_parser("verify", help="exact identity checks by enumeration")
    common(p)
    _model_flags(p)
    p.add_argument("--L", type=int)
    p.add_argument("--range-cutoff", dest="range_cutoff", type=int)

    p = sub.add_parser("scan", help="percolation diagnostics over a beta grid")
    common(p)
    _model_flags(p)
    p.add_argument("--beta-grid", dest="beta_grid")
    p.add_argument("--volumes")
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("report", help="merge estimate reports into text and CSV")
    common(p)
    p.add_argument("--input", nargs="+")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config", "replay")}
    sc = args.subcommand
    try:
        replay = getattr(args, "replay", None)
        if replay:
            man = json.loads(Path(replay).read_text())
            if man.get("subcommand") != sc:
                raise ConfigError(f"replay: manifest is for {man.get('subcommand')!r}, not {sc!r}")
            base = {k: v for k, v in man["config"].items() if v is not None}
            base.update({k: v for k, v in flags.items() if v is not None})
            cfg, prov = parse_config(sc, base)
            prov = {"replay": str(replay), **prov}
        else:
            cfg, prov = parse_config(sc, flags, args.config)
        return COMMANDS[sc](cfg, prov)
    except ConfigError as exc:
        print(f"dysonfk {sc}: configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"dysonfk {sc}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
