"""Command line entry point: ``mfgsde run|report|schema``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import load_config, schema
from .errors import ConfigurationError
from .runner import CSV_COLUMNS, EXIT_CONFIG, EXIT_DIVERGENCE, jsonable, run_config
from .tensorio import read_csv

__all__ = ["main", "render_table", "write_plots"]

ENV_OUTPUT = "GSDE_OUTPUT_DIR"
ENV_THREADS = "GSDE_THREADS"
DEFAULT_OUTPUT = "mfgsde-run"

_EPILOG = "CSV files written per experiment (columns):\n" + "\n".join(
    f"  {name:<18} {', '.join(cols)}" for name, cols in CSV_COLUMNS.items()
) + f"""

Exit status of 'run': 0 all experiments pass, 1 a check failed, 2 config
error (nothing written), 3 numerical divergence.

Environment: {ENV_OUTPUT} overrides the config output_dir, {ENV_THREADS}
sets the default for --jobs."""


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfgsde", description="Mean-field G-SDE experiment runner.",
                                 epilog=_EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="verb", required=True)
    r = sub.add_parser("run", help="run every experiment of a config", epilog=_EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    r.add_argument("config", help="YAML or JSON run config")
    r.add_argument("--output", "-o", help="artifact directory (overrides env and config)")
    r.add_argument("--jobs", "-j", type=int, default=None,
                   help="experiments run concurrently; outputs are identical for any value")
    p = sub.add_parser("report", help="summarise an artifact directory")
    p.add_argument("directory")
    p.add_argument("--plots", action="store_true",
                   help="write remainder-vs-epsilon PNGs for finite-difference checks")
    sub.add_parser("schema", help="print the config JSON schema")
    return ap


def _jobs(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigurationError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
    return 1


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        jobs = _jobs(args.jobs)
        out = args.output or os.environ.get(ENV_OUTPUT) or cfg.get("output_dir", DEFAULT_OUTPUT)
        res = run_config(cfg, out, jobs)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for e in res.manifest["experiments"]:
        line = f"{e['status']:<12} {e['name']}"
        if e["status"] == "diverged":
            line += f"  (step {e['step']}, scenario {e['scenario']})"
        elif "error" in e:
            line += f"  ({e['error']})"
        print(line)
    s = res.manifest["summary"]
    print(f"{s['passed']}/{s['total']} passed; artifacts in {res.output_dir}")
    if res.status == EXIT_DIVERGENCE:
        print("numerical divergence: see report of " + ", ".join(s["failed"]), file=sys.stderr)
    elif s["failed"]:
        print("failing reports: " + ", ".join(f"{n}/report.json" for n in s["failed"]),
              file=sys.stderr)
    return res.status


def _headline(entry: dict) -> str:
    summ = entry.get("summary") or {}
    if "error" in entry:
        return entry["error"].splitlines()[0]
    parts = []
    for k in sorted(summ):
        v = summ[k]
        parts.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(parts)


def render_table(manifest: dict) -> str:
    """Fixed-width text table, one row per experiment, in run order."""
    rows = [(e["name"], e["type"], e["status"], _headline(e)) for e in manifest["experiments"]]
    head = ("experiment", "type", "status", "summary")
    w = [max(len(str(r[i])) for r in rows + [head]) for i in range(3)]
    lines = [f"{head[0]:<{w[0]}}  {head[1]:<{w[1]}}  {head[2]:<{w[2]}}  {head[3]}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append(f"{r[0]:<{w[0]}}  {r[1]:<{w[1]}}  {r[2]:<{w[2]}}  {r[3]}")
    s = manifest["summary"]
    lines.append(f"{s['passed']}/{s['total']} passed; config hash {manifest['config_hash'][:16]}; "
                 f"seed {manifest['seed']}")
    return "\n".join(lines)


def write_plots(root: Path, manifest: dict) -> list[Path]:
    """One log-log remainder plot per experiment that wrote ``remainders.csv``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = []
    plot_dir = root / "plots"
    for e in manifest["experiments"]:
        src = root / e["name"] / "remainders.csv"
        if not src.exists():
            continue
        _, rows = read_csv(src)
        eps = [float(r[0]) for r in rows]
        rem = [max(float(r[1]), 1e-300) for r in rows]
        plot_dir.mkdir(exist_ok=True)
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.loglog(eps, rem, "o-", label="remainder")
        ref = [rem[0] * (x / eps[0]) ** 2 for x in eps]
        ax.loglog(eps, ref, "k--", lw=0.8, label="slope 2")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("remainder")
        ax.set_title(e["name"])
        ax.legend()
        fig.tight_layout()
        path = plot_dir / f"{e['name']}.png"
        fig.savefig(path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        out.append(path)
    return out


def _cmd_report(args) -> int:
    root = Path(args.directory)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        print(f"no manifest.json in {root}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    print(render_table(manifest))
    if args.plots:
        for p in write_plots(root, manifest):
            print(f"wrote {p}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.verb == "run":
        return _cmd_run(args)
    if args.verb == "report":
        return _cmd_report(args)
    print(json.dumps(jsonable(schema()), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
