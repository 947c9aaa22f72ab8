"""Batch command surface: spectrum tables, construction runs, verification.

Exit codes: 0 success, 2 usage error, 3 certificate failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import (
    cover_estimates_csv,
    gordon_check,
    hausdorff_sum,
    lyapunov_convergence,
    spectrum_distance_check,
)
from .construction import BuildConfig, ConstructionLedger, iterate
from .periodic import PeriodicSampler, band_spectrum

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CERT = 3
EXIT_IO = 4

KNOWN_CHECKS = ("gordon", "hausdorff", "lyapunov", "distance")


class UsageError(ValueError):
    pass


def _load_sampler(path: str) -> PeriodicSampler:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read sampler file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}: malformed sampler file: {exc.msg}") from exc
    if isinstance(doc, list):
        values = doc
    elif isinstance(doc, dict) and "values" in doc:
        values = doc["values"]
    else:
        raise UsageError(f"{path}: sampler file needs a values list")
    try:
        return PeriodicSampler(tuple(float(v) for v in values))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def cmd_spectrum(args: argparse.Namespace) -> int:
    if args.tol <= 0:
        raise UsageError("--tol must be positive")
    f = _load_sampler(args.sampler)
    bs = band_spectrum(f, tol=args.tol, lam=args.lam)
    law = 2.0 * 3.141592653589793 / f.period
    print(f"period {f.period}, coupling {args.lam}, {len(bs.bands)} band(s)")
    for i, (a, b) in enumerate(bs.bands):
        ok = "ok" if (b - a) <= law + 2 * args.tol else "VIOLATION"
        print(f"  band {i}: [{a!r}, {b!r}]  length {b - a!r}  (<= 2*pi/p: {ok})")
    print(f"total measure {bs.total_measure!r}")
    if not bs.resolved:
        print("note: bands below solver resolution; none located")
    if args.csv:
        _write_text(Path(args.csv), bs.to_csv())
        print(f"wrote {args.csv}")
    if args.json_out:
        _write_text(Path(args.json_out), bs.to_json() + "\n")
        print(f"wrote {args.json_out}")
    return EXIT_OK


def cmd_construct(args: argparse.Namespace) -> int:
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}:{exc.lineno}: malformed config: {exc.msg}") from exc
    stage_count = int(doc.pop("stage_count", 2))
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        cfg = BuildConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from exc

    ledger = iterate(cfg, stage_count)
    out_dir = Path(args.out)
    _write_text(out_dir / "ledger.json", ledger.to_json() + "\n")
    _write_text(
        out_dir / "approximants.json",
        json.dumps(ledger.sampler_documents(), sort_keys=True) + "\n",
    )

    for s in ledger.stages:
        gates = [c for c in s.certificates.values() if c["kind"] == "gate"]
        n_pass = sum(1 for c in gates if c["passed"])
        print(
            f"stage {s.index}: period {s.period}, eps {s.eps:.4g}, "
            f"delta {s.delta:.4g}, gates {n_pass}/{len(gates)}"
        )
        for name, c in sorted(s.certificates.items()):
            mark = "pass" if c["passed"] else "FAIL"
            print(f"  [{c['kind']}] {name}: {mark} ({c['value']:.6g} {c['comparator']} {c['threshold']:.6g})")
    print(f"ledger written to {out_dir / 'ledger.json'}")

    if not ledger.complete:
        print(f"construction incomplete: {ledger.failure}", file=sys.stderr)
        return EXIT_CERT
    if not ledger.all_gates_passed():
        print("one or more gate certificates failed", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    if not checks:
        raise UsageError("no checks requested")
    unknown = [c for c in checks if c not in KNOWN_CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(KNOWN_CHECKS)}")
    try:
        ledger = ConstructionLedger.from_json(Path(args.ledger).read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read ledger {args.ledger}: {exc}") from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"{args.ledger}: not a construction ledger: {exc}") from exc

    out_dir = Path(args.out)
    all_ok = True
    for check in checks:
        if check == "gordon":
            report = gordon_check(ledger)
            _write_text(out_dir / "gordon.json", report.to_json() + "\n")
            _write_text(out_dir / "gordon.csv", report.to_csv())
            ok = report.all_pass
        elif check == "hausdorff":
            lam = args.lam
            estimates = [
                hausdorff_sum(ledger, stage, args.alpha, lam)
                for stage in range(1, len(ledger.stages) + 1)
            ]
            ok = True
            if len(estimates) >= 2:
                ok = estimates[-1].cover_sum < estimates[0].cover_sum
            _write_text(
                out_dir / "hausdorff.json",
                json.dumps(
                    {"alpha": args.alpha, "lam": lam, "stages": [e.to_dict() for e in estimates]},
                    sort_keys=True,
                    indent=1,
                )
                + "\n",
            )
            _write_text(out_dir / "hausdorff.csv", cover_estimates_csv(estimates))
        elif check == "lyapunov":
            report = lyapunov_convergence(ledger)
            _write_text(out_dir / "lyapunov.json", report.to_json() + "\n")
            _write_text(out_dir / "lyapunov.csv", report.to_csv())
            ok = report.all_pass
        else:  # distance
            results = []
            ok = True
            for record in ledger.stages:
                fam = record.family()
                passed, dist, bound = spectrum_distance_check(fam.first, fam.last)
                results.append(
                    {"stage": record.index, "distance": dist, "bound": bound, "passed": passed}
                )
                ok = ok and passed
            _write_text(
                out_dir / "distance.json",
                json.dumps({"pairs": results}, sort_keys=True, indent=1) + "\n",
            )
        print(f"check {check}: {'pass' if ok else 'FAIL'}")
        all_ok = all_ok and ok
    return EXIT_OK if all_ok else EXIT_CERT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpspec",
        description="Construct limit-periodic potentials in stages and verify "
        "their spectral certificates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="Band table of a periodic sampler.")
    sp.add_argument("--sampler", required=True, metavar="FILE")
    sp.add_argument("--lambda", dest="lam", type=float, default=1.0, metavar="X")
    sp.add_argument("--tol", type=float, default=1e-10, metavar="X")
    sp.add_argument("--csv", default=None, metavar="OUT")
    sp.add_argument("--json-out", default=None, metavar="OUT")
    sp.set_defaults(func=cmd_spectrum)

    co = sub.add_parser("construct", help="Run the staged construction.")
    co.add_argument("--config", required=True, metavar="PATH")
    co.add_argument("--out", required=True, metavar="DIR")
    co.add_argument("--seed", type=int, default=None, metavar="N")
    co.set_defaults(func=cmd_construct)

    ve = sub.add_parser("verify", help="Run post-construction checks on a ledger.")
    ve.add_argument("--ledger", required=True, metavar="FILE")
    ve.add_argument("--checks", required=True, metavar="LIST",
                    help=f"comma-separated subset of {{{','.join(KNOWN_CHECKS)}}}")
    ve.add_argument("--out", required=True, metavar="DIR")
    ve.add_argument("--alpha", type=float, default=0.5, metavar="X")
    ve.add_argument("--lambda", dest="lam", type=float, default=1.0, metavar="X")
    ve.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
