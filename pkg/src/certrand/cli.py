"""certrand command line.

Exit codes: 0 pass, 2 protocol abort, 3 transport failure, 4 configuration
error.  Analysis commands write CSV to stdout or ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import socket
import sys
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from . import security as sec
from .circuits import (
    SeedMaterial,
    TopologyError,
    circuit_digest,
    gen_circuit,
    gen_topology,
    parse_topology,
    serialize_circuit,
    serialize_topology,
)
from .extractor import extract_transcript, seed_bits_from_key, write_extraction
from .protocol import (
    EXIT_ABORT,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_TRANSPORT,
    AdversaryServer,
    CircuitSource,
    ClientOutcome,
    ConfigError,
    HonestServer,
    LatencyModel,
    ProtocolConfig,
    RunResult,
    Transcript,
    run_protocol,
    verify,
)
from .simulator import ProbabilityCache

log = logging.getLogger("certrand")

REPRO_KEYS = (
    "n",
    "M",
    "m",
    "chi",
    "t_threshold_s",
    "B_flops",
    "frontier_flops",
    "adversary_frontier_multiples",
    "eps_sou",
    "operating_frontier",
    "operating_eps_sou",
    "phi",
)


def default_repro_params() -> dict:
    p = dict(sec.FULL_SCALE)
    p.update(operating_frontier=4, operating_eps_sou=1e-6, phi=0.3)
    return p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _write_csv(rows: list[dict], out: str | None) -> None:
    if not rows:
        return
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def _load_config(args) -> ProtocolConfig:
    cfg = ProtocolConfig.from_file(args.params) if args.params else ProtocolConfig()
    over = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            over[key] = json.loads(val)
        except json.JSONDecodeError:
            over[key] = val
    if over:
        cfg = ProtocolConfig.from_dict({**cfg.to_dict(), **over})
    return cfg


def _add_config_args(p):
    p.add_argument("--params", help="flat JSON protocol config (keys as in ProtocolConfig)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def _add_server_args(p):
    p.add_argument("--phi", type=float, default=0.3, help="honest server fidelity (default 0.3)")
    p.add_argument("--Q", type=int, default=0, help="adversary quantum rounds (default 0)")
    p.add_argument("--M-prime", type=int, default=64, help="frugal sampling candidate count (default 64)")
    p.add_argument("--per-sample-s", type=float, default=0.0, help="simulated service time per circuit")
    p.add_argument("--jitter-s", type=float, default=0.0, help="uniform extra service time per circuit")
    p.add_argument("--calibration-every", type=int, default=0, help="pause before every k-th batch")
    p.add_argument("--calibration-s", type=float, default=0.0, help="length of a calibration pause")
    p.add_argument("--rng-seed", type=int, default=None, help="server sampling RNG seed")


def _make_server(kind: str, args, cfg: ProtocolConfig, cache: ProbabilityCache):
    kw = dict(
        latency=LatencyModel(args.per_sample_s, args.jitter_s, args.calibration_every, args.calibration_s),
        rng=np.random.default_rng(args.rng_seed),
        cache=cache,
    )
    if kind == "honest":
        return HonestServer(args.phi, **kw)
    return AdversaryServer(
        args.Q, cfg.M, cfg.adversary_P_eff_flops, cfg.B_flops, cfg.t_threshold_s, args.M_prime, **kw
    )


def _adversary(cfg: ProtocolConfig) -> sec.AdversaryParams:
    return sec.AdversaryParams(
        P_eff=cfg.adversary_P_eff_flops, B=cfg.B_flops, M=cfg.M, m=cfg.m, t_threshold=cfg.t_threshold_s, n=cfg.n
    )


def _extract(cfg: ProtocolConfig, transcript: Transcript, out: Path, ell: int | None = None):
    bound = sec.certify(_adversary(cfg), cfg.chi, cfg.eps_sou)
    if ell is None:
        ell = cfg.ell if cfg.ell is not None else bound.ell_toeplitz
    if ell == 0:
        log.warning("nothing certified at eps_sou=%g (Q_min=%d); output is empty", cfg.eps_sou, bound.Q_min)
    samples = [x for _, x in transcript.kept_samples()]
    key = bytes.fromhex(cfg.ext_seed_hex) if cfg.ext_seed_hex else cfg.seed.derive(b"certrand/extractor")
    n_in = len(samples) * cfg.n
    seed = seed_bits_from_key(key, n_in + ell - 1 if ell else 0)
    res = extract_transcript(
        samples, cfg.n, seed, ell, eps_sou=cfg.eps_sou, Q_min=bound.Q_min, H_min=bound.H_min
    )
    man = write_extraction(res, out)
    return res, man, bound


# subcommands


def cmd_gen_topology(args) -> int:
    topo = gen_topology(args.n, args.d, args.topo_seed, allow_repeats=args.allow_repeats)
    data = serialize_topology(topo, args.topo_seed)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode("ascii"))
    return EXIT_OK


def cmd_gen_circuits(args) -> int:
    if args.topology:
        topo, _ = parse_topology(Path(args.topology).read_bytes())
    else:
        topo = gen_topology(args.n, args.d, args.topo_seed, allow_repeats=args.d > args.n - 1)
    seed = SeedMaterial.from_hex(args.k_seed_hex)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for cid in range(args.start, args.start + args.count):
        raw = serialize_circuit(gen_circuit(topo, seed, cid))
        path = out_dir / f"circuit_{cid:06d}.txt"
        path.write_bytes(raw)
        rows.append({"circuit_id": cid, "path": str(path), "sha256": circuit_digest(raw)})
    _write_csv(rows, args.out)
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _load_config(args)
    server = _make_server(args.kind, args, cfg, ProbabilityCache())
    listener = socket.create_server((cfg.host, cfg.port))
    host, port = listener.getsockname()[:2]
    print(f"listening on {host}:{port}", flush=True)
    stop = threading.Event()
    try:
        server.serve(listener, stop, max_clients=args.max_clients)
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        listener.close()
    return EXIT_OK


def _manifest(cfg: ProtocolConfig, result: RunResult, transcript_path: Path, extra: dict) -> dict:
    man = {
        "config_digest": cfg.digest(),
        "seeds": {"k_seed_hex": cfg.k_seed_hex, "topo_seed": cfg.topo_seed, "test_set_nonce": cfg.test_set_nonce},
        "transcript": str(transcript_path),
        "verification": result.summary(),
    }
    man.update(extra)
    return man


def cmd_run_client(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache = ProbabilityCache()
    server = _make_server(args.spawn_server, args, cfg, cache) if args.spawn_server else None
    result = run_protocol(cfg, server, cache=cache)
    tpath = out_dir / "transcript.jsonl"
    result.outcome.transcript.save(tpath)
    extra = {"security_bounds": None, "extraction": None}
    if result.abort is None and not args.no_extract:
        res, man, bound = _extract(cfg, result.outcome.transcript, out_dir / "random.bin")
        extra["security_bounds"] = bound.as_row()
        extra["extraction"] = {"output": str(out_dir / "random.bin"), "manifest": str(man), "ell": res.manifest["ell"]}
    man = _manifest(cfg, result, tpath, extra)
    (out_dir / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    print(json.dumps(man["verification"], sort_keys=True))
    return result.exit_code


def _reverify(cfg: ProtocolConfig, path: str) -> RunResult:
    t = Transcript.load(cfg.n, path)
    outcome = ClientOutcome(t)
    if t.M_keep != cfg.M:
        outcome = ClientOutcome(t, "incomplete", f"transcript keeps {t.M_keep} of {cfg.M} samples")
    elif t.t_qc > cfg.t_threshold_s:
        outcome = ClientOutcome(t, "time", f"t_qc={t.t_qc:.4g} s exceeds {cfg.t_threshold_s} s")
    ver = None
    if outcome.abort is None:
        source = CircuitSource(cfg.topology(), cfg.seed)
        ver = verify(t, source, cfg.m, cfg.chi, nonce=cfg.test_set_nonce)
    return RunResult(outcome, ver)


def cmd_verify(args) -> int:
    cfg = _load_config(args)
    result = _reverify(cfg, args.transcript)
    print(json.dumps(result.summary(), sort_keys=True))
    return EXIT_OK if result.abort is None else EXIT_ABORT


def cmd_extract(args) -> int:
    cfg = _load_config(args)
    result = _reverify(cfg, args.transcript)
    if result.abort is not None:
        print(json.dumps(result.summary(), sort_keys=True))
        log.error("transcript did not pass verification; nothing extracted")
        return EXIT_ABORT
    res, man, _ = _extract(cfg, result.outcome.transcript, Path(args.out), args.ell)
    print(json.dumps(res.manifest, sort_keys=True))
    return EXIT_OK


def cmd_bounds(args) -> int:
    P = args.P_eff_flops if args.P_eff_flops is not None else args.adversary_frontier * args.frontier_flops
    a = sec.AdversaryParams(P_eff=P, B=args.B_flops, M=args.M, m=args.m, t_threshold=args.t_threshold_s, n=args.n)
    rows = []
    for eps in args.eps_sou:
        r = sec.certify(a, args.chi, eps)
        b = sec.eps_adv(a, r.Q_min, args.chi, eps)
        row = {"P_eff_flops": P, **r.as_row(), "Phi": b.Phi, "L_max": b.L_max, "eps_adv": b.eps_adv}
        rows.append(row)
    _write_csv(rows, args.out)
    return EXIT_OK


def _repro_params(path: str | None) -> dict:
    if not path:
        return default_repro_params()
    try:
        p = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read {path}: {e}") from None
    missing = [k for k in REPRO_KEYS if k not in p]
    if missing:
        raise ConfigError(f"missing parameter keys: {missing}")
    return p


def reproduce(p: dict) -> dict[str, list[dict]]:
    """Rate table, operating-point row and honest failure probability as CSV-ready rows."""
    base = sec.AdversaryParams(
        P_eff=0.0, B=p["B_flops"], M=p["M"], m=p["m"], t_threshold=p["t_threshold_s"], n=p["n"]
    )
    table = sec.rate_table(base, p["chi"], p["eps_sou"], p["adversary_frontier_multiples"], p["frontier_flops"])
    for row in table:
        row["rate_2dp"] = f"{row['rate']:.2f}"
    op = sec.certify(
        sec.AdversaryParams(
            P_eff=p["operating_frontier"] * p["frontier_flops"],
            B=p["B_flops"], M=p["M"], m=p["m"], t_threshold=p["t_threshold_s"], n=p["n"],
        ),
        p["chi"],
        p["operating_eps_sou"],
    )
    op_row = {"adversary_frontier": p["operating_frontier"], **op.as_row()}
    pf = {"chi": p["chi"], "phi": p["phi"], "m": p["m"], "p_fail": sec.p_fail(p["chi"], p["phi"], p["m"])}
    return {"rate_table": table, "operating_point": [op_row], "p_fail": [pf]}


def cmd_reproduce_paper(args) -> int:
    out = reproduce(_repro_params(args.params))
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, rows in out.items():
            _write_csv(rows, str(d / f"{name}.csv"))
    else:
        for name, rows in out.items():
            print(f"# {name}")
            _write_csv(rows, None)
    return EXIT_OK


def outlook_rows(phis, t_qcs, *, panels: str = "abc", **kw) -> list[dict]:
    common = {k: kw[k] for k in ("eps_sou", "p_fail_target", "frontier_flops") if k in kw}
    rows = []
    for phi in phis:
        for t in t_qcs:
            row = {"phi": phi, "t_qc_s": t}
            if "a" in panels:
                pt = sec.asymptotic_rate(phi, t, adversary_frontier=kw.get("adversary_frontier", 4), **common)
                row.update(h=pt.h, R_Q=pt.R_Q, m=pt.m, chi=pt.chi, bits_per_min=pt.bits_per_min,
                           reaches_beacon_rate=pt.reaches_beacon_rate)
            if "b" in panels:
                row["max_adversary_frontier"] = sec.max_adversary(
                    phi, t, h_target=kw.get("h_target", 0.01),
                    **{k: v for k, v in common.items() if k != "frontier_flops"},
                    frontier_flops=kw.get("frontier_flops", sec.FRONTIER_FLOPS),
                )
            if "c" in panels:
                row["min_eps_sou"] = sec.min_eps_sou(
                    phi, t, h_target=kw.get("h_target", 0.01), adversary_frontier=kw.get("adversary_frontier", 4),
                    p_fail_target=kw.get("p_fail_target", 1e-4),
                    frontier_flops=kw.get("frontier_flops", sec.FRONTIER_FLOPS),
                )
            rows.append(row)
    return rows


def cmd_outlook(args) -> int:
    if not set(args.panels) <= set("abc") or not args.panels:
        raise ConfigError("--panels takes letters from 'abc'")
    rows = outlook_rows(
        args.phi, args.t_qc, panels=args.panels, adversary_frontier=args.adversary_frontier,
        eps_sou=args.eps_sou, p_fail_target=args.p_fail, h_target=args.h_target,
        frontier_flops=args.frontier_flops,
    )
    _write_csv(rows, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    T = sec.FULL_SCALE
    p = _Parser(prog="certrand", description="Certified randomness from random circuit sampling.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("gen-topology", help="generate a d-regular layer schedule")
    s.add_argument("--n", type=int, default=T["n"])
    s.add_argument("--d", type=int, default=10)
    s.add_argument("--topo-seed", type=int, default=0)
    s.add_argument("--allow-repeats", action="store_true", help="permit repeated pairs when d > n - 1")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gen_topology)

    s = sub.add_parser("gen-circuits", help="write challenge circuits as text files")
    s.add_argument("--topology", help="topology file from gen-topology")
    s.add_argument("--n", type=int, default=T["n"])
    s.add_argument("--d", type=int, default=10)
    s.add_argument("--topo-seed", type=int, default=0)
    s.add_argument("--k-seed-hex", default="00c0ffee")
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--out", help="CSV index (default stdout)")
    s.set_defaults(func=cmd_gen_circuits)

    s = sub.add_parser("serve", help="run an honest or adversarial server")
    _add_config_args(s)
    s.add_argument("--kind", choices=("honest", "adversary"), default="honest")
    s.add_argument("--max-clients", type=int, default=None)
    _add_server_args(s)
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("run-client", help="run the protocol client, verify and extract on pass")
    _add_config_args(s)
    s.add_argument("--spawn-server", choices=("honest", "adversary"), help="serve in-process on an ephemeral port")
    s.add_argument("--out-dir", default="run")
    s.add_argument("--no-extract", action="store_true")
    _add_server_args(s)
    s.set_defaults(func=cmd_run_client)

    s = sub.add_parser("verify", help="re-verify a saved transcript")
    _add_config_args(s)
    s.add_argument("--transcript", required=True)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("extract", help="Toeplitz-extract a verified transcript")
    _add_config_args(s)
    s.add_argument("--transcript", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--ell", type=int, default=None, help="output bits (default: certified Toeplitz length)")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("bounds", help="Q_min, smooth min-entropy and extractable length")
    s.add_argument("--n", type=int, default=T["n"])
    s.add_argument("--M", type=int, default=T["M"])
    s.add_argument("--m", type=int, default=T["m"])
    s.add_argument("--chi", type=float, default=T["chi"])
    s.add_argument("--t-threshold-s", type=float, default=T["t_threshold_s"])
    s.add_argument("--B-flops", type=float, default=T["B_flops"])
    s.add_argument("--adversary-frontier", type=float, default=4)
    s.add_argument("--frontier-flops", type=float, default=sec.FRONTIER_FLOPS)
    s.add_argument("--P-eff-flops", type=float, default=None, help="overrides frontier multiples")
    s.add_argument("--eps-sou", type=_floats, default=[1e-6])
    s.add_argument("--out")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("reproduce-paper", help="rate table, operating point and p_fail as CSV")
    s.add_argument("--params", help="JSON with keys: " + ", ".join(REPRO_KEYS))
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_reproduce_paper)

    s = sub.add_parser("outlook", help="asymptotic rate grid over fidelity and time per sample")
    s.add_argument("--phi", type=_floats, default=[0.3, 0.5, 0.67])
    s.add_argument("--t-qc", type=_floats, default=[2.2, 1.0, 0.55])
    s.add_argument("--panels", default="a", help="a: rate, b: max adversary, c: min eps_sou")
    s.add_argument("--adversary-frontier", type=float, default=4)
    s.add_argument("--eps-sou", type=float, default=1e-6)
    s.add_argument("--p-fail", type=float, default=1e-4)
    s.add_argument("--h-target", type=float, default=0.01)
    s.add_argument("--frontier-flops", type=float, default=sec.FRONTIER_FLOPS)
    s.add_argument("--out")
    s.set_defaults(func=cmd_outlook)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TopologyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"transport error: {e}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
