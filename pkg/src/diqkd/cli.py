"""Command-line front end: key-length studies, reconciliation benches,
extractor runs, hashing, and full protocol simulations.

Exit codes: 0 success; 2 key-length evaluation found no positive length;
3 protocol abort; 64 usage error; 70 transport setup failure.

Configuration precedence is flags > config file > defaults; config files
hold plain `key = value` lines with keys equal to the long flag names
(dashes or underscores both accepted). Every run prints its fully
resolved configuration as stable `key=value` lines.
"""

from __future__ import annotations

import argparse
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bits as bitutil
from . import ecc, keylen, model, trevisan
from .hashing import HashSeed, SEED_BYTES, SharedKeyK0, au_hash, wc_tag
from .protocol import engine as proto_engine
from .protocol.frames import FrameType, MessageFrame
from .protocol.transport import (
    ChannelError,
    FaultSpec,
    FaultyChannel,
    connect_tcp,
    listen_tcp_pair,
)

EX_OK = 0
EX_NO_KEY = 2
EX_ABORT = 3
EX_USAGE = 64
EX_TRANSPORT = 70


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(EX_USAGE)


def _load_config(path):
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, config):
    """Fill argparse None values from the config file."""
    for key, value in config.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, value)
    return args


def _print_config(name, pairs):
    print(f"# diqkd {name}")
    for key, value in pairs:
        print(f"{key}={value}")


def _gamma(value) -> Fraction:
    return Fraction(str(value))


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- keylen ------------------------------------------------------------------


def cmd_keylen(args) -> int:
    gamma = _gamma(args.gamma)
    n = int(float(args.n))
    chsh, qber = float(args.S), float(args.Q)
    eps_snd = float(args.eps_snd)
    omega = model.expected_winning_probability(chsh)
    wth = (
        float(args.omega_thresh)
        if args.omega_thresh is not None
        else model.completeness_threshold(omega, gamma, n, k=3.0)
    )
    m = int(args.m) if args.m is not None else ecc.syndrome_length(n, gamma, chsh, qber)
    _print_config(
        "keylen",
        [
            ("n", n), ("gamma", gamma), ("S", chsh), ("Q", qber),
            ("eps_snd", eps_snd), ("omega_thresh", f"{wth:.9f}"), ("m", m),
            ("seed", args.seed), ("starts", args.starts),
        ],
    )
    if wth <= 0.75:
        # no Bell violation is certified below the classical band
        print("ell=0")
        print("rate=0.0")
        return EX_NO_KEY
    sec, bd = keylen.optimize(
        n, gamma, wth, m, eps_snd_target=eps_snd,
        seed=int(args.seed), starts=int(args.starts),
    )
    width = max(len(k) for k in bd.terms())
    for key, value in bd.terms().items():
        print(f"  {key:<{width}} {value:>18.3f}")
    print(f"  {'pre_upsilon':<{width}} {bd.pre_upsilon:>18.3f}")
    print("ell=%d" % bd.ell)
    print("rate=%.6f" % (bd.ell / n))
    print("soundness=%.3e" % bd.soundness)
    for key, value in (
        ("t", sec.t), ("alpha1", sec.alpha1), ("alpha2", sec.alpha2),
        ("eps_pa", sec.eps_pa), ("eps_ea", sec.eps_ea), ("eps_s", sec.eps_s),
        ("eps_s1", sec.eps_s1), ("eps_s2", sec.eps_s2),
    ):
        print(f"param_{key}={value:.6e}")
    return EX_OK if bd.ell > 0 else EX_NO_KEY


# --- ec-bench ----------------------------------------------------------------


def cmd_ec_bench(args) -> int:
    n = int(float(args.n))
    gamma = float(_gamma(args.gamma))
    chsh, qber = float(args.S), float(args.Q)
    trials = int(args.trials)
    lo, hi, step = (float(v) for v in args.eta_grid.split(":"))
    etas = []
    eta = lo
    while eta <= hi + 1e-12:
        etas.append(round(eta, 12))
        eta += step
    _print_config(
        "ec-bench",
        [
            ("n", n), ("gamma", gamma), ("S", chsh), ("Q", qber),
            ("eta_grid", args.eta_grid), ("trials", trials), ("seed", args.seed),
            ("max_iters", args.max_iters),
        ],
    )
    priors = ecc.DecoderPriors.from_parameters(chsh, qber)
    dp = (4.0 - chsh) / 8.0
    master = np.random.SeedSequence(int(args.seed))
    if trials == 0:
        return EX_OK
    for eta in etas:
        m = int(round(eta * n))
        wins = 0
        for trial, child in enumerate(master.spawn(trials)):
            rng = np.random.default_rng(child)
            try:
                code = ecc.build_for_target(n, m, rng=rng)
            except ecc.ConstructionError as exc:
                print(f"eta={eta:.4f} m={m} error={exc}")
                break
            is_test = rng.random(n) < gamma
            a = rng.integers(0, 2, n, dtype=np.uint8)
            flips = np.where(is_test, rng.random(n) < dp, rng.random(n) < qber)
            b = a ^ flips.astype(np.uint8)
            settings = [(0, 0) if t else (0, 2) for t in is_test]
            syndrome = ecc.encode(code, a)
            result = ecc.decode(
                code, b, settings, priors, syndrome, max_iters=int(args.max_iters)
            )
            if result.success and np.array_equal(result.bits, a):
                wins += 1
        else:
            rate = wins / trials if trials else float("nan")
            print(f"eta={eta:.4f} m={m} success={wins}/{trials} p={rate:.3f}")
    return EX_OK


# --- extract -----------------------------------------------------------------


def cmd_extract(args) -> int:
    source = bitutil.read_bit_file(args.source)
    ell = int(args.ell)
    eps_pa = float(args.eps_pa)
    params = trevisan.plan(len(source), ell, eps_pa)
    if args.seed_file:
        seed = bitutil.read_bit_file(args.seed_file)
    elif args.seed_hex:
        raw = bytes.fromhex(args.seed_hex)
        seed = bitutil.unpack_bits(raw, params.s)
    else:
        print("error: need --seed-file or --seed-hex", file=sys.stderr)
        return EX_USAGE
    _print_config(
        "extract",
        [
            ("source_bits", len(source)), ("ell", ell), ("eps_pa", eps_pa),
            ("t", params.t), ("t_plus", params.t_plus),
            ("blocks", params.n_blocks), ("seed_bits", params.s),
        ],
    )
    key = trevisan.extract(source, seed, params)
    out = Path(args.out_file or (_out_dir(args) / "extracted.key"))
    bitutil.write_bit_file(out, key)
    print(f"key_file={out}")
    print(f"key_bits={len(key)}")
    return EX_OK


# --- hash --------------------------------------------------------------------


def cmd_hash(args) -> int:
    if args.seed_file:
        seed = HashSeed(Path(args.seed_file).read_bytes()[:SEED_BYTES])
    elif args.seed_hex:
        seed = HashSeed(bytes.fromhex(args.seed_hex))
    else:
        rng = np.random.default_rng(int(args.seed))
        seed = HashSeed.generate(rng)
    if args.message_hex is not None:
        message = bytes.fromhex(args.message_hex)
    elif args.message is not None:
        message = Path(args.message).read_bytes()
    else:
        message = sys.stdin.buffer.read()
    _print_config("hash", [("message_bytes", len(message))])
    if args.otp_hex:
        tag = wc_tag(seed, bytes.fromhex(args.otp_hex), message)
    else:
        tag = au_hash(seed, message)
    print(f"tag={tag.hex()}")
    return EX_OK


# --- run ---------------------------------------------------------------------


def _build_run_setup(args):
    gamma = _gamma(args.gamma)
    n = int(float(args.n))
    chsh, qber = float(args.S), float(args.Q)
    omega = model.expected_winning_probability(chsh)
    wth = (
        float(args.omega_thresh)
        if args.omega_thresh is not None
        else model.completeness_threshold(omega, gamma, n, k=3.0)
    )
    m = int(args.m) if args.m is not None else ecc.syndrome_length(n, gamma, chsh, qber)
    ell = int(args.ell)
    eps_pa = float(args.eps_pa)

    token = args.session_token if args.session_token else f"seed:{args.seed}"
    material = np.random.SeedSequence(
        [int.from_bytes(token.encode(), "little") % (1 << 63), 7]
    )
    code_ss, k0_ss, run_ss = material.spawn(3)
    code = ecc.build_for_target(n, m, rng=np.random.default_rng(code_ss))
    xparams = trevisan.plan(n, ell, eps_pa)
    if args.k0:
        k0 = SharedKeyK0.load(args.k0)
        if len(k0.s_trev) < xparams.s:
            raise ValueError(
                f"shared key holds {len(k0.s_trev)} extractor seed bits, "
                f"need {xparams.s}"
            )
        k0 = SharedKeyK0(
            s_trev=k0.s_trev[: xparams.s], s_vhash=k0.s_vhash, pads=dict(k0.pads)
        )
    else:
        k0 = SharedKeyK0.generate(np.random.default_rng(k0_ss), xparams.s)
    params = proto_engine.ProtocolParams(
        n=n, gamma=gamma, omega_thresh=wth, m=m, ell=ell, eps_pa=eps_pa,
        code=code, priors=ecc.DecoderPriors.from_parameters(chsh, qber),
    )
    dev_model = model.DeviceModel.parametric(chsh, qber)
    run_seed = int(run_ss.generate_state(1)[0])
    header = [
        ("n", n), ("gamma", gamma), ("S", chsh), ("Q", qber),
        ("omega_thresh", f"{wth:.9f}"), ("m", m), ("ell", ell),
        ("eps_pa", eps_pa), ("transport", args.transport),
        ("seed", args.seed), ("fault", args.fault or "none"),
    ]
    return params, dev_model, k0, run_seed, header


def _report_party(out_dir: Path, role: str, outcome, params) -> None:
    tag = f"{role}"
    if outcome.success:
        bitutil.write_bit_file(out_dir / f"key_{tag}.bits", outcome.key)
    outcome.transcript.write_log(
        out_dir / f"transcript_{tag}.log",
        {
            "role": role,
            "status": "success" if outcome.success else "abort",
            "reason": outcome.reason.name if outcome.reason else "none",
            "consumed_bits": outcome.consumed_bits,
            "reusable_bits": outcome.reusable_bits,
            "leakage_bits": outcome.transcript.leakage_bits,
            "expected_leakage_bits": params.m + 258,
        },
    )


def cmd_run(args) -> int:
    try:
        params, dev_model, k0, run_seed, header = _build_run_setup(args)
    except (ValueError, ecc.ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE
    out_dir = _out_dir(args)
    _print_config("run", header)

    if args.transport == "inproc":
        wrap = None
        if args.fault:
            fault = FaultSpec.parse(args.fault)
            wrap = lambda chan: FaultyChannel(chan, fault)  # noqa: E731
        outcome = proto_engine.run_protocol(
            params, dev_model, k0, seed=run_seed,
            alice_channel_wrap=wrap, bob_channel_wrap=wrap,
        )
        _report_party(out_dir, "alice", outcome.alice, params)
        _report_party(out_dir, "bob", outcome.bob, params)
        balance = outcome.balance()
        for key, value in balance.items():
            print(f"{key}={value}")
        print(f"leakage_bits={outcome.alice.transcript.leakage_bits}")
        if outcome.success:
            same = np.array_equal(outcome.alice.key, outcome.bob.key)
            print(f"keys_match={int(same)}")
            print("status=success")
            return EX_OK
        print(f"status=abort reason={outcome.reason.name}")
        return EX_ABORT

    # TCP: this invocation is one party; the peer runs separately.
    if not args.role:
        print("error: --role is required with --transport tcp", file=sys.stderr)
        return EX_USAGE
    try:
        if args.listen:
            host, _, port = args.listen.partition(":")
            proto_chan, dev_chan = listen_tcp_pair(host or "127.0.0.1", int(port))
        elif args.connect:
            host, _, port = args.connect.partition(":")
            proto_chan = connect_tcp(host or "127.0.0.1", int(port))
            dev_chan = connect_tcp(host or "127.0.0.1", int(port) + 1)
        else:
            print("error: need --listen or --connect", file=sys.stderr)
            return EX_USAGE
    except (ChannelError, OSError) as exc:
        print(f"error: transport setup failed: {exc}", file=sys.stderr)
        return EX_TRANSPORT

    if args.fault:
        proto_chan = FaultyChannel(proto_chan, FaultSpec.parse(args.fault))
    ss = np.random.SeedSequence(run_seed)
    alice_ss, bob_ss, dev_ss = ss.spawn(3)
    if args.role == "alice":
        device = proto_engine.SourceMaster(
            dev_model, np.random.default_rng(dev_ss), dev_chan
        )
        outcome = proto_engine.alice_run(
            params, k0, proto_chan, device, np.random.default_rng(alice_ss)
        )
    else:
        device = proto_engine.SourceClient(dev_chan)
        outcome = proto_engine.bob_run(
            params, k0, proto_chan, device, np.random.default_rng(bob_ss)
        )
    proto_chan.close()
    dev_chan.close()
    _report_party(out_dir, args.role, outcome, params)
    print(f"consumed={outcome.consumed_bits}")
    print(f"leakage_bits={outcome.transcript.leakage_bits}")
    if outcome.success:
        print("status=success")
        return EX_OK
    print(f"status=abort reason={outcome.reason.name}")
    return EX_ABORT


# --- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="diqkd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", default=None, help="64-bit master seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--config", default=None, help="key = value config file")

    p = sub.add_parser("keylen", help="certified key length with breakdown")
    common(p)
    p.add_argument("--n", required=True)
    p.add_argument("--gamma", required=True, help="test probability, e.g. 13/256")
    p.add_argument("--S", required=True, help="CHSH score")
    p.add_argument("--Q", required=True, help="quantum bit error rate")
    p.add_argument("--eps-snd", default=None)
    p.add_argument("--omega-thresh", default=None)
    p.add_argument("--m", default=None)
    p.add_argument("--starts", default=None)
    p.set_defaults(func=cmd_keylen)

    p = sub.add_parser("run", help="execute the two-party protocol")
    common(p)
    p.add_argument("--n", required=True)
    p.add_argument("--gamma", required=True)
    p.add_argument("--S", required=True)
    p.add_argument("--Q", required=True)
    p.add_argument("--ell", default=None)
    p.add_argument("--eps-pa", default=None)
    p.add_argument("--omega-thresh", default=None)
    p.add_argument("--m", default=None)
    p.add_argument("--role", choices=("alice", "bob"), default=None)
    p.add_argument("--transport", choices=("inproc", "tcp"), default=None)
    p.add_argument("--listen", default=None, help="host:port to listen on")
    p.add_argument("--connect", default=None, help="host:port to connect to")
    p.add_argument("--k0", default=None, help="shared key file")
    p.add_argument("--session-token", default=None)
    p.add_argument("--fault", default=None, help="transport fault spec")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ec-bench", help="decoding success rate over an overhead grid")
    common(p)
    p.add_argument("--n", required=True)
    p.add_argument("--gamma", required=True)
    p.add_argument("--S", required=True)
    p.add_argument("--Q", required=True)
    p.add_argument("--eta-grid", required=True, help="lo:hi:step")
    p.add_argument("--trials", default=None)
    p.add_argument("--max-iters", default=None)
    p.set_defaults(func=cmd_ec_bench)

    p = sub.add_parser("extract", help="run the randomness extractor")
    common(p)
    p.add_argument("--source", required=True, help="packed-bit source file")
    p.add_argument("--seed-file", default=None, help="packed-bit seed file")
    p.add_argument("--seed-hex", default=None, help="hex seed for small tests")
    p.add_argument("--ell", required=True)
    p.add_argument("--eps-pa", default=None)
    p.add_argument("--out-file", default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("hash", help="almost-universal or Wegman-Carter tag")
    common(p)
    p.add_argument("--seed-file", default=None)
    p.add_argument("--seed-hex", default=None)
    p.add_argument("--message", default=None, help="message file")
    p.add_argument("--message-hex", default=None)
    p.add_argument("--otp-hex", default=None, help="64-bit pad: emit an encrypted tag")
    p.set_defaults(func=cmd_hash)

    return parser


_DEFAULTS = {
    "seed": "0",
    "eps_snd": "1e-10",
    "starts": "12",
    "trials": "20",
    "max_iters": "200",
    "eps_pa": "1e-6",
    "ell": "256",
    "transport": "inproc",
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            _resolve(args, _load_config(args.config))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EX_USAGE
    for key, value in _DEFAULTS.items():
        if getattr(args, key, None) is None and hasattr(args, key):
            setattr(args, key, value)
    try:
        return args.func(args)
    except (ValueError, ecc.ConstructionError, trevisan.DesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
