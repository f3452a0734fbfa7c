import threading
from fractions import Fraction

import numpy as np
import pytest

from diqkd import ecc, model
from diqkd.hashing import SharedKeyK0
from diqkd.protocol import engine
from diqkd.protocol.engine import AbortReason, ProtocolParams, validate_bell
from diqkd.protocol.frames import FrameType, MessageFrame, Transcript
from diqkd.protocol.transport import (
    ChannelError,
    FaultSpec,
    FaultyChannel,
    InProcessPair,
    connect_tcp,
    listen_tcp_pair,
)

N = 5000
M = 2500
GAMMA = Fraction(13, 256)
CHSH, QBER = 2.64, 0.018
OMEGA_TH = 0.80


@pytest.fixture(scope="module")
def code():
    return ecc.build_for_target(N, M, rng=np.random.default_rng(5))


@pytest.fixture(scope="module")
def params(code):
    return ProtocolParams(
        n=N, gamma=GAMMA, omega_thresh=OMEGA_TH, m=M, ell=64, eps_pa=1e-6,
        code=code, priors=ecc.DecoderPriors.from_parameters(CHSH, QBER),
    )


@pytest.fixture(scope="module")
def k0_master(params):
    return SharedKeyK0.generate(
        np.random.default_rng(7), params.extractor_params().s
    )


@pytest.fixture(scope="module")
def device():
    return model.DeviceModel.parametric(CHSH, QBER)


def _run(params, device, k0, seed=42, fault=None, target="both"):
    wrap = None
    if fault is not None:
        spec = FaultSpec.parse(fault)
        wrap = lambda chan: FaultyChannel(chan, spec)  # noqa: E731
    kwargs = {}
    if wrap is not None:
        if target in ("alice", "both"):
            kwargs["alice_channel_wrap"] = wrap
        if target in ("bob", "both"):
            kwargs["bob_channel_wrap"] = wrap
    return engine.run_protocol(params, device, k0, seed=seed, **kwargs)


def test_honest_run(params, device, k0_master):
    out = _run(params, device, k0_master)
    assert out.success
    assert np.array_equal(out.alice.key, out.bob.key)
    assert len(out.alice.key) == params.ell
    assert out.alice.consumed_bits == 256
    assert out.bob.consumed_bits == 256
    assert out.balance() == {
        "consumed": 256,
        "reusable": params.extractor_params().s + 1280,
        "generated": 64,
        "net": -192,
    }
    assert out.events == {"omega_pe": True, "omega_h": True, "omega_a": True}


def test_leakage_ledger_exact(params, device, k0_master):
    out = _run(params, device, k0_master, seed=10)
    assert out.success
    for party in (out.alice, out.bob):
        assert party.transcript.leakage_bits == params.m + 258


def test_determinism(params, device, k0_master):
    out1 = _run(params, device, k0_master, seed=77)
    out2 = _run(params, device, k0_master, seed=77)
    assert out1.success and out2.success
    assert np.array_equal(out1.alice.key, out2.alice.key)
    assert out1.alice.transcript.frames == out2.alice.transcript.frames
    out3 = _run(params, device, k0_master, seed=78)
    assert not np.array_equal(out1.alice.key, out3.alice.key)


def test_syndrome_tamper_aborts_ec(params, device, k0_master):
    out = _run(params, device, k0_master, fault="flip-syndrome-bit:1000")
    assert not out.success
    assert out.bob.reason == AbortReason.EC_HASH_MISMATCH
    assert out.alice.reason == AbortReason.EC_HASH_MISMATCH
    # only the error correction pad was spent before the abort
    assert out.bob.consumed_bits == 64
    assert out.alice.consumed_bits == 64


def test_tag_b_tamper(params, device, k0_master):
    out = _run(params, device, k0_master, fault="tamper:tag-b:3", target="bob")
    assert not out.success
    assert out.alice.reason == AbortReason.AUTH_FAILED
    assert out.bob.reason == AbortReason.AUTH_FAILED
    assert not out.events["omega_a"]


def test_tag_a_tamper(params, device, k0_master):
    out = _run(params, device, k0_master, fault="tamper:tag-a:5", target="alice")
    assert not out.success
    assert out.bob.reason == AbortReason.AUTH_FAILED
    # Alice saw valid tags but Bob refused activation
    assert out.alice.reason == AbortReason.KEY_ACTIVATION_FAILED


def test_tag_f_tamper(params, device, k0_master):
    out = _run(params, device, k0_master, fault="tamper:tag-f:0", target="bob")
    assert not out.success
    assert out.alice.reason == AbortReason.AUTH_FAILED


def test_flag_f_tamper(params, device, k0_master):
    out = _run(params, device, k0_master, fault="tamper:flag-f:0", target="bob")
    assert not out.success
    # the activation tag no longer matches the flipped flag
    assert out.alice.reason == AbortReason.AUTH_FAILED


def test_bases_tamper_fails_authentication(params, device, k0_master):
    out = _run(params, device, k0_master, fault="tamper:bases-x:17", target="alice")
    assert not out.success
    # one flipped basis bit decodes through anyway, but Bob's recomputed
    # authentication tag no longer covers what Alice sent
    assert out.bob.reason == AbortReason.AUTH_FAILED
    assert out.alice.reason == AbortReason.KEY_ACTIVATION_FAILED


def test_low_violation_aborts_bell(code, k0_master):
    params = ProtocolParams(
        n=N, gamma=GAMMA, omega_thresh=0.825, m=M, ell=64, eps_pa=1e-6,
        code=code, priors=ecc.DecoderPriors.from_parameters(2.05, QBER),
    )
    weak = model.DeviceModel.parametric(2.05, QBER)
    out = _run(params, weak, k0_master, seed=3)
    assert not out.success
    assert out.bob.reason == AbortReason.BELL_VALIDATION_FAILED
    # EC pad was spent (hash checked) before the Bell validation
    assert out.bob.consumed_bits == 64


def test_out_of_order_frame_is_channel_error(params, k0_master, device):
    pair = InProcessPair()
    dev_pair = InProcessPair()
    source = engine.SourceMaster(device, np.random.default_rng(1), dev_pair.alice)
    result = {}

    def run_alice():
        result["alice"] = engine.alice_run(
            params, engine.clone_key(k0_master), pair.alice, source,
            np.random.default_rng(2),
        )

    th = threading.Thread(target=run_alice)
    th.start()
    # speak out of turn: the first frame must be ROUND_T
    pair.bob.send(MessageFrame(FrameType.SYNDROME, b"\x00"))
    th.join()
    assert result["alice"].reason == AbortReason.CHANNEL_ERROR
    assert result["alice"].consumed_bits == 0


def test_validate_bell_edges():
    n, gamma, wth = 1000, 0.05, 0.8
    bound = int(np.floor(n * gamma * (1 - wth)))  # = 10
    none_tested = [None] * n
    assert validate_bell(none_tested, n, gamma, wth)
    at_bound = [0] * bound + [None] * (n - bound)
    assert validate_bell(at_bound, n, gamma, wth)
    over = [0] * (bound + 1) + [None] * (n - bound - 1)
    assert not validate_bell(over, n, gamma, wth)
    with pytest.raises(ValueError):
        validate_bell([None] * 5, n, gamma, wth)


def test_transcript_log_format(tmp_path):
    tr = Transcript()
    tr.record("tx", MessageFrame(FrameType.SYNDROME, b"\x00" * 4), 32)
    tr.record("rx", MessageFrame(FrameType.HASH_EC, b"\x00" * 8), 64)
    path = tmp_path / "t.log"
    tr.write_log(path, {"status": "success"})
    lines = path.read_text().splitlines()
    assert lines[0] == "tx SYNDROME 4"
    assert lines[1] == "rx HASH_EC 8"
    assert "status=success" in lines
    assert tr.leakage_bits == 96


def test_fault_spec_parsing():
    spec = FaultSpec.parse("flip-syndrome-bit:1000")
    assert spec.frame_type == FrameType.SYNDROME and spec.bit_index == 1000
    spec = FaultSpec.parse("drop:tag-b")
    assert spec.frame_type == FrameType.TAG_B and spec.action == "drop"
    with pytest.raises(ValueError):
        FaultSpec.parse("explode:everything")


def test_dropped_frame_times_out(params, device, k0_master):
    class ShortTimeout:
        def __init__(self, inner):
            self._inner = inner

        def send(self, frame):
            self._inner.send(frame)

        def recv(self, timeout=None):
            return self._inner.recv(timeout=2.0)

        def close(self):
            self._inner.close()

    spec = FaultSpec.parse("drop:hash-ec")
    out = engine.run_protocol(
        params, device, k0_master, seed=5,
        alice_channel_wrap=lambda c: FaultyChannel(c, spec),
        bob_channel_wrap=lambda c: ShortTimeout(c),
    )
    assert not out.success
    assert out.bob.reason == AbortReason.CHANNEL_ERROR


def test_tcp_channels_carry_protocol(params, device, k0_master):
    host = "127.0.0.1"
    port = 47113
    result = {}

    def serve():
        proto_chan, dev_chan = listen_tcp_pair(host, port, timeout=20.0)
        source = engine.SourceMaster(device, np.random.default_rng(11), dev_chan)
        result["alice"] = engine.alice_run(
            params, engine.clone_key(k0_master), proto_chan, source,
            np.random.default_rng(12),
        )
        proto_chan.close()
        dev_chan.close()

    th = threading.Thread(target=serve)
    th.start()
    proto_chan = connect_tcp(host, port, timeout=20.0)
    dev_chan = connect_tcp(host, port + 1, timeout=20.0)
    client = engine.SourceClient(dev_chan)
    bob = engine.bob_run(
        params, engine.clone_key(k0_master), proto_chan, client,
        np.random.default_rng(13),
    )
    th.join()
    proto_chan.close()
    dev_chan.close()
    alice = result["alice"]
    assert alice.success and bob.success
    assert np.array_equal(alice.key, bob.key)


def test_params_validation(code):
    with pytest.raises(ValueError):
        ProtocolParams(
            n=N, gamma=GAMMA, omega_thresh=0.7, m=M, ell=64, eps_pa=1e-6,
            code=code, priors=ecc.DecoderPriors.from_parameters(CHSH, QBER),
        )
    with pytest.raises(ValueError):
        ProtocolParams(
            n=N + 1, gamma=GAMMA, omega_thresh=OMEGA_TH, m=M, ell=64,
            eps_pa=1e-6, code=code,
            priors=ecc.DecoderPriors.from_parameters(CHSH, QBER),
        )


def test_budget_check(params):
    params.check_budget(100)
    with pytest.raises(ValueError):
        params.check_budget(10)
