"""The twelve-step protocol run by two independent party state machines.

Roles are asymmetric: Bob chooses the round types and performs the
validations; Alice announces her bases, the syndrome, and the error
correction hash. Each round's type announcement is its own frame, so a
transcript mirrors the real message flow; the basis string is revealed
once, after all rounds.

The quantum devices are simulated by an entangled-pair source that both
device halves query over a hidden side channel (Bob's half forwards his
setting, Alice's half samples the joint outcome and returns Bob's
share). That channel models the shared entangled state; it is not part
of the classical transcript.

Authentication covers canonical frame payloads: Bob's tag covers the
packed round-type history; Alice's tag covers (packed bases, syndrome,
EC hash, confirmation flag) - including the syndrome is a deliberate
strengthening over authenticating the bases, hash and flag alone - and
the activation tag covers the activation flag byte.
"""

from __future__ import annotations

import enum
import math
import struct
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .. import bits as bitutil
from ..ecc import DecoderPriors, ScLdpcCode, decode, encode
from ..hashing import SharedKeyK0, verify_tag, wc_tag
from ..model import DeviceModel
from ..trevisan import ExtractorParams, extract, plan
from .frames import FrameType, MessageFrame, Transcript
from .transport import Channel, ChannelError


class AbortReason(enum.IntEnum):
    EC_HASH_MISMATCH = 1
    BELL_VALIDATION_FAILED = 2
    AUTH_FAILED = 3
    KEY_ACTIVATION_FAILED = 4
    CHANNEL_ERROR = 5


@dataclass(frozen=True)
class ProtocolParams:
    """Public parameters fixed before the protocol starts."""

    n: int
    gamma: Fraction
    omega_thresh: float
    m: int
    ell: int
    eps_pa: float
    code: ScLdpcCode
    priors: DecoderPriors
    max_decode_iters: int = 200

    def __post_init__(self):
        g = Fraction(self.gamma)
        if not 0 < g < 1:
            raise ValueError(f"gamma {g} outside (0, 1)")
        object.__setattr__(self, "gamma", g)
        if not 0.75 < self.omega_thresh <= (1.0 + 1.0 / math.sqrt(2.0)) / 2.0:
            raise ValueError(f"omega_thresh {self.omega_thresh} out of range")
        if self.code.n_code != self.n or self.code.m_code != self.m:
            raise ValueError(
                f"code shape {self.code.n_code}x{self.code.m_code} does not "
                f"match n={self.n}, m={self.m}"
            )
        if self.ell < 1:
            raise ValueError("target key length must be >= 1")

    def extractor_params(self) -> ExtractorParams:
        return plan(self.n, self.ell, self.eps_pa)

    def check_budget(self, certified_ell: int) -> None:
        """Reject a target length above the certified budget."""
        if self.ell > certified_ell:
            raise ValueError(
                f"target length {self.ell} exceeds certified budget {certified_ell}"
            )


def validate_bell(
    scores: Sequence[Optional[int]], n: int, gamma, omega_thresh: float
) -> bool:
    """Accept iff the number of lost test rounds is at most
    floor(n * gamma * (1 - omega_thresh))."""
    if len(scores) != n:
        raise ValueError(f"expected {n} scores, got {len(scores)}")
    lost = sum(1 for u in scores if u == 0)
    return lost <= math.floor(n * float(gamma) * (1.0 - omega_thresh))


# --- entangled-pair source -------------------------------------------------

_DEV_REQ = struct.Struct("<IB")
_DEV_REP = struct.Struct("<B")


class SourceMaster:
    """Alice-side device half. Owns the model RNG: on each measurement it
    waits for Bob's setting on the device channel, samples the joint
    outcome, returns Bob his share."""

    def __init__(self, model: DeviceModel, rng: np.random.Generator, chan: Channel):
        self._model = model
        self._rng = rng
        self._chan = chan
        self._cdfs = model.outcome_cdfs()

    def measure(self, index: int, setting: int) -> int:
        req = self._chan.recv()
        if req.msg_type != FrameType.ROUND_T:  # device channel reuses the tag
            raise ChannelError("device channel protocol violation")
        peer_index, peer_setting = _DEV_REQ.unpack(req.payload)
        if peer_index != index:
            raise ChannelError(
                f"device halves out of step: {peer_index} != {index}"
            )
        cdf = self._cdfs[(setting, peer_setting)]
        cell = min(int(np.searchsorted(cdf, self._rng.random(), side="right")), 3)
        a, b = cell >> 1, cell & 1
        self._chan.send(MessageFrame(FrameType.ROUND_T, _DEV_REP.pack(b)))
        return a


class SourceClient:
    """Bob-side device half: forwards the setting, receives the outcome."""

    def __init__(self, chan: Channel):
        self._chan = chan

    def measure(self, index: int, setting: int) -> int:
        self._chan.send(MessageFrame(FrameType.ROUND_T, _DEV_REQ.pack(index, setting)))
        rep = self._chan.recv()
        (b,) = _DEV_REP.unpack(rep.payload)
        return b


# --- party state machines --------------------------------------------------


class _Abort(Exception):
    def __init__(self, reason: AbortReason, notify: bool):
        self.reason = reason
        self.notify = notify


@dataclass
class PartyOutcome:
    role: str
    success: bool
    reason: Optional[AbortReason]
    key: Optional[np.ndarray]
    events: Dict[str, bool]
    consumed_bits: int
    reusable_bits: int
    transcript: Transcript


class _PartyBase:
    def __init__(self, params: ProtocolParams, k0: SharedKeyK0, chan: Channel, role: str):
        self.params = params
        self.k0 = k0
        self.chan = chan
        self.role = role
        self.transcript = Transcript()
        self.events = {"omega_pe": False, "omega_h": False, "omega_a": False}

    def send(self, ftype: FrameType, payload: bytes, info_bits: int) -> None:
        frame = MessageFrame(ftype, payload)
        self.chan.send(frame)
        self.transcript.record("tx", frame, info_bits)

    def expect(self, ftype: FrameType, info_bits: int) -> bytes:
        frame = self.chan.recv()
        if frame.msg_type == FrameType.ABORT:
            self.transcript.record("rx", frame, 0)
            raise _Abort(AbortReason(frame.payload[0]), notify=False)
        if frame.msg_type != ftype:
            raise ChannelError(
                f"expected {ftype.name}, received {frame.msg_type.name}"
            )
        self.transcript.record("rx", frame, info_bits)
        return frame.payload

    def abort(self, reason: AbortReason, notify: bool = True) -> PartyOutcome:
        if notify:
            try:
                self.send(FrameType.ABORT, bytes([int(reason)]), 0)
            except ChannelError:
                pass
        return PartyOutcome(
            role=self.role, success=False, reason=reason, key=None,
            events=self.events, consumed_bits=self.k0.consumed_bits,
            reusable_bits=self.k0.reusable_bits, transcript=self.transcript,
        )

    def outcome(self, key: np.ndarray) -> PartyOutcome:
        return PartyOutcome(
            role=self.role, success=True, reason=None, key=key,
            events=self.events, consumed_bits=self.k0.consumed_bits,
            reusable_bits=self.k0.reusable_bits, transcript=self.transcript,
        )


def alice_run(
    params: ProtocolParams,
    k0: SharedKeyK0,
    chan: Channel,
    device: SourceMaster,
    rng: np.random.Generator,
) -> PartyOutcome:
    party = _PartyBase(params, k0, chan, "alice")
    n = params.n
    try:
        # preparation: private uniform basis string
        x = bitutil.random_bits(rng, n)
        a = np.empty(n, dtype=np.uint8)
        t_hist = np.empty(n, dtype=np.uint8)
        for i in range(n):
            (t_byte,) = party.expect(FrameType.ROUND_T, 1)
            t_hist[i] = t_byte & 1
            if t_hist[i] == 0:
                x[i] = 0
            a[i] = device.measure(i, int(x[i]))

        # step 4: basis revelation
        party.send(FrameType.BASES_X, bitutil.pack_bits(x), n)

        # step 5: syndrome
        syndrome = encode(params.code, a)
        syn_bytes = bitutil.pack_bits(syndrome)
        party.send(FrameType.SYNDROME, syn_bytes, params.m)

        # step 7: encrypted hash of the outcome string
        a_bytes = bitutil.pack_bits(a)
        g_ec = wc_tag(k0.s_vhash, k0.take_pad("d_ec"), a_bytes)
        party.send(FrameType.HASH_EC, g_ec, 64)

        # step 10: check Bob's tag over the round-type history
        tag_b = party.expect(FrameType.TAG_B, 64)
        c_flag = 1 if verify_tag(
            k0.s_vhash, k0.take_pad("d_b"), bitutil.pack_bits(t_hist), tag_b
        ) else 0
        party.events["omega_a"] = bool(c_flag)
        party.send(FrameType.CONFIRM_C, bytes([c_flag]), 1)
        authed = bitutil.pack_bits(x) + syn_bytes + g_ec + bytes([c_flag])
        tag_a = wc_tag(k0.s_vhash, k0.take_pad("d_a"), authed)
        party.send(FrameType.TAG_A, tag_a, 64)

        # step 11: activation
        (f_flag,) = party.expect(FrameType.FLAG_F, 1)
        tag_f = party.expect(FrameType.TAG_F, 64)
        tag_f_ok = verify_tag(k0.s_vhash, k0.take_pad("d_f"), bytes([f_flag]), tag_f)
        if not tag_f_ok:
            party.events["omega_a"] = False
            return party.abort(AbortReason.AUTH_FAILED)
        if f_flag != 1:
            if c_flag == 0:
                return party.abort(AbortReason.AUTH_FAILED, notify=False)
            return party.abort(AbortReason.KEY_ACTIVATION_FAILED, notify=False)
        party.events["omega_a"] = bool(c_flag) and tag_f_ok
        party.events["omega_h"] = True   # Bob proceeding past EC implies a match
        party.events["omega_pe"] = True  # likewise for the Bell validation

        # step 9 output: privacy amplification of the outcome string
        key = extract(a, k0.s_trev, params.extractor_params())
        return party.outcome(key)
    except _Abort as ab:
        return party.abort(ab.reason, notify=ab.notify)
    except ChannelError:
        return party.abort(AbortReason.CHANNEL_ERROR, notify=False)


def bob_run(
    params: ProtocolParams,
    k0: SharedKeyK0,
    chan: Channel,
    device: SourceClient,
    rng: np.random.Generator,
) -> PartyOutcome:
    party = _PartyBase(params, k0, chan, "bob")
    n = params.n
    gamma = float(params.gamma)
    try:
        # preparation: round types and settings
        u = rng.random(n)
        y = np.where(u < gamma / 2, 0, np.where(u < gamma, 1, 2)).astype(np.uint8)
        t_hist = (y != 2).astype(np.uint8)
        b = np.empty(n, dtype=np.uint8)
        for i in range(n):
            party.send(FrameType.ROUND_T, bytes([int(t_hist[i])]), 1)
            b[i] = device.measure(i, int(y[i]))

        # step 4: Alice's bases
        x = bitutil.unpack_bits(party.expect(FrameType.BASES_X, n), n)

        # step 5: reconstruct Alice's outcomes from the syndrome
        syn_bytes = party.expect(FrameType.SYNDROME, params.m)
        syndrome = bitutil.unpack_bits(syn_bytes, params.m)
        settings = list(zip(x.tolist(), y.tolist()))
        result = decode(
            params.code, b, settings, params.priors, syndrome,
            max_iters=params.max_decode_iters,
        )
        if result.success:
            a_hat = result.bits
        else:
            # best per-bit guess; the hash check below will fail the run
            flip = (x == 1) & (y == 1)
            a_hat = np.where(flip, b ^ 1, b).astype(np.uint8)

        # step 6: scores from the reconstructed outcomes
        is_test = t_hist == 1
        won = (a_hat ^ b) == (x * np.minimum(y, 1))
        scores = np.where(is_test, won.astype(np.int8), -1)

        # step 7: validate error correction
        g_ec = party.expect(FrameType.HASH_EC, 64)
        a_hat_bytes = bitutil.pack_bits(a_hat)
        if not verify_tag(k0.s_vhash, k0.take_pad("d_ec"), a_hat_bytes, g_ec):
            return party.abort(AbortReason.EC_HASH_MISMATCH)
        party.events["omega_h"] = True

        # step 8: validate the Bell violation
        score_list = [None if s < 0 else int(s) for s in scores]
        if not validate_bell(score_list, n, gamma, params.omega_thresh):
            return party.abort(AbortReason.BELL_VALIDATION_FAILED)
        party.events["omega_pe"] = True

        # step 10: authenticate the round-type history
        tag_b = wc_tag(k0.s_vhash, k0.take_pad("d_b"), bitutil.pack_bits(t_hist))
        party.send(FrameType.TAG_B, tag_b, 64)
        (c_flag,) = party.expect(FrameType.CONFIRM_C, 1)
        tag_a = party.expect(FrameType.TAG_A, 64)
        authed = bitutil.pack_bits(x) + syn_bytes + g_ec + bytes([c_flag])
        tag_a_ok = verify_tag(k0.s_vhash, k0.take_pad("d_a"), authed, tag_a)
        f_flag = 1 if (tag_a_ok and c_flag == 1) else 0
        party.events["omega_a"] = bool(f_flag)

        # step 11: activation
        party.send(FrameType.FLAG_F, bytes([f_flag]), 1)
        tag_f = wc_tag(k0.s_vhash, k0.take_pad("d_f"), bytes([f_flag]))
        party.send(FrameType.TAG_F, tag_f, 64)
        if f_flag != 1:
            return party.abort(AbortReason.AUTH_FAILED, notify=False)

        # step 9 output: privacy amplification of the reconstruction
        key = extract(a_hat, k0.s_trev, params.extractor_params())
        return party.outcome(key)
    except _Abort as ab:
        return party.abort(ab.reason, notify=ab.notify)
    except ChannelError:
        return party.abort(AbortReason.CHANNEL_ERROR, notify=False)


# --- orchestration ----------------------------------------------------------


def balance_sheet(outcome: "RunOutcome") -> Dict[str, int]:
    """Secret-bit accounting: consumed one-time-pad bits, reusable seed
    bits, bits generated, and the net gain."""
    consumed = outcome.alice.consumed_bits
    reusable = outcome.alice.reusable_bits
    generated = len(outcome.alice.key) if outcome.success else 0
    return {
        "consumed": consumed,
        "reusable": reusable,
        "generated": generated,
        "net": generated - consumed,
    }


@dataclass
class RunOutcome:
    alice: PartyOutcome
    bob: PartyOutcome

    @property
    def success(self) -> bool:
        return self.alice.success and self.bob.success

    @property
    def reason(self) -> Optional[AbortReason]:
        if self.success:
            return None
        return self.bob.reason if not self.bob.success else self.alice.reason

    @property
    def keys(self) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
        return self.alice.key, self.bob.key

    @property
    def events(self) -> Dict[str, bool]:
        return self.bob.events

    def balance(self) -> Dict[str, int]:
        return balance_sheet(self)


def clone_key(k0: SharedKeyK0) -> SharedKeyK0:
    """Fresh spend-tracking copy of the same key material: each party
    holds its own copy of the pre-shared key."""
    return SharedKeyK0(
        s_trev=k0.s_trev.copy(), s_vhash=k0.s_vhash, pads=dict(k0.pads)
    )


def run_protocol(
    params: ProtocolParams,
    model: DeviceModel,
    k0: SharedKeyK0,
    seed: int = 0,
    alice_channel_wrap=None,
    bob_channel_wrap=None,
) -> RunOutcome:
    """Execute both parties on threads over in-process channels.

    The seed derives the three independent randomness streams (Alice's
    inputs, Bob's inputs, the pair source); a fixed (params, model, k0,
    seed) without channel faults fully determines the outcome including
    the keys. Channel wrappers inject transport faults.
    """
    from .transport import InProcessPair

    ss = np.random.SeedSequence(seed)
    alice_ss, bob_ss, dev_ss = ss.spawn(3)

    proto_pair = InProcessPair()
    dev_pair = InProcessPair()
    alice_chan = alice_channel_wrap(proto_pair.alice) if alice_channel_wrap else proto_pair.alice
    bob_chan = bob_channel_wrap(proto_pair.bob) if bob_channel_wrap else proto_pair.bob

    source = SourceMaster(model, np.random.default_rng(dev_ss), dev_pair.alice)
    client = SourceClient(dev_pair.bob)

    results: Dict[str, PartyOutcome] = {}

    def run_alice():
        results["alice"] = alice_run(
            params, clone_key(k0), alice_chan, source, np.random.default_rng(alice_ss)
        )

    def run_bob():
        results["bob"] = bob_run(
            params, clone_key(k0), bob_chan, client, np.random.default_rng(bob_ss)
        )

    threads = [threading.Thread(target=run_alice), threading.Thread(target=run_bob)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    return RunOutcome(alice=results["alice"], bob=results["bob"])
