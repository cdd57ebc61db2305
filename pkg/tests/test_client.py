import math
import random
import threading

import numpy as np
import pytest

import pyOSEP.protocol.client as client_module
from pyOSEP.config import ProtocolConfig
from pyOSEP.core import PhaseError, RoundMismatchError
from pyOSEP.crypto import (
    CodecOverflowError,
    FixedPointCodec,
    decrypt,
    encrypt,
    fixed_product,
)
from pyOSEP.linalg import (
    EigenResult,
    ZeroVectorError,
    local_power_iteration,
    make_test_matrix,
    matrix_inf_norm,
    signed_normalize,
)
from pyOSEP.protocol import (
    Abort,
    AbortReason,
    Arbitrary,
    ClientSession,
    ConvergedWith,
    InProcessChannel,
    Lazy,
    NextRequest,
    Phase,
    Tamper,
    Verdict,
    WorkerState,
    drive,
    matvec_response,
    solve_in_process,
)


class OffByOneWorker(WorkerState):
    """Answers every request under the next round index."""

    def encrypted_matvec(self, msg):
        reply = super().encrypted_matvec(msg)
        return matvec_response(reply.session_id, reply.round_index + 1,
                               reply.ciphertexts(), reply.payload.key_fingerprint)


def run_honest(session, store, request, pk):
    """Drive a session against an honest worker without any channel."""
    worker = WorkerState(pk)
    worker.handle_message(store)
    outcome = NextRequest(request)
    while isinstance(outcome, NextRequest):
        outcome = session.ingest_round(worker.handle_message(outcome.message))
    return outcome


@pytest.fixture
def zero_mask(monkeypatch):
    monkeypatch.setattr(client_module, "_draw_mask", lambda dim, bits, rng: [0] * dim)


def test_setup_of_a_scalar(keypair512, config):
    session, store, request = ClientSession.setup([[2.0]], [1.0], config, random.Random(1),
                                                  keypair512)
    assert session.phase is Phase.ITERATING
    assert session.k == 0
    assert store.payload.dim == 1
    assert store.payload.key_fingerprint == keypair512.public_key.fingerprint
    assert request.round_index == 0
    assert request.session_id == store.session_id == session.session_id
    assert len(session.session_id) == 16


def test_start_vector_is_normalised(keypair512, config):
    session, _, _ = ClientSession.setup(np.eye(3), [1.0, -4.0, 2.0], config,
                                        random.Random(1), keypair512)
    np.testing.assert_array_equal(session.x, [-0.25, 1.0, -0.5])


def test_mask_hides_the_iterate(keypair512, config):
    session, _, request = ClientSession.setup(np.eye(2), [1.0, 1.0], config,
                                              random.Random(1), keypair512)
    codec = session.codec
    assert all(v != codec.encode(1.0) for v in request.payload.vector)
    assert all(v.bit_length() == config.mask_bits for v in request.payload.vector)
    assert not hasattr(session, "mask")
    assert not hasattr(session, "offset")


def test_unmasked_request_is_the_encoded_iterate(keypair512, config, zero_mask):
    session, _, request = ClientSession.setup(np.eye(2), [0.5, 1.0], config,
                                              random.Random(1), keypair512)
    assert request.payload.vector == session.codec.encode_vector([0.5, 1.0])


def test_stored_grid_decrypts_to_the_matrix(keypair512, config):
    A, _, _ = make_test_matrix(4, 2.0, np.random.default_rng(4))
    _, store, _ = ClientSession.setup(A, None, config, random.Random(1), keypair512)
    pk, sk = keypair512
    codec = FixedPointCodec(pk.n, store.payload.frac_bits)
    decoded = [[codec.decode(decrypt(sk, pk, c)) for c in row]
               for row in store.ciphertext_grid()]
    np.testing.assert_allclose(decoded, A, atol=2.0 ** -41)


def test_zero_start_vector(keypair512, config):
    with pytest.raises(ZeroVectorError):
        ClientSession.setup(np.eye(2), [0.0, 0.0], config, random.Random(1), keypair512)


def test_key_too_small_for_the_mask(keypair512, config):
    with pytest.raises(CodecOverflowError):
        ClientSession.setup(np.eye(2), None, config.replace(mask_bits=480),
                            random.Random(1), keypair512)


def test_first_product_is_exact(keypair512, config):
    A = np.array([[2.0, 1.0], [0.5, 3.0]])
    session, store, request = ClientSession.setup(A, [1.0, 1.0], config,
                                                  random.Random(2), keypair512)
    worker = WorkerState(keypair512.public_key)
    worker.handle_message(store)
    outcome = session.ingest_round(worker.handle_message(request))
    assert isinstance(outcome, NextRequest)
    assert outcome.message.round_index == 1
    np.testing.assert_array_equal(session.last_product, [3.0, 3.5])
    assert session.eigenvalue == 3.5


@pytest.mark.parametrize("use_scaling", [False, True])
def test_rounds_match_the_local_oracle(keypair512, config, use_scaling):
    A = np.diag([2.0, 1.0])
    config = config.replace(use_scaling=use_scaling)
    outcome = solve_in_process(A, [1.0, 1.0], config, random.Random(3), keypair512)
    codec = FixedPointCodec(keypair512.public_key.n, config.frac_bits, config.guard_bits)
    oracle = local_power_iteration(A, [1.0, 1.0], eps=config.eps, codec=codec)
    assert outcome.verdict is Verdict.ACCEPTED
    assert outcome.abort_reason is None
    assert outcome.rounds == oracle.iterations == 30
    assert outcome.result.eigenvalue == oracle.eigenvalue
    np.testing.assert_array_equal(outcome.result.eigenvector, oracle.eigenvector)


def test_planted_matrix(keypair512, config):
    A, lam, v = make_test_matrix(8, 2.0, np.random.default_rng(8))
    outcome = solve_in_process(A, None, config, random.Random(8), keypair512)
    assert outcome.verdict is Verdict.ACCEPTED
    assert outcome.result.converged
    assert outcome.result.eigenvalue == pytest.approx(lam, rel=1e-6)
    np.testing.assert_allclose(outcome.result.eigenvector, signed_normalize(v), atol=1e-6)


def test_identity_matrix(keypair512, config):
    outcome = solve_in_process(np.eye(3), [3.0, 1.0, 2.0], config, random.Random(1), keypair512)
    assert outcome.verdict is Verdict.ACCEPTED
    assert outcome.rounds == 1
    assert outcome.result.eigenvalue == 1.0


def test_same_seed_same_transcript(keypair512, config):
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    first = solve_in_process(A, None, config, random.Random(9), keypair512)
    second = solve_in_process(A, None, config, random.Random(9), keypair512)
    third = solve_in_process(A, None, config, random.Random(10), keypair512)
    assert first.transcript_digest == second.transcript_digest
    assert first.transcript_digest != third.transcript_digest
    assert len(first.transcript_digest) == 64


def test_encrypted_zero_responses(keypair512, config):
    session, store, request = ClientSession.setup(np.eye(2), None, config,
                                                  random.Random(1), keypair512)
    pk = keypair512.public_key
    zeros = matvec_response(session.session_id, 0, [encrypt(pk, 0), encrypt(pk, 0)],
                            pk.fingerprint)
    outcome = session.ingest_round(zeros)
    # zero minus the mask offset is far outside the honest range
    assert outcome == Abort(AbortReason.MALFORMED_RESPONSE,
                            "unmasked product exceeds the honest bound")
    assert session.phase is Phase.ABORTED


def test_encrypted_zero_responses_without_mask(keypair512, config, zero_mask):
    session, _, _ = ClientSession.setup(np.eye(2), None, config, random.Random(1), keypair512)
    pk = keypair512.public_key
    zeros = matvec_response(session.session_id, 0, [encrypt(pk, 0), encrypt(pk, 0)],
                            pk.fingerprint)
    assert session.ingest_round(zeros) == Abort(AbortReason.MALFORMED_RESPONSE, "zero iterate")


def test_response_of_wrong_length(keypair512, config):
    session, _, _ = ClientSession.setup(np.eye(2), None, config, random.Random(1), keypair512)
    pk = keypair512.public_key
    short = matvec_response(session.session_id, 0, [encrypt(pk, 1)], pk.fingerprint)
    outcome = session.ingest_round(short)
    assert outcome.reason is AbortReason.MALFORMED_RESPONSE


def test_stale_round_is_refused(keypair512, config):
    session, _, _ = ClientSession.setup(np.eye(2), None, config, random.Random(1), keypair512)
    pk = keypair512.public_key
    stale = matvec_response(session.session_id, 5, [encrypt(pk, 1)] * 2, pk.fingerprint)
    with pytest.raises(RoundMismatchError):
        session.ingest_round(stale)
    assert session.phase is Phase.ITERATING


def test_round_mismatch_aborts_the_solve(keypair512, config):
    worker = OffByOneWorker(keypair512.public_key)
    outcome = solve_in_process(np.eye(2), None, config, random.Random(1), keypair512,
                               worker=worker)
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.MALFORMED_RESPONSE
    assert outcome.rounds == 0


def test_worker_with_another_key(keypair512, other_keypair512, config):
    worker = WorkerState(other_keypair512.public_key)
    outcome = solve_in_process(np.eye(2), None, config, random.Random(1), keypair512,
                               worker=worker)
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.WORKER_ERROR
    assert outcome.detail.startswith("KeyFingerprintError")


def test_silent_worker(keypair512, config):
    client_end, _ = InProcessChannel.pair()
    outcome = drive(np.eye(2), None, config.replace(timeout=0.05), client_end,
                    random.Random(1), keypair512)
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.TRANSPORT_ERROR
    assert outcome.result.converged is False
    assert np.isnan(outcome.result.eigenvalue)


def test_verify_accepts_the_converged_pair(keypair512, config):
    A = np.diag([2.0, 1.0])
    session, store, request = ClientSession.setup(A, None, config, random.Random(1), keypair512)
    outcome = run_honest(session, store, request, keypair512.public_key)
    assert isinstance(outcome, ConvergedWith)
    assert session.phase is Phase.CONVERGED
    assert session.verify() is Verdict.ACCEPTED
    assert session.phase is Phase.ACCEPTED
    with pytest.raises(PhaseError):
        session.verify()


def test_verify_rejects_a_wrong_pair(keypair512, config):
    A = np.diag([2.0, 1.0])
    session, store, request = ClientSession.setup(A, None, config, random.Random(1), keypair512)
    run_honest(session, store, request, keypair512.public_key)
    wrong = EigenResult(1.0, np.array([1.0, 1.0]), session.k, True)
    assert session.verify(wrong) is Verdict.REJECTED
    assert session.phase is Phase.REJECTED


def test_verify_needs_convergence(keypair512, config):
    session, _, _ = ClientSession.setup(np.eye(2), None, config, random.Random(1), keypair512)
    with pytest.raises(PhaseError):
        session.verify()


def test_ingest_after_convergence(keypair512, config):
    session, store, request = ClientSession.setup(np.eye(2), None, config,
                                                  random.Random(1), keypair512)
    worker = WorkerState(keypair512.public_key)
    worker.handle_message(store)
    response = worker.handle_message(request)
    assert isinstance(session.ingest_round(response), ConvergedWith)
    with pytest.raises(PhaseError):
        session.ingest_round(response)


def test_iteration_cap(keypair512, config):
    outcome = solve_in_process(np.diag([1.0, 0.999]), [1.0, 1.0], config.replace(omega=50),
                               random.Random(1), keypair512)
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.ITERATION_CAP_EXCEEDED
    assert outcome.rounds == 50
    assert outcome.result.iterations == 50
    assert not outcome.result.converged


def test_tampering_is_never_accepted(keypair512, config):
    verdicts = []
    for seed in range(5):
        A, _, _ = make_test_matrix(4, 2.0, np.random.default_rng(seed))
        worker = WorkerState(keypair512.public_key, Tamper(1.0, 0.05), rng=random.Random(seed))
        outcome = solve_in_process(A, None, config, random.Random(seed), keypair512,
                                   worker=worker)
        verdicts.append(outcome.verdict)
    assert Verdict.ACCEPTED not in verdicts
    assert verdicts.count(Verdict.REJECTED) >= 3


def test_tampering_that_never_fires(keypair512, config):
    A, _, _ = make_test_matrix(4, 2.0, np.random.default_rng(0))
    outcome = solve_in_process(A, None, config, random.Random(0), keypair512,
                               policy=Tamper(0.0, 0.5))
    assert outcome.verdict is Verdict.ACCEPTED


def test_arbitrary_worker_is_caught(keypair512, config):
    outcome = solve_in_process(np.diag([2.0, 1.0]), None, config, random.Random(1), keypair512,
                               policy=Arbitrary())
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.MALFORMED_RESPONSE
    assert outcome.rounds == 0


def test_lazy_worker_is_rejected(keypair512, config):
    outcome = solve_in_process(np.diag([2.0, 1.0]), [1.0, 1.0], config, random.Random(1),
                               keypair512, policy=Lazy())
    # the replayed product repeats the first step, which looks converged
    assert outcome.verdict is Verdict.REJECTED
    assert outcome.rounds == 2


def test_lazy_worker_against_scaling(keypair512, config):
    outcome = solve_in_process(np.diag([2.0, 1.0]), [1.0, 1.0],
                               config.replace(use_scaling=True), random.Random(1),
                               keypair512, policy=Lazy())
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.MALFORMED_RESPONSE


def test_tampering_against_scaling_trips_the_bound(keypair512, config):
    # the unscaling factor spreads the offset over the whole residue range
    A, _, _ = make_test_matrix(4, 2.0, np.random.default_rng(0))
    for seed in range(3):
        outcome = solve_in_process(A, None, config.replace(use_scaling=True),
                                   random.Random(seed), keypair512,
                                   worker=WorkerState(keypair512.public_key, Tamper(1.0, 0.05),
                                                      rng=random.Random(seed)))
        assert outcome.verdict is Verdict.ABORTED
        assert outcome.abort_reason is AbortReason.MALFORMED_RESPONSE
        assert outcome.rounds == 0


def test_outcome_as_dict(keypair512, config):
    outcome = solve_in_process(np.eye(2), None, config, random.Random(1), keypair512)
    d = outcome.to_dict()
    assert d.verdict == "Accepted"
    assert d.abort_reason is None
    assert d.eigenvector == [1.0, 1.0]
    assert d.iterations == d.rounds == 1
    assert set(d.timings) == {"setup", "rounds", "verify"}


def test_generates_a_key_when_none_is_given():
    config = ProtocolConfig(key_bits=256, guard_bits=16, mask_bits=64)
    outcome = solve_in_process(np.diag([2.0, 1.0]), None, config, random.Random(1))
    assert outcome.verdict is Verdict.ACCEPTED


def test_every_round_unmasks_to_the_exact_product(keypair512, config):
    A, _, _ = make_test_matrix(5, 2.0, np.random.default_rng(5))
    session, store, request = ClientSession.setup(A, None, config, random.Random(5), keypair512)
    codec = session.codec
    A_int = codec.fixed_matrix(A)
    worker = WorkerState(keypair512.public_key)
    worker.handle_message(store)
    outcome = NextRequest(request)
    while isinstance(outcome, NextRequest):
        x = session.x
        outcome = session.ingest_round(worker.handle_message(outcome.message))
        expected = [codec.from_fixed(v, 2) for v in fixed_product(A_int, codec.fixed_vector(x))]
        np.testing.assert_array_equal(session.last_product, expected)
    assert isinstance(outcome, ConvergedWith)


def test_matrix_is_stored_once(keypair512, config):
    class CountingWorker(WorkerState):
        stores = 0

        def store_matrix(self, msg):
            CountingWorker.stores += 1
            return super().store_matrix(msg)

    worker = CountingWorker(keypair512.public_key)
    outcome = solve_in_process(np.diag([2.0, 1.0]), None, config, random.Random(1), keypair512,
                               worker=worker)
    assert outcome.rounds == 30
    assert worker.rounds == 30
    assert CountingWorker.stores == 1


def test_scaled_requests_hide_the_factor(keypair512, config):
    config = config.replace(use_scaling=True)
    hidden = 0
    for seed in range(20):
        _, _, request = ClientSession.setup(np.eye(3), None, config, random.Random(seed),
                                            keypair512)
        if math.gcd(*request.payload.vector) < 1 << 16:
            hidden += 1
    assert hidden >= 19


def test_worker_leaves_mid_run(keypair512, config):
    client_end, worker_end = InProcessChannel.pair()
    worker = WorkerState(keypair512.public_key)

    def answer_twice():
        for _ in range(2):
            worker_end.send(worker.handle_message(worker_end.receive(5.0)))
        worker_end.close()

    thread = threading.Thread(target=answer_twice, daemon=True)
    thread.start()
    outcome = drive(np.diag([2.0, 1.0]), None, config, client_end, random.Random(1), keypair512)
    thread.join(5.0)
    assert outcome.verdict is Verdict.ABORTED
    assert outcome.abort_reason is AbortReason.TRANSPORT_ERROR
    assert outcome.rounds == 1


def test_drive_needs_a_channel(config):
    with pytest.raises(TypeError):
        drive(np.eye(2), None, config)


@pytest.mark.slow
@pytest.mark.parametrize("n", [4, 16, 50])
def test_planted_sweep_matches_the_oracle(keypair512, config, n):
    codec = FixedPointCodec(keypair512.public_key.n, config.frac_bits, config.guard_bits)
    for seed in range(20):
        A, lam, v = make_test_matrix(n, 2.0, np.random.default_rng(seed))
        outcome = solve_in_process(A, None, config, random.Random(seed), keypair512)
        oracle = local_power_iteration(A, None, eps=config.eps, omega=config.omega_for(n),
                                       codec=codec)
        floating = local_power_iteration(A, None, eps=config.eps, omega=config.omega_for(n))
        assert outcome.verdict is Verdict.ACCEPTED, seed
        assert outcome.rounds == oracle.iterations, seed
        assert outcome.result.eigenvalue == pytest.approx(floating.eigenvalue, rel=1e-6)
        assert outcome.result.eigenvalue == pytest.approx(lam, rel=1e-6)
        np.testing.assert_allclose(outcome.result.eigenvector, signed_normalize(v), atol=1e-5)


@pytest.mark.slow
def test_tampering_sweep_is_rejected(keypair512, config):
    rejected = 0
    for seed in range(100):
        A, _, _ = make_test_matrix(16, 2.0, np.random.default_rng(seed))
        delta = 10 * config.verify_tol * matrix_inf_norm(A)
        worker = WorkerState(keypair512.public_key, Tamper(1.0, delta), rng=random.Random(seed))
        outcome = solve_in_process(A, None, config, random.Random(seed), keypair512,
                                   worker=worker)
        assert outcome.verdict is not Verdict.ACCEPTED, seed
        rejected += outcome.verdict is Verdict.REJECTED
    assert rejected >= 99


@pytest.mark.slow
@pytest.mark.parametrize("policy", [Arbitrary(), Lazy()], ids=str)
def test_dishonest_sweep_is_never_accepted(keypair512, config, policy):
    config = config.replace(omega=50)
    for seed in range(50):
        A, _, _ = make_test_matrix(4, 2.0, np.random.default_rng(seed))
        worker = WorkerState(keypair512.public_key, policy, rng=random.Random(seed))
        outcome = solve_in_process(A, None, config, random.Random(seed), keypair512,
                                   worker=worker)
        assert outcome.verdict is not Verdict.ACCEPTED, seed
        assert outcome.rounds <= 50
