import numpy as np
import pytest

from mubqkd import optics, protocol, security
from mubqkd.galois import field
from mubqkd.protocol import ChannelModel, RunConfig

GF4 = field(2, 2)
TRIALS = 1_000_000


def stacked(stats):
    return np.vstack([stats.q, stats.q_Z])


def within_bands(tally, channel, k=3.0):
    """Sampled error vectors against the analytic ones, per component."""
    sampled = stacked(protocol.stats_from_tally(tally))
    analytic = stacked(security.q_from_lambda(tally.ctx, channel.weights))
    n = np.array([tally.detected[r, :, r, :].sum() for r in range(tally.d + 1)], dtype=float)
    sigma = np.sqrt(analytic * (1 - analytic) / n[:, None])
    return np.abs(sampled - analytic) <= k * sigma


def test_channel_weights():
    dep = ChannelModel.depolarizing(4, 0.2)
    assert dep.weights[0, 0] == pytest.approx(1 - 0.2 * 15 / 16)
    assert dep.weights[1, 2] == pytest.approx(0.2 / 16)
    assert dep.weights.sum() == pytest.approx(1.0)
    cor = ChannelModel.correlated(4, 0.3)
    np.testing.assert_allclose(cor.weights, np.diag([0.7, 0.1, 0.1, 0.1]))
    assert ChannelModel.identity(3).weights[0, 0] == 1.0
    with pytest.raises(ValueError):
        ChannelModel.bell(np.full((2, 2), 0.3))
    with pytest.raises(ValueError):
        ChannelModel.bell(np.array([[1.1, -0.1], [0, 0]]))


def test_depolarizing_symbol_error():
    e = 0.07
    stats = security.q_from_lambda(GF4, ChannelModel.depolarizing_from_error(4, e).weights)
    assert stats.e_Z == pytest.approx(e)
    np.testing.assert_allclose(stats.e_phase, e)


def test_kraus_is_trace_preserving():
    ch = ChannelModel.bell(np.random.default_rng(0).dirichlet(np.ones(9)).reshape(3, 3))
    K = ch.kraus(field(3, 1))
    np.testing.assert_allclose(sum(k.conj().T @ k for k in K), np.eye(3), atol=1e-14)


def test_outcome_table_rows_normalised():
    ch = ChannelModel.depolarizing_from_error(4, 0.1)
    for backend in ("ideal", "optics"):
        P = protocol.outcome_probabilities(GF4, ch, RunConfig(GF4, 1, backend=backend))
        np.testing.assert_allclose(P.sum(axis=-1), 1.0, atol=1e-12)
    ideal = protocol.outcome_probabilities(GF4, ch)
    assert np.all(ideal[..., 4] < 1e-12)


def test_identity_channel_no_errors():
    tally = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=11), ChannelModel.identity(4))
    stats = protocol.stats_from_tally(tally)
    assert stats.e_Z == 0.0
    assert np.all(stats.e_phase == 0.0)
    assert tally.trials == TRIALS
    cond = tally.conditional()
    for ra in range(5):
        for rb in range(5):
            if ra != rb:
                assert np.abs(cond[ra, :, rb, :] - 0.25).max() < 0.02


def test_depolarizing_average_error():
    e = 0.05
    ch = ChannelModel.depolarizing_from_error(4, e)
    tally = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=12), ch)
    assert abs(protocol.stats_from_tally(tally).e_bar - e) <= 0.002
    assert within_bands(tally, ch).all()


def test_correlated_shift_errors():
    ch = ChannelModel.correlated(4, 0.1)
    tally = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=13), ch)
    stats = protocol.stats_from_tally(tally)
    assert stats.e_phase[1] == 0.0
    for r in (0, 2, 3):
        n = tally.detected[r, :, r, :].sum()
        assert abs(stats.e_phase[r] - 0.1) <= 3 * np.sqrt(0.09 / n)
    assert within_bands(tally, ch).all()


@pytest.mark.parametrize("backend", ["ideal", "optics"])
def test_bell_diagonal_channel(backend):
    lam = np.random.default_rng(5).dirichlet(np.ones(16)).reshape(4, 4)
    ch = ChannelModel.bell(lam)
    tally = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=14, backend=backend), ch)
    assert within_bands(tally, ch).all()


def test_sampled_lambda_converges_to_channel():
    lam = 0.8 * np.eye(4)[0][:, None] * np.eye(4)[0][None, :] + 0.2 * np.full((4, 4), 1 / 16)
    ch = ChannelModel.bell(lam)
    tally = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=15), ch)
    est = security.lambda_from_q(GF4, protocol.stats_from_tally(tally)).lam
    # independent binomial errors propagated through the linear inverse
    analytic = stacked(security.q_from_lambda(GF4, lam))
    n = np.array([tally.detected[r, :, r, :].sum() for r in range(5)], dtype=float)
    var_q = analytic * (1 - analytic) / n[:, None]
    sigma = np.sqrt((var_q[:4].max(axis=1).sum() + var_q[4].max())) / 4
    assert np.abs(est - lam).max() <= 3 * sigma


def test_optics_matches_ideal():
    ch = ChannelModel.depolarizing_from_error(4, 0.08)
    ideal = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=16), ch)
    opt = protocol.run_protocol(RunConfig(GF4, TRIALS, seed=17, backend="optics"), ch)
    a, b = protocol.stats_from_tally(ideal), protocol.stats_from_tally(opt)
    sa, sb = protocol.binomial_sigma(ideal), protocol.binomial_sigma(opt)
    diff = np.abs(stacked(a) - stacked(b))
    assert np.all(diff <= 3 * np.sqrt(sa**2 + sb**2) + 1e-15)
    # passive loss: phase-basis measurements detect 1/d of the photons
    phase_rows = opt.counts[:, :, :4, :]
    assert phase_rows[..., 4].sum() / phase_rows.sum() == pytest.approx(0.75, abs=0.002)
    assert opt.counts[:, :, 4, 4].sum() == 0


def test_active_optics_is_lossless():
    tally = protocol.run_protocol(RunConfig(GF4, 20_000, seed=3, backend="optics", switch_mode="active"), ChannelModel.identity(4))
    assert tally.lost.sum() == 0


@pytest.mark.parametrize("workers,block", [(1, 1 << 16), (4, 1 << 16), (3, 12_345), (8, 1_000)])
def test_deterministic_across_parallelism(workers, block):
    ch = ChannelModel.depolarizing_from_error(4, 0.1)
    ref = protocol.run_protocol(RunConfig(GF4, 200_000, seed=99), ch)
    got = protocol.run_protocol(RunConfig(GF4, 200_000, seed=99, workers=workers, block_size=block), ch)
    np.testing.assert_array_equal(got.counts, ref.counts)


def test_seed_changes_tally():
    ch = ChannelModel.depolarizing_from_error(4, 0.1)
    a = protocol.run_protocol(RunConfig(GF4, 10_000, seed=1), ch)
    b = protocol.run_protocol(RunConfig(GF4, 10_000, seed=2), ch)
    assert not np.array_equal(a.counts, b.counts)


def test_asymmetric_basis_selection():
    probs = np.array([0.05] * 4 + [0.8])
    tally = protocol.run_protocol(RunConfig(GF4, 200_000, seed=4, basis_probs=probs), ChannelModel.identity(4))
    alice = tally.counts.sum(axis=(1, 2, 3)) / tally.trials
    np.testing.assert_allclose(alice, probs, atol=0.005)


def test_insufficient_data():
    probs = np.array([0.0, 0.25, 0.25, 0.25, 0.25])
    tally = protocol.run_protocol(RunConfig(GF4, 1_000, seed=4, basis_probs=probs), ChannelModel.identity(4))
    with pytest.raises(protocol.InsufficientDataError, match="phase basis 0"):
        protocol.stats_from_tally(tally)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(GF4, 10, basis_probs=[0.5, 0.5])
    with pytest.raises(ValueError):
        RunConfig(GF4, 10, basis_probs=[0.5, 0.5, 0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        RunConfig(GF4, -1)
    with pytest.raises(ValueError):
        RunConfig(GF4, 10, backend="lab")


def test_end_to_end_identity():
    res = protocol.end_to_end(RunConfig(GF4, 200_000, seed=21), ChannelModel.identity(4))
    assert res.full is not None
    assert res.full.r_inf == pytest.approx(2.0, abs=1e-9)
    assert res.bound.r_inf == pytest.approx(2.0, abs=1e-9)


def test_end_to_end_reports_unphysical_estimates():
    # near-noiseless channel: sampled weights for rare errors scatter around zero
    ch = ChannelModel.depolarizing(4, 1e-4)
    res = protocol.end_to_end(RunConfig(GF4, 50_000, seed=8), ch)
    assert (res.full is None) == (not res.lam.physical)
    if res.full is None:
        assert res.diagnostics["unphysical"]


def test_tally_rows():
    tally = protocol.run_protocol(RunConfig(GF4, 5_000, seed=1), ChannelModel.identity(4))
    rows = list(tally.rows())
    assert len(rows) == 5 * 4 * 5 * 4
    assert sum(r[4] for r in rows) == 5_000


def test_odd_prime_field_simulation():
    ctx = field(3, 1)
    ch = ChannelModel.bell(np.random.default_rng(2).dirichlet(np.ones(9)).reshape(3, 3))
    tally = protocol.run_protocol(RunConfig(ctx, 300_000, seed=5), ch)
    assert within_bands(tally, ch).all()


def test_optics_conditional_matches_outcome_table():
    ch = ChannelModel.depolarizing_from_error(4, 0.05)
    cfg = RunConfig(GF4, 1, backend="optics")
    P = protocol.outcome_probabilities(GF4, ch, cfg)
    mixed = np.einsum("aiwbn,w->aibn", P[..., :4], ch.weights.ravel())
    mixed /= mixed.sum(axis=-1, keepdims=True)
    ref = optics.conditional_probabilities(GF4, optics.build_layout(GF4), ch, "durt")
    np.testing.assert_allclose(mixed, ref, atol=1e-12)
