import json

import numpy as np
import pytest
from scipy import stats

from paceroute.arm_stats import HeuristicPrior
from paceroute.cost_model import ModelPricing
from paceroute.pacer import BudgetPacer
from paceroute.router import (
    BanditRouter,
    DuplicateFeedbackError,
    FeedbackRecord,
    RouterConfig,
    SnapshotError,
    UnknownRequestError,
)
from conftest import unit_context


def tier_pricing():
    return {
        "llama": ModelPricing("llama", 0.0001, 0.0001, 2.9e-5),
        "mistral": ModelPricing("mistral", 0.001, 0.001, 5.3e-4),
        "gemini": ModelPricing("gemini", 0.00125, 0.01, 1.5e-2),
    }


def make_router(d=8, burn_in=0, budget=None, seed=0, gamma=0.997, alpha=0.01, arms=None, **cfg_kwargs):
    config = RouterConfig(d=d, alpha=alpha, gamma=gamma, burn_in_pulls=burn_in, seed=seed, **cfg_kwargs)
    router = BanditRouter(config, BudgetPacer(budget_per_request=budget))
    for mid, pricing in (arms or tier_pricing()).items():
        router.add_arm(mid, pricing)
    return router


def drive(router, rng, n, reward=0.5, cost=1e-4):
    for _ in range(n):
        d = router.route(unit_context(router.config.d, rng))
        router.feedback(FeedbackRecord(d.request_id, reward, cost))


# -- routing -------------------------------------------------------------------


def test_tie_break_uniform_over_identical_cold_arms():
    # gamma=1 keeps scores exactly symmetric with no feedback, so every route
    # is a K-way tie resolved by the seeded RNG.
    pricing = {f"arm{i}": ModelPricing(f"arm{i}", 0.001, 0.001, 1e-4) for i in range(4)}
    router = make_router(d=6, gamma=1.0, arms=pricing, seed=42)
    rng = np.random.default_rng(0)
    x = unit_context(6, rng)
    counts = {mid: 0 for mid in pricing}
    for _ in range(1000):
        counts[router.route(x).arm_id] += 1
    _, p_value = stats.chisquare(list(counts.values()))
    assert p_value > 0.01


def test_score_parts_sum_to_score():
    router = make_router(budget=1e-3)
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = router.route(unit_context(8, rng))
        assert d.exploit + d.explore - d.penalty == pytest.approx(d.score, abs=1e-12)
        router.feedback(FeedbackRecord(d.request_id, 0.5, 4e-4))


def test_staleness_inflation_dt_zero_and_cap():
    router = make_router(d=6, gamma=0.997, v_max=200.0)
    rng = np.random.default_rng(2)
    x = unit_context(6, rng)
    entry = router.arm("llama")
    base_v = entry.state.variance(x)

    # dt = 0 right after registration: bonus is the raw quadratic form
    d = router.route(x)
    if d.arm_id == "llama":
        assert d.explore == pytest.approx(router.config.alpha * np.sqrt(base_v), rel=1e-9)

    # push the clock far ahead: inflation caps at v_max
    entry.state.last_update = entry.state.last_played = 0
    router.t = 10_000
    exploit, explore, _ = router._score_parts(entry, x)
    assert explore == pytest.approx(router.config.alpha * np.sqrt(base_v * 200.0), rel=1e-9)
    # sqrt(200) ~ 14x the uninflated bonus
    assert explore / (router.config.alpha * np.sqrt(base_v)) == pytest.approx(np.sqrt(200.0), rel=1e-9)


def test_staleness_half_life_doubles_variance():
    router = make_router(d=6, gamma=0.997)
    rng = np.random.default_rng(3)
    x = unit_context(6, rng)
    entry = router.arm("llama")
    v0 = entry.state.variance(x)
    router.t = 231  # half-life of gamma=0.997
    _, explore, _ = router._score_parts(entry, x)
    inflated = (explore / router.config.alpha) ** 2
    assert inflated == pytest.approx(v0 / 0.997**231, rel=1e-9)
    assert inflated == pytest.approx(2 * v0, rel=2e-3)


def test_staleness_monotone_and_flat_after_cap():
    router = make_router(d=6, gamma=0.99, v_max=50.0)
    rng = np.random.default_rng(4)
    x = unit_context(6, rng)
    entry = router.arm("llama")
    bonuses = []
    for t in range(0, 1200, 25):
        router.t = t
        _, explore, _ = router._score_parts(entry, x)
        bonuses.append(explore)
    assert all(b2 >= b1 - 1e-15 for b1, b2 in zip(bonuses, bonuses[1:]))
    # flat once gamma^dt <= 1/v_max (dt >= log(1/50)/log(0.99) ~ 389)
    assert bonuses[-1] == pytest.approx(bonuses[-10], rel=1e-12)


def test_route_validates_context():
    router = make_router(d=6)
    with pytest.raises(ValueError):
        router.route(np.ones(5))
    bad = np.ones(6)
    bad[-1] = 0.5
    with pytest.raises(ValueError):
        router.route(bad)


def test_route_requires_arms():
    router = BanditRouter(RouterConfig(d=4), BudgetPacer(None))
    with pytest.raises(ValueError):
        router.route(np.array([0.0, 0.0, 0.0, 1.0]))


def test_argmax_invariant_to_common_cost_shift():
    rng = np.random.default_rng(5)
    contexts = [unit_context(8, rng) for _ in range(300)]
    rewards = rng.uniform(0, 1, size=300)

    def run(shift):
        router = make_router(budget=1e-3, seed=7)
        for mid in router.arm_ids():
            router.arm(mid).c_tilde += shift
        chosen = []
        for x, r in zip(contexts, rewards):
            d = router.route(x)
            chosen.append(d.arm_id)
            router.feedback(FeedbackRecord(d.request_id, float(r), 4e-4))
        return chosen

    assert run(0.0) == run(0.2)


# -- feedback ------------------------------------------------------------------


def test_feedback_clock_immediate():
    router = make_router(d=6, gamma=0.997)
    rng = np.random.default_rng(6)
    d = router.route(unit_context(6, rng))
    entry = router.arm(d.arm_id)
    assert router.t - entry.state.last_update == 1  # one route elapsed
    router.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))
    assert entry.state.last_update == router.t


def test_delayed_feedback_posterior_equivalence():
    # Feedback absorbed at step T yields the same posterior whether its route
    # was issued at T or 100 steps earlier: decay keys off statistics age,
    # not arrival time. Single-arm registry pins the arm choice; intervening
    # routes are left unresolved so they advance the clock without updating.
    rng = np.random.default_rng(7)
    other_ctx = [unit_context(6, rng) for _ in range(100)]
    target_ctx = unit_context(6, rng)
    solo = {"solo": ModelPricing("solo", 0.001, 0.001, 1e-4)}

    delayed = make_router(d=6, gamma=0.997, seed=3, arms=solo)
    held = delayed.route(target_ctx)
    for x in other_ctx:
        delayed.route(x)
    delayed.feedback(FeedbackRecord(held.request_id, 0.9, 1e-4))

    immediate = make_router(d=6, gamma=0.997, seed=3, arms=solo)
    for x in other_ctx:
        immediate.route(x)
    d = immediate.route(target_ctx)
    immediate.feedback(FeedbackRecord(d.request_id, 0.9, 1e-4))

    assert delayed.t == immediate.t
    s1, s2 = delayed.arm("solo").state, immediate.arm("solo").state
    assert s1.last_update == s2.last_update
    assert np.max(np.abs(s1.theta_hat - s2.theta_hat)) <= 1e-10
    assert np.max(np.abs(s1.A - s2.A)) <= 1e-10


def test_feedback_unknown_id_leaves_state_unchanged():
    router = make_router(d=6)
    rng = np.random.default_rng(8)
    router.route(unit_context(6, rng))
    before = {mid: router.arm(mid).state.n_updates for mid in router.arm_ids()}
    with pytest.raises(UnknownRequestError):
        router.feedback(FeedbackRecord("req-never-issued", 0.5, 1e-4))
    assert {mid: router.arm(mid).state.n_updates for mid in router.arm_ids()} == before


def test_duplicate_feedback_rejected_idempotently():
    router = make_router(d=6)
    rng = np.random.default_rng(9)
    d = router.route(unit_context(6, rng))
    router.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))
    updates = router.arm(d.arm_id).state.n_updates
    with pytest.raises(DuplicateFeedbackError):
        router.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))
    assert router.arm(d.arm_id).state.n_updates == updates


def test_feedback_validates_before_mutating():
    router = make_router(d=6)
    rng = np.random.default_rng(10)
    d = router.route(unit_context(6, rng))
    with pytest.raises(ValueError):
        router.feedback(FeedbackRecord(d.request_id, 1.7, 1e-4))
    # the decision is still pending, valid feedback succeeds afterwards
    ack = router.feedback(FeedbackRecord(d.request_id, 0.7, 1e-4))
    assert ack.status == "absorbed"


def test_decision_cache_ttl_eviction():
    router = make_router(d=6, decision_ttl=50)
    rng = np.random.default_rng(11)
    first = router.route(unit_context(6, rng))
    for _ in range(80):
        d = router.route(unit_context(6, rng))
        router.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))
    with pytest.raises(UnknownRequestError):
        router.feedback(FeedbackRecord(first.request_id, 0.5, 1e-4))


# -- registry ------------------------------------------------------------------


def test_add_arm_burn_in_unconditional():
    router = make_router(d=6, burn_in=0, budget=1e-3)
    rng = np.random.default_rng(12)
    drive(router, rng, 50, reward=0.9, cost=5e-4)
    router.add_arm("newbie", ModelPricing("newbie", 0.0005, 0.0005, 2e-4), burn_in_pulls=20)
    chosen = []
    for _ in range(20):
        d = router.route(unit_context(6, rng))
        chosen.append((d.arm_id, d.forced))
        router.feedback(FeedbackRecord(d.request_id, 0.2, 2e-4))
    assert chosen == [("newbie", True)] * 20
    d = router.route(unit_context(6, rng))
    assert not d.forced  # competition resumes


def test_add_arm_without_burn_in_competes_immediately():
    router = make_router(d=6, burn_in=0)
    rng = np.random.default_rng(13)
    router.add_arm("newbie", ModelPricing("newbie", 0.0005, 0.0005, 2e-4), burn_in_pulls=0)
    d = router.route(unit_context(6, rng))
    assert not d.forced


def test_add_arm_duplicate_rejected():
    router = make_router(d=6)
    with pytest.raises(ValueError):
        router.add_arm("llama", ModelPricing("llama", 0.001, 0.001))


def test_burn_in_fifo_across_multiple_new_arms():
    router = make_router(d=6, burn_in=0)
    rng = np.random.default_rng(14)
    router.add_arm("a1", ModelPricing("a1", 0.001, 0.001, 1e-4), burn_in_pulls=3)
    router.add_arm("a2", ModelPricing("a2", 0.001, 0.001, 1e-4), burn_in_pulls=2)
    seq = []
    for _ in range(5):
        d = router.route(unit_context(6, rng))
        seq.append(d.arm_id)
        router.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))
    assert seq == ["a1", "a1", "a1", "a2", "a2"]


def test_burn_in_overrides_hard_ceiling_with_audit():
    router = make_router(d=6, burn_in=0, budget=1e-4)
    rng = np.random.default_rng(15)
    router.pacer.lambda_t = 2.0  # active ceiling excludes expensive arms
    router.add_arm("pricey", ModelPricing("pricey", 0.02, 0.02, 2e-2), burn_in_pulls=1)
    d = router.route(unit_context(6, rng))
    assert d.arm_id == "pricey" and d.forced
    assert router.burn_in_ceiling_overrides == 1


def test_delete_arm_never_selected_again():
    router = make_router(d=6)
    rng = np.random.default_rng(16)
    router.delete_arm("gemini")
    assert "gemini" not in router.arm_ids()
    for _ in range(50):
        d = router.route(unit_context(6, rng))
        assert d.arm_id != "gemini"
        router.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))


def test_delete_arm_discards_pending_feedback_idempotently():
    # Identical pricing keeps cold arms tied, so every arm gets routed.
    pricing = {f"m{i}": ModelPricing(f"m{i}", 0.001, 0.001, 1e-4) for i in range(3)}
    router = make_router(d=6, gamma=1.0, arms=pricing, seed=5)
    rng = np.random.default_rng(17)
    pending = []
    for _ in range(200):
        d = router.route(unit_context(6, rng))  # all left unresolved: arms stay tied
        if d.arm_id == "m1":
            pending.append(d)
            if len(pending) == 2:
                break
    assert len(pending) == 2
    dropped = router.delete_arm("m1")
    assert dropped == 2
    ack = router.feedback(FeedbackRecord(pending[0].request_id, 0.5, 1e-4))
    assert ack.status == "discarded"
    assert router.discarded_feedback_count == 2


def test_delete_last_arm_rejected():
    router = make_router(d=6)
    router.delete_arm("gemini")
    router.delete_arm("mistral")
    with pytest.raises(ValueError):
        router.delete_arm("llama")


def test_delete_cmax_arm_recomputes_ceiling():
    # Removing the most expensive arm changes c_max; the eligible set must
    # match a brute-force evaluation of the rule on the new portfolio.
    router = make_router(d=6, budget=1e-4)
    router.pacer.lambda_t = 1.0
    prices = [(mid, router.arm(mid).price) for mid in router.arm_ids()]
    assert router.pacer.eligible_arms(prices) == ["llama", "mistral"]
    router.delete_arm("gemini")
    prices = [(mid, router.arm(mid).price) for mid in router.arm_ids()]
    ceiling = max(p for _, p in prices) / 2.0
    brute = [mid for mid, p in prices if p <= ceiling] or [min(prices, key=lambda ap: ap[1])[0]]
    assert router.pacer.eligible_arms(prices) == brute


def test_update_pricing_rederives_cost_terms():
    router = make_router(d=6)
    before = router.arm("gemini").c_tilde
    router.update_pricing("gemini", ModelPricing("gemini", 0.0001, 0.0001, 2.7e-4))
    assert router.arm("gemini").c_tilde == 0.0
    assert router.arm("gemini").price == 2.7e-4
    assert before > 0.5


def test_heuristic_prior_arm_predicts_bias():
    router = make_router(d=6, burn_in=0)
    router.add_arm(
        "warm", ModelPricing("warm", 0.001, 0.001, 1e-4), prior=HeuristicPrior(0.5), n_eff=40.0
    )
    x = np.zeros(6)
    x[-1] = 1.0
    assert router.arm("warm").state.predict(x) == pytest.approx(0.5)


# -- score decomposition against snapshots ---------------------------------------


def test_score_reproducible_from_snapshot():
    router = make_router(d=8, budget=1e-3, seed=21)
    rng = np.random.default_rng(22)
    drive(router, rng, 60, reward=0.7, cost=6e-4)
    for _ in range(10):
        snap = router.snapshot()
        x = unit_context(8, rng)
        d = router.route(x)
        arm_doc = snap["arms"][d.arm_id]
        A_inv = np.linalg.inv(np.array(arm_doc["state"]["A"]))
        theta = A_inv @ np.array(arm_doc["state"]["b"])
        dt = snap["t"] - max(arm_doc["state"]["last_update"], arm_doc["state"]["last_played"])
        v = float(x @ (A_inv @ x)) / max(router.config.gamma**dt, 1.0 / router.config.v_max)
        lam = snap["pacer"]["lambda_t"]
        expected = float(theta @ x) + router.config.alpha * np.sqrt(v) - (0.3 + lam) * arm_doc["c_tilde"]
        assert d.score == pytest.approx(expected, abs=1e-9)
        router.feedback(FeedbackRecord(d.request_id, 0.7, 6e-4))


# -- snapshot / restore ----------------------------------------------------------


def test_snapshot_restore_bit_identical_decisions():
    rng = np.random.default_rng(23)
    router = make_router(d=8, budget=1e-3, seed=11, burn_in=0)
    drive(router, rng, 100, reward=0.6, cost=5e-4)
    doc = json.loads(json.dumps(router.snapshot()))
    twin = BanditRouter.restore(doc)

    replay_rng = np.random.default_rng(24)
    contexts = [unit_context(8, replay_rng) for _ in range(300)]
    rewards = replay_rng.uniform(0, 1, size=300)
    original, restored = [], []
    for x, r in zip(contexts, rewards):
        d1 = router.route(x)
        d2 = twin.route(x)
        original.append((d1.request_id, d1.arm_id, d1.score))
        restored.append((d2.request_id, d2.arm_id, d2.score))
        router.feedback(FeedbackRecord(d1.request_id, float(r), 5e-4))
        twin.feedback(FeedbackRecord(d2.request_id, float(r), 5e-4))
    assert original == restored  # exact equality, scores included


def test_snapshot_empty_router_round_trip():
    router = BanditRouter(RouterConfig(d=4), BudgetPacer(None))
    twin = BanditRouter.restore(router.snapshot())
    assert twin.arm_ids() == []
    assert twin.t == 0


def test_restore_rejects_corrupt_documents():
    router = make_router(d=6)
    doc = router.snapshot()
    bad = dict(doc)
    bad["format_version"] = 99
    with pytest.raises(SnapshotError):
        BanditRouter.restore(bad)
    bad = json.loads(json.dumps(doc))
    del bad["arms"]
    with pytest.raises(SnapshotError):
        BanditRouter.restore(bad)
    with pytest.raises(SnapshotError):
        BanditRouter.restore({"kind": "something-else"})


def test_concurrent_callers_observe_total_order():
    # route/feedback are mutually serialized: concurrent callers must leave
    # a consistent step count and unique request ids.
    import threading

    router = make_router(d=6, gamma=1.0, budget=1e-3, seed=1)
    rng_pool = [np.random.default_rng(100 + i) for i in range(4)]
    seen: list[str] = []
    lock = threading.Lock()

    def worker(rng):
        for _ in range(50):
            d = router.route(unit_context(6, rng))
            with lock:
                seen.append(d.request_id)
            router.feedback(FeedbackRecord(d.request_id, 0.5, 2e-4))

    threads = [threading.Thread(target=worker, args=(rng,)) for rng in rng_pool]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert router.t == 200
    assert len(set(seen)) == 200
    assert all(router.arm(mid).state.n_updates >= 0 for mid in router.arm_ids())
    total_updates = sum(router.arm(mid).state.n_updates for mid in router.arm_ids())
    assert total_updates == 200


def test_snapshot_preserves_pending_and_burn_in():
    router = make_router(d=6, burn_in=0)
    rng = np.random.default_rng(25)
    d = router.route(unit_context(6, rng))  # left pending
    router.add_arm("fresh", ModelPricing("fresh", 0.001, 0.001, 1e-4), burn_in_pulls=5)
    twin = BanditRouter.restore(json.loads(json.dumps(router.snapshot())))
    ack = twin.feedback(FeedbackRecord(d.request_id, 0.5, 1e-4))
    assert ack.status == "absorbed"
    nxt = twin.route(unit_context(6, rng))
    assert nxt.arm_id == "fresh" and nxt.forced
