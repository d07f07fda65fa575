#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "knowself/policy.hpp"
#include "support/fixtures.hpp"

using namespace knowself;

namespace {

PolicyParams random_params(EnvKind kind, uint64_t seed, double scale = 1.0) {
    PolicyParams p = zero_params(kind);
    Rng rng(seed);
    for (auto* m : {&p.act, &p.cont, &p.tmpl, &p.know})
        for (auto& v : m->data) v = scale * (2.0 * rng.uniform() - 1.0);
    return p;
}

KnowledgeEntry dummy_entry(EnvKind kind, DecisionId advice = 0) {
    KnowledgeEntry e;
    e.id = "rule_0";
    e.kind = RuleKind::Error;
    e.condition_key = {task_types(kind)[0], Phase::Seeking, HoldingClass::None};
    e.advice_class = advice;
    e.rule_text = "When the agent is looking for an object for a put task, the agent should " +
                  move_advice_phrase(kind, advice) + " instead of closing";
    return e;
}

History gold_prefix(const Task& t, const std::function<bool(const Session&)>& stop) {
    auto tp = std::make_shared<Task>(t);
    Session s(tp);
    History h(tp);
    while (!s.done() && !stop(s)) {
        Action a = gold_action(s);
        Observation o = s.apply(a);
        h.append(a, o);
    }
    return h;
}

// Naive long-double recomputation of the factorized log-probability, kept
// free of the max-shift trick the implementation uses.
long double direct_logprob(const PolicyParams& p, const std::vector<DecisionTrace>& trace) {
    long double total = 0.0L;
    for (const auto& d : trace) {
        const Matrix& w = d.slot == Slot::Act    ? p.act
                  : d.slot == Slot::Cont ? p.cont
                  : d.slot == Slot::Tmpl ? p.tmpl
                                         : p.know;
        auto dot = [&](int row) {
            long double v = 0.0L;
            for (int f : d.phi) v += w.at(row, f);
            return v;
        };
        long double denom = 0.0L;
        for (int r : d.support) denom += expl(dot(r));
        total += logl(expl(dot(d.row)) / denom);
    }
    return total;
}

}  // namespace

TEST_CASE("uniform params on a nine-option state score log(1/9)") {
    // Under NoRefl the first decision picks among eight groundable actions
    // plus KNOW (nine options) and STOP is certain, so the whole output
    // carries exactly log(1/9) under uniform weights.
    History h = knowself::testing::nine_option_history();
    PolicyParams p = zero_params(EnvKind::MiniHouse);
    Session s = replay(h);
    StructuredOutput y = make_fast(gold_action(s));
    auto trace = trace_output(p.grammar, s, y, nullptr, DecodeMode::NoRefl);
    REQUIRE(trace[0].support.size() == 9);
    double lp = logprob(p, h, y, nullptr, DecodeMode::NoRefl);
    CHECK(lp == doctest::Approx(std::log(1.0 / 9.0)).epsilon(1e-12));
    CHECK(lp == doctest::Approx(-2.19722).epsilon(1e-5));
}

TEST_CASE("logprob is deterministic and non-positive") {
    Task t = generate_task(EnvKind::MiniHouse, TaskType::Clean, 8);
    History h = gold_prefix(t, [](const Session& s) { return s.steps_taken() >= 2; });
    PolicyParams p = random_params(EnvKind::MiniHouse, 99);
    Session s = replay(h);
    StructuredOutput y = make_fast(gold_action(s));
    double a = logprob(p, h, y);
    double b = logprob(p, h, y);
    CHECK(a == b);
    CHECK(a <= 0.0);
}

TEST_CASE("logprob matches an independent direct summation") {
    Rng seeds(13);
    for (int trial = 0; trial < 20; ++trial) {
        uint64_t seed = seeds.next_u64() % 1000;
        EnvKind kind = trial % 2 ? EnvKind::MiniShop : EnvKind::MiniHouse;
        TaskType type = task_types(kind)[trial % task_types(kind).size()];
        Task t = generate_task(kind, type, seed);
        int cut = trial % 3;
        History h = gold_prefix(t, [&](const Session& s) { return s.steps_taken() >= cut; });
        PolicyParams p = random_params(kind, seeds.next_u64());
        Session s = replay(h);

        Action gold = gold_action(s);
        std::vector<StructuredOutput> ys;
        ys.push_back(make_fast(gold));
        KnowledgeEntry e = dummy_entry(kind);
        ys.push_back(make_knowledgeable(e.id, e.rule_text, gold));
        for (DecisionId id : decision_support(s)) {
            Action a = *ground(s, id);
            if (a != gold) {
                ys.push_back(make_slow(a, trial % 8,
                                       instantiate_template(trial % 8, action_text(a),
                                                            action_text(gold)),
                                       gold));
                break;
            }
        }
        for (const auto& y : ys) {
            const KnowledgeEntry* injected =
                y.situation == Situation::Knowledgeable ? &e : nullptr;
            auto trace = trace_output(p.grammar, s, y, injected, DecodeMode::Free);
            double lp = logprob(p, h, y, injected);
            CHECK(lp == doctest::Approx(static_cast<double>(direct_logprob(p, trace)))
                            .epsilon(1e-10));
        }
    }
}

TEST_CASE("probabilities of all grammar-valid outputs sum to one") {
    // MiniShop start page: three distinct actions, well under the 5-action
    // enumeration bound.
    Task t = generate_task(EnvKind::MiniShop, TaskType::Purchase, 4);
    auto tp = std::make_shared<Task>(t);
    History h(tp);
    Session s(tp);
    auto support = decision_support(s);
    REQUIRE(support.size() == 3);

    PolicyParams p = random_params(EnvKind::MiniShop, 21);
    KnowledgeEntry e = dummy_entry(EnvKind::MiniShop, 2);

    double sum = 0.0;
    for (DecisionId id : support) {
        Action a = *ground(s, id);
        sum += std::exp(logprob(p, h, make_fast(a)));
        sum += std::exp(logprob(p, h, make_knowledgeable(e.id, e.rule_text, a), &e));
        for (int tmpl = 0; tmpl < reflection_template_count(); ++tmpl) {
            for (DecisionId rid : support) {
                Action r = *ground(s, rid);
                if (r == a) continue;
                auto y = make_slow(a, tmpl,
                                   instantiate_template(tmpl, action_text(a), action_text(r)), r);
                sum += std::exp(logprob(p, h, y));
            }
        }
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("grammar-invalid outputs are rejected") {
    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 3);
    auto tp = std::make_shared<Task>(t);
    History h(tp);
    Session s(tp);
    Action gold = gold_action(s);
    PolicyParams p = zero_params(EnvKind::MiniHouse);

    StructuredOutput bad_fast = make_fast(gold);
    bad_fast.reflection = Reflection{0, "stray"};
    CHECK_THROWS_AS(logprob(p, h, bad_fast), ContractError);

    StructuredOutput self_slow = make_slow(gold, 0, instantiate_template(0, "x", "y"), gold);
    CHECK_THROWS_AS(logprob(p, h, self_slow), ContractError);

    StructuredOutput know = make_knowledgeable("rule_0", "text", gold);
    CHECK_THROWS_AS(logprob(p, h, know), ContractError);  // missing teacher-forced entry

    StructuredOutput fast = make_fast(Action{Verb::GoTo, {"nowhere 9"}});
    CHECK_THROWS_AS(logprob(p, h, fast), ContractError);  // infeasible action
}

TEST_CASE("decode masks are absolute") {
    KnowledgeEntry e = dummy_entry(EnvKind::MiniHouse, 2);
    int provider_calls = 0;
    KnowledgeProvider provider = [&](const History&) {
        ++provider_calls;
        return &e;
    };
    for (uint64_t seed = 0; seed < 8; ++seed) {
        Task t = generate_task(EnvKind::MiniHouse, TaskType::Cool, 200 + seed);
        PolicyParams p = random_params(EnvKind::MiniHouse, seed * 7 + 1, 2.0);
        History h = gold_prefix(t, [&](const Session& s) {
            return s.steps_taken() >= static_cast<int>(seed % 4);
        });

        StructuredOutput fast_only = decode(p, h, DecodeMode::FastOnly, provider);
        CHECK(fast_only.situation == Situation::Fast);
        CHECK(decision_count(fast_only) == 2);

        StructuredOutput no_know = decode(p, h, DecodeMode::NoKnow, provider);
        CHECK(no_know.situation != Situation::Knowledgeable);
        CHECK(provider_calls == 0);

        StructuredOutput no_refl = decode(p, h, DecodeMode::NoRefl, provider);
        CHECK(no_refl.situation != Situation::Slow);

        provider_calls = 0;
        StructuredOutput forced = decode(p, h, DecodeMode::ForceKnow, provider);
        CHECK(forced.situation == Situation::Knowledgeable);
        CHECK(provider_calls == 1);
        CHECK(forced.knowledge->entry_id == e.id);
        provider_calls = 0;
    }
}

TEST_CASE("rethink excludes the wrong action") {
    Task t = generate_task(EnvKind::MiniShop, TaskType::Purchase, 6);
    auto tp = std::make_shared<Task>(t);
    History h(tp);
    Session s(tp);

    SUBCASE("never returns the excluded action over random params") {
        Rng rng(17);
        for (int i = 0; i < 1000; ++i) {
            PolicyParams p = random_params(EnvKind::MiniShop, rng.next_u64(), 3.0);
            auto support = decision_support(s);
            Action wrong = *ground(s, support[static_cast<size_t>(rng.below(support.size()))]);
            RethinkResult r = rethink(p, h, wrong);
            CHECK(r.revised != wrong);
        }
    }

    SUBCASE("revised action has the second-highest logit") {
        PolicyParams p = random_params(EnvKind::MiniShop, 1234);
        // Rank the support by reflection-context logits with the top action
        // itself as the emitted wrong move, then check rethink returns the
        // runner-up once the top action is excluded.
        auto ranked_for = [&](const std::optional<DecisionId>& emitted,
                              const Action* excluded) {
            SlotContext ctx;
            ctx.refl_context = true;
            ctx.emitted = emitted;
            std::vector<int> phi = features(s, ctx);
            std::vector<std::pair<double, Action>> ranked;
            for (DecisionId id : decision_support(s)) {
                Action a = *ground(s, id);
                if (excluded && a == *excluded) continue;
                double v = 0.0;
                for (int f : phi) v += p.act.at(id, f);
                ranked.push_back({v, a});
            }
            std::sort(ranked.begin(), ranked.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
            return ranked;
        };
        // Pick the wrong action first (context-free ranking), then rank the
        // remainder with that action as context.
        Action wrong = ranked_for(std::nullopt, nullptr)[0].second;
        auto ranked = ranked_for(canonical_decision(s, wrong), &wrong);
        RethinkResult r = rethink(p, h, wrong);
        CHECK(r.revised == ranked[0].second);
    }

    SUBCASE("single-alternative edge still excludes") {
        PolicyParams p = zero_params(EnvKind::MiniShop);
        auto support = decision_support(s);
        REQUIRE(support.size() >= 2);
        Action wrong = *ground(s, support[0]);
        CHECK(rethink(p, h, wrong).revised != wrong);
    }
}

TEST_CASE("scripted policies behave as labeled") {
    Task t = generate_task(EnvKind::MiniHouse, TaskType::Heat, 55);
    auto tp = std::make_shared<Task>(t);
    Session s(tp);
    History h(tp);

    auto gold_policy = make_scripted(ScriptedKind::AlwaysGold);
    auto wtg = make_scripted(ScriptedKind::WrongThenGold);
    auto wrong = make_scripted(ScriptedKind::AlwaysWrong);

    while (!s.done()) {
        Action gold = gold_action(s);
        CHECK(gold_policy->propose(h) == gold);

        Action w = wtg->propose(h);
        CHECK(w != gold);
        CHECK(wtg->rethink(h, w).revised == gold);

        Action w2 = wrong->propose(h);
        CHECK(w2 != gold);
        RethinkResult r = wrong->rethink(h, w2);
        CHECK(r.revised != gold);
        CHECK(r.revised != w2);

        Observation o = s.apply(gold);
        h.append(gold, o);
    }
}

TEST_CASE("competence probe rejects out-of-range p and hits its rate roughly") {
    CHECK_THROWS_AS(make_scripted(ScriptedKind::Competence, {{TaskType::Put, 1.5}}, 1),
                    ContractError);

    auto probe = make_scripted(ScriptedKind::Competence, {{TaskType::Put, 0.7}}, 11);
    int gold_hits = 0, total = 0;
    for (uint64_t seed = 0; seed < 30; ++seed) {
        Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 700 + seed);
        auto tp = std::make_shared<Task>(t);
        Session s(tp);
        History h(tp);
        while (!s.done()) {
            Action gold = gold_action(s);
            if (probe->propose(h) == gold) ++gold_hits;
            ++total;
            h.append(gold, s.apply(gold));
        }
    }
    double rate = static_cast<double>(gold_hits) / total;
    CHECK(rate > 0.55);
    CHECK(rate < 0.85);
    // Deterministic under the seed: same proposal on a fresh equal history.
    auto probe2 = make_scripted(ScriptedKind::Competence, {{TaskType::Put, 0.7}}, 11);
    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 700);
    auto tp = std::make_shared<Task>(t);
    History h(tp);
    CHECK(probe->propose(h) == probe2->propose(h));
}

TEST_CASE("params diff helper compares bitwise") {
    PolicyParams a = random_params(EnvKind::MiniHouse, 5);
    PolicyParams b = a;
    CHECK(params_max_abs_diff(a, b) == 0.0);
    b.act.data[3] += 1e-15;
    CHECK(params_max_abs_diff(a, b) > 0.0);
}
