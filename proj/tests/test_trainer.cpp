#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "knowself/trainer.hpp"
#include "support/fixtures.hpp"

using namespace knowself;

namespace {

std::vector<Task> house_tasks(int per_type, uint64_t seed0 = 0) {
    std::vector<Task> tasks;
    for (int i = 0; i < per_type; ++i)
        for (TaskType type : task_types(EnvKind::MiniHouse))
            tasks.push_back(generate_task(EnvKind::MiniHouse, type, seed0 + i));
    return tasks;
}

KnowledgeBase make_kb(uint64_t seed) {
    auto wrong = make_scripted(ScriptedKind::AlwaysWrong, {}, seed);
    KnowledgeBase kb;
    kb.cap = 24;
    kb.entries = generate_rules(mine_pairs(
        house_tasks(2, 400 + seed), [&](const History& h) { return wrong->propose(h); }, 6));
    return consolidate(kb);
}

std::vector<SelfAwareSample> make_dataset(int per_type, uint64_t seed, const KnowledgeBase& kb,
                                          double competence = 0.5) {
    std::map<TaskType, double> comp;
    for (TaskType t : task_types(EnvKind::MiniHouse)) comp[t] = competence;
    auto probe = make_scripted(ScriptedKind::Competence, comp, seed);
    return build_self_dataset(house_tasks(per_type, seed * 31), *probe, kb, {});
}

PolicyParams random_params(EnvKind kind, uint64_t seed, double scale = 0.5) {
    PolicyParams p = zero_params(kind);
    Rng rng(seed);
    for (auto* m : {&p.act, &p.cont, &p.tmpl, &p.know})
        for (auto& v : m->data) v = scale * (2.0 * rng.uniform() - 1.0);
    return p;
}

double fd_max_rel_err(const PolicyParams& p, const GradAccum& analytic,
                      const std::function<double(const PolicyParams&)>& loss_fn) {
    const double h = 1e-5;
    double worst = 0.0;
    PolicyParams probe = p;
    auto scan = [&](Matrix PolicyParams::*slot, const Matrix& g) {
        Matrix& m = probe.*slot;
        for (size_t i = 0; i < m.data.size(); ++i) {
            double saved = m.data[i];
            m.data[i] = saved + h;
            double up = loss_fn(probe);
            m.data[i] = saved - h;
            double down = loss_fn(probe);
            m.data[i] = saved;
            double fd = (up - down) / (2.0 * h);
            double ga = g.data[i];
            double err = std::fabs(fd - ga) / std::max({1.0, std::fabs(fd), std::fabs(ga)});
            worst = std::max(worst, err);
        }
    };
    scan(&PolicyParams::act, analytic.act);
    scan(&PolicyParams::cont, analytic.cont);
    scan(&PolicyParams::tmpl, analytic.tmpl);
    scan(&PolicyParams::know, analytic.know);
    return worst;
}

}  // namespace

TEST_CASE("sft loss on zero weights with certain STOP is ln(9)") {
    // Nine-way first decision (eight actions + KNOW under NoRefl), certain
    // STOP: the per-sample loss is exactly ln 9.
    History h = knowself::testing::nine_option_history();
    Session s = replay(h);

    SelfAwareSample sample;
    sample.task_id = s.task().id;
    sample.step = static_cast<int>(h.size());
    sample.history = h;
    sample.output = make_fast(gold_action(s));
    sample.label = Situation::Fast;
    sample.canonical_text = render(sample.output);

    KnowledgeBase kb;
    PolicyParams p = zero_params(EnvKind::MiniHouse);
    LossGrad lg = sft_loss(p, {&sample}, kb, DecodeMode::NoRefl);
    CHECK(lg.loss == doctest::Approx(std::log(9.0)).epsilon(1e-12));
    CHECK(lg.loss == doctest::Approx(2.19722).epsilon(1e-5));
}

TEST_CASE("overfitting a single sample reproduces it at decode time") {
    KnowledgeBase kb = make_kb(1);
    auto d_self = make_dataset(1, 3, kb);
    const SelfAwareSample* slow = nullptr;
    for (const auto& s : d_self)
        if (s.label == Situation::Slow) slow = &s;
    REQUIRE(slow != nullptr);

    PolicyParams p = zero_params(EnvKind::MiniHouse);
    double loss = 1e9;
    for (int iter = 0; iter < 2000 && loss >= 1e-3; ++iter) {
        LossGrad lg = sft_loss(p, {slow}, kb);
        loss = lg.loss;
        apply_update(p, lg.grad, 1.0);
    }
    REQUIRE(loss < 1e-3);

    KnowledgeProvider provider = [&](const History& hh) {
        return &select_for_inference(kb, hh);
    };
    StructuredOutput decoded = decode(p, slow->history, DecodeMode::Free, provider);
    CHECK(decoded.situation == Situation::Slow);
    CHECK(decoded.first_action == slow->output.first_action);
    CHECK(decoded.final_action == slow->output.final_action);
    CHECK(decoded.reflection->template_id == slow->output.reflection->template_id);
}

TEST_CASE("dpo at the reference point is ln 2 for any beta and batch") {
    KnowledgeBase kb = make_kb(2);
    auto d_self = make_dataset(1, 5, kb);
    auto ref_policy = make_scripted(ScriptedKind::AlwaysWrong, {}, 9);
    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    auto pairs = mine_negatives(d_self, *ref_policy, provider);
    REQUIRE(pairs.size() >= 8);

    PolicyParams p = random_params(EnvKind::MiniHouse, 44);
    for (double beta : {0.1, 0.5, 2.0}) {
        for (size_t start = 0; start + 4 <= pairs.size(); start += 4) {
            std::vector<const PairSample*> batch;
            for (size_t i = start; i < start + 4; ++i) batch.push_back(&pairs[i]);
            LossGrad lg = dpo_loss(p, p, batch, kb, beta);
            CHECK(std::fabs(lg.loss - std::log(2.0)) < 1e-9);
        }
    }
}

TEST_CASE("dpo equals the scalar closed form") {
    // -ln sigmoid(m) with m = 0.5 (margins 0.4 and -0.6 at beta 0.5).
    auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x))
                                                : std::log1p(std::exp(x)); };
    CHECK(softplus(-0.5) == doctest::Approx(0.474077).epsilon(1e-6));

    KnowledgeBase kb = make_kb(3);
    auto d_self = make_dataset(1, 7, kb);
    auto ref_policy = make_scripted(ScriptedKind::AlwaysWrong, {}, 10);
    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    auto pairs = mine_negatives(d_self, *ref_policy, provider);
    REQUIRE(!pairs.empty());

    PolicyParams theta = random_params(EnvKind::MiniHouse, 7);
    PolicyParams ref = random_params(EnvKind::MiniHouse, 8);
    const PairSample& pair = pairs[0];
    const KnowledgeEntry* inj_w = resolve_entry(kb, pair.chosen);
    const KnowledgeEntry* inj_l = resolve_entry(kb, pair.rejected);
    double beta = 0.5;
    double dw = logprob(theta, pair.history, pair.chosen, inj_w) -
                logprob(ref, pair.history, pair.chosen, inj_w);
    double dl = logprob(theta, pair.history, pair.rejected, inj_l) -
                logprob(ref, pair.history, pair.rejected, inj_l);
    double expected = softplus(-beta * (dw - dl));
    LossGrad lg = dpo_loss(theta, ref, {&pair}, kb, beta);
    CHECK(lg.loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("nll closed-form values") {
    KnowledgeBase kb = make_kb(4);
    auto d_self = make_dataset(1, 9, kb);
    const SelfAwareSample* slow = nullptr;
    for (const auto& s : d_self)
        if (s.label == Situation::Slow) slow = &s;
    REQUIRE(slow != nullptr);

    PairSample pair;
    pair.task_id = slow->task_id;
    pair.step = slow->step;
    pair.history = slow->history;
    pair.chosen = slow->output;
    pair.rejected = slow->output;  // unused by nll

    Session s = replay(slow->history);
    PolicyParams zero = zero_params(EnvKind::MiniHouse);
    auto trace = trace_output(zero.grammar, s, slow->output, nullptr, DecodeMode::Free);
    REQUIRE(trace.size() == 4);

    // The reflection-context bit is the feature active for the final decision
    // but not the first one, excluding the emitted one-hot.
    std::vector<int> extra;
    for (int f : trace[3].phi)
        if (std::find(trace[0].phi.begin(), trace[0].phi.end(), f) == trace[0].phi.end())
            extra.push_back(f);
    REQUIRE(extra.size() == 2);  // refl bit + emitted one-hot
    int refl_idx = std::min(extra[0], extra[1]);

    SUBCASE("certain decisions give zero loss") {
        PolicyParams q = zero_params(EnvKind::MiniHouse);
        q.act.at(trace[0].row, 0) = 60.0;
        q.cont.at(kReflRow, 0) = 60.0;
        q.tmpl.at(trace[2].row, 0) = 60.0;
        q.act.at(trace[3].row, refl_idx) = 120.0;
        LossGrad lg = nll_loss(q, {&pair}, kb);
        CHECK(lg.loss < 1e-6);
    }

    SUBCASE("four decisions, each with probability 1/e, give exactly 1.0") {
        PolicyParams q = zero_params(EnvKind::MiniHouse);
        double e = std::exp(1.0);
        q.cont.at(kStopRow, 0) = std::log(e - 1.0);
        for (int r = 0; r < q.tmpl.rows; ++r)
            if (r != trace[2].row) q.tmpl.at(r, 0) = std::log((e - 1.0) / 7.0);
        size_t k1 = trace[0].support.size();
        for (int r : trace[0].support)
            if (r != trace[0].row)
                q.act.at(r, 0) = std::log((e - 1.0) / static_cast<double>(k1 - 1));
        size_t k2 = trace[3].support.size();
        double want = std::log((e - 1.0) / static_cast<double>(k2 - 1));
        for (int r : trace[3].support) {
            double base = q.act.at(r, 0);
            double target = r == trace[3].row ? 0.0 : want;
            q.act.at(r, refl_idx) = target - base;
        }
        LossGrad lg = nll_loss(q, {&pair}, kb);
        CHECK(lg.loss == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("nll equals -logprob / len") {
        PolicyParams q = random_params(EnvKind::MiniHouse, 55);
        LossGrad lg = nll_loss(q, {&pair}, kb);
        double lp = logprob(q, pair.history, pair.chosen);
        CHECK(lg.loss == doctest::Approx(-lp / 4.0).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    KnowledgeBase kb = make_kb(5);
    auto d_self = make_dataset(1, 11, kb, 0.4);
    auto ref_policy = make_scripted(ScriptedKind::AlwaysWrong, {}, 12);
    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    auto d_pair = mine_negatives(d_self, *ref_policy, provider);
    REQUIRE(d_pair.size() >= 4);

    Rng rng(2024);
    for (int cfg = 0; cfg < 6; ++cfg) {
        PolicyParams p = random_params(EnvKind::MiniHouse, rng.next_u64(), 0.8);
        PolicyParams ref = random_params(EnvKind::MiniHouse, rng.next_u64(), 0.8);
        double beta = 0.1 + rng.uniform();
        double alpha = rng.uniform();

        std::vector<const SelfAwareSample*> sbatch;
        for (int i = 0; i < 3; ++i) sbatch.push_back(&d_self[rng.below(d_self.size())]);
        std::vector<const PairSample*> pbatch;
        for (int i = 0; i < 3; ++i) pbatch.push_back(&d_pair[rng.below(d_pair.size())]);

        LossGrad sft = sft_loss(p, sbatch, kb);
        CHECK(fd_max_rel_err(p, sft.grad, [&](const PolicyParams& q) {
                  return sft_loss(q, sbatch, kb).loss;
              }) < 1e-4);

        LossGrad dpo = dpo_loss(p, ref, pbatch, kb, beta);
        CHECK(fd_max_rel_err(p, dpo.grad, [&](const PolicyParams& q) {
                  return dpo_loss(q, ref, pbatch, kb, beta).loss;
              }) < 1e-4);

        LossGrad nll = nll_loss(p, pbatch, kb);
        CHECK(fd_max_rel_err(p, nll.grad, [&](const PolicyParams& q) {
                  return nll_loss(q, pbatch, kb).loss;
              }) < 1e-4);

        GradAccum rpo = dpo.grad;
        rpo.axpy(alpha, nll.grad);
        CHECK(fd_max_rel_err(p, rpo, [&](const PolicyParams& q) {
                  return dpo_loss(q, ref, pbatch, kb, beta).loss +
                         alpha * nll_loss(q, pbatch, kb).loss;
              }) < 1e-4);
    }
}

TEST_CASE("stage 1 training is monotone, deterministic, and closes the loop") {
    KnowledgeBase kb = make_kb(6);
    auto gold_probe = make_scripted(ScriptedKind::AlwaysGold);
    auto d_self = build_self_dataset(house_tasks(1, 900), *gold_probe, kb, {});
    REQUIRE(d_self.size() >= 50);
    d_self.resize(50);

    TrainConfig cfg;
    cfg.seed = 7;
    std::map<int, std::pair<double, int>> epoch_loss;
    auto sink = [&](const TrainStepMetrics& m) {
        epoch_loss[m.epoch].first += m.sft;
        epoch_loss[m.epoch].second += 1;
    };
    PolicyParams p = train_stage1(cfg, d_self, kb, EnvKind::MiniHouse, sink);

    REQUIRE(epoch_loss.size() == 3);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& [epoch, acc] : epoch_loss) {
        double avg = acc.first / acc.second;
        CHECK(avg <= prev + 1e-6);
        prev = avg;
    }

    PolicyParams p2 = train_stage1(cfg, d_self, kb, EnvKind::MiniHouse);
    CHECK(params_max_abs_diff(p, p2) == 0.0);

    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    int fast = 0;
    for (const auto& s : d_self) {
        StructuredOutput y = decode(p, s.history, DecodeMode::Free, provider);
        if (y.situation == Situation::Fast) ++fast;
    }
    CHECK(fast == static_cast<int>(d_self.size()));
}

TEST_CASE("stage 2 honors the reference and improves the margin") {
    KnowledgeBase kb = make_kb(7);
    auto d_self = make_dataset(2, 13, kb, 0.5);
    TrainConfig cfg;
    cfg.seed = 11;
    PolicyParams ref = train_stage1(cfg, d_self, kb, EnvKind::MiniHouse);
    LinearPolicy ref_policy(ref);
    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    auto d_pair = mine_negatives(d_self, ref_policy, provider);

    SUBCASE("empty pair set returns the reference unchanged") {
        PolicyParams out = train_stage2(cfg, ref, {}, kb);
        CHECK(params_max_abs_diff(out, ref) == 0.0);
    }

    if (d_pair.empty()) return;  // reference already perfect on this seed

    PolicyParams ref_copy = ref;
    std::vector<TrainStepMetrics> metrics;
    PolicyParams tuned = train_stage2(cfg, ref, d_pair, kb,
                                      [&](const TrainStepMetrics& m) { metrics.push_back(m); });

    CHECK(params_max_abs_diff(ref, ref_copy) == 0.0);
    for (const auto& m : metrics) CHECK(std::fabs(m.rpo - (m.dpo + cfg.alpha * m.nll)) < 1e-12);

    // Initial RPO equals ln 2 + alpha * stage-1 NLL of the chosen outputs.
    std::vector<const PairSample*> all;
    for (const auto& pr : d_pair) all.push_back(&pr);
    double init_rpo = dpo_loss(ref, ref, all, kb, cfg.beta).loss +
                      cfg.alpha * nll_loss(ref, all, kb).loss;
    CHECK(std::fabs((std::log(2.0) + cfg.alpha * nll_loss(ref, all, kb).loss) - init_rpo) <
          1e-9);

    auto mean_margin = [&](const PolicyParams& q) {
        double m = 0.0;
        for (const auto& pr : d_pair) {
            const KnowledgeEntry* iw = resolve_entry(kb, pr.chosen);
            const KnowledgeEntry* il = resolve_entry(kb, pr.rejected);
            m += cfg.beta * ((logprob(q, pr.history, pr.chosen, iw) -
                              logprob(ref, pr.history, pr.chosen, iw)) -
                             (logprob(q, pr.history, pr.rejected, il) -
                              logprob(ref, pr.history, pr.rejected, il)));
        }
        return m / static_cast<double>(d_pair.size());
    };
    CHECK(mean_margin(tuned) > mean_margin(ref));

    PolicyParams tuned2 = train_stage2(cfg, ref, d_pair, kb);
    CHECK(params_max_abs_diff(tuned, tuned2) == 0.0);
}

TEST_CASE("shape mismatches and empty batches are rejected") {
    KnowledgeBase kb;
    PolicyParams house = zero_params(EnvKind::MiniHouse);
    PolicyParams shop = zero_params(EnvKind::MiniShop);
    PairSample pair;
    std::vector<const PairSample*> batch = {&pair};
    CHECK_THROWS_AS(dpo_loss(house, shop, batch, kb, 0.5), ContractError);
    CHECK_THROWS_AS(sft_loss(house, {}, kb), ContractError);
    CHECK_THROWS_AS(nll_loss(house, {}, kb), ContractError);
}
