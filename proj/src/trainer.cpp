#include "knowself/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace knowself {

GradAccum GradAccum::zeros_like(const PolicyParams& p) {
    GradAccum g;
    g.act = Matrix(p.act.rows, p.act.cols);
    g.cont = Matrix(p.cont.rows, p.cont.cols);
    g.tmpl = Matrix(p.tmpl.rows, p.tmpl.cols);
    g.know = Matrix(p.know.rows, p.know.cols);
    return g;
}

void GradAccum::axpy(double a, const GradAccum& other) {
    for (size_t i = 0; i < act.data.size(); ++i) act.data[i] += a * other.act.data[i];
    for (size_t i = 0; i < cont.data.size(); ++i) cont.data[i] += a * other.cont.data[i];
    for (size_t i = 0; i < tmpl.data.size(); ++i) tmpl.data[i] += a * other.tmpl.data[i];
    for (size_t i = 0; i < know.data.size(); ++i) know.data[i] += a * other.know.data[i];
}

double GradAccum::norm() const {
    double s = 0.0;
    for (const auto* m : {&act, &cont, &tmpl, &know})
        for (double v : m->data) s += v * v;
    return std::sqrt(s);
}

bool GradAccum::finite() const {
    for (const auto* m : {&act, &cont, &tmpl, &know})
        for (double v : m->data)
            if (!std::isfinite(v)) return false;
    return true;
}

const KnowledgeEntry* resolve_entry(const KnowledgeBase& kb, const StructuredOutput& y) {
    if (!y.knowledge) return nullptr;
    for (const auto& e : kb.entries)
        if (!y.knowledge->entry_id.empty() && e.id == y.knowledge->entry_id) return &e;
    for (const auto& e : kb.entries)
        if (e.rule_text == y.knowledge->know_text) return &e;
    throw ContractError("knowledge entry '" + y.knowledge->entry_id +
                        "' is not in the knowledge base");
}

namespace {

Matrix& slot_of(GradAccum& g, Slot s) {
    switch (s) {
        case Slot::Act: return g.act;
        case Slot::Cont: return g.cont;
        case Slot::Tmpl: return g.tmpl;
        case Slot::Know: return g.know;
    }
    throw ContractError("bad slot");
}

const Matrix& slot_of(const PolicyParams& p, Slot s) {
    switch (s) {
        case Slot::Act: return p.act;
        case Slot::Cont: return p.cont;
        case Slot::Tmpl: return p.tmpl;
        case Slot::Know: return p.know;
    }
    throw ContractError("bad slot");
}

// Adds weight * d(-log pi(y|h))/dW to the accumulator and returns log pi.
double accumulate(const PolicyParams& p, const std::vector<DecisionTrace>& trace,
                  double weight, GradAccum& g) {
    double lp = 0.0;
    for (const auto& d : trace) {
        const Matrix& w = slot_of(p, d.slot);
        Matrix& gm = slot_of(g, d.slot);

        double max_logit = -std::numeric_limits<double>::infinity();
        std::vector<double> logits(d.support.size());
        for (size_t i = 0; i < d.support.size(); ++i) {
            double v = 0.0;
            for (int f : d.phi) v += w.at(d.support[i], f);
            logits[i] = v;
            max_logit = std::max(max_logit, v);
        }
        double z = 0.0;
        for (double v : logits) z += std::exp(v - max_logit);

        double chosen_logit = 0.0;
        bool found = false;
        for (size_t i = 0; i < d.support.size(); ++i) {
            double prob = std::exp(logits[i] - max_logit) / z;
            double delta = prob - (d.support[i] == d.row ? 1.0 : 0.0);
            for (int f : d.phi) gm.at(d.support[i], f) += weight * delta;
            if (d.support[i] == d.row) {
                chosen_logit = logits[i];
                found = true;
            }
        }
        if (!found) throw ContractError("chosen row outside support");
        lp += chosen_logit - max_logit - std::log(z);
    }
    return lp;
}

double scored_logprob(const PolicyParams& p, const History& h, const StructuredOutput& y,
                      const KnowledgeBase& kb, DecodeMode mode) {
    Session s = replay(h);
    const KnowledgeEntry* injected = resolve_entry(kb, y);
    return logprob_traced(p, trace_output(p.grammar, s, y, injected, mode));
}

void check_shapes(const PolicyParams& a, const PolicyParams& b) {
    if (a.act.rows != b.act.rows || a.act.cols != b.act.cols || a.cont.rows != b.cont.rows ||
        a.tmpl.rows != b.tmpl.rows || a.tmpl.cols != b.tmpl.cols)
        throw ContractError("params and ref_params have mismatched shapes");
}

}  // namespace

LossGrad sft_loss(const PolicyParams& p, const std::vector<const SelfAwareSample*>& batch,
                  const KnowledgeBase& kb, DecodeMode mode) {
    if (batch.empty()) throw ContractError("sft_loss: empty batch");
    LossGrad out;
    out.grad = GradAccum::zeros_like(p);
    double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto* sample : batch) {
        Session s = replay(sample->history);
        const KnowledgeEntry* injected = resolve_entry(kb, sample->output);
        auto trace = trace_output(p.grammar, s, sample->output, injected, mode);
        double lp = accumulate(p, trace, inv, out.grad);
        out.loss -= inv * lp;
    }
    if (!std::isfinite(out.loss) || !out.grad.finite()) {
        for (const auto* sample : batch) {
            double lp = scored_logprob(p, sample->history, sample->output, kb, mode);
            if (!std::isfinite(lp))
                throw ContractError("non-finite loss at sample " + sample->task_id + "/" +
                                    std::to_string(sample->step));
        }
        throw ContractError("non-finite gradient in sft_loss");
    }
    return out;
}

LossGrad dpo_loss(const PolicyParams& p, const PolicyParams& ref,
                  const std::vector<const PairSample*>& batch, const KnowledgeBase& kb,
                  double beta) {
    if (batch.empty()) throw ContractError("dpo_loss: empty batch");
    check_shapes(p, ref);
    LossGrad out;
    out.grad = GradAccum::zeros_like(p);
    double inv = 1.0 / static_cast<double>(batch.size());

    for (const auto* pair : batch) {
        Session s = replay(pair->history);
        const KnowledgeEntry* inj_w = resolve_entry(kb, pair->chosen);
        const KnowledgeEntry* inj_l = resolve_entry(kb, pair->rejected);
        auto trace_w = trace_output(p.grammar, s, pair->chosen, inj_w, DecodeMode::Free);
        auto trace_l = trace_output(p.grammar, s, pair->rejected, inj_l, DecodeMode::Free);

        GradAccum g_w = GradAccum::zeros_like(p);  // d(-log pi(y^w))/dW
        GradAccum g_l = GradAccum::zeros_like(p);
        double lp_w = accumulate(p, trace_w, 1.0, g_w);
        double lp_l = accumulate(p, trace_l, 1.0, g_l);
        double ref_w = logprob_traced(ref, trace_w);
        double ref_l = logprob_traced(ref, trace_l);

        double margin = beta * ((lp_w - ref_w) - (lp_l - ref_l));
        // -log sigmoid(m), computed as softplus(-m) for stability.
        double loss = margin > 0 ? std::log1p(std::exp(-margin))
                                 : -margin + std::log1p(std::exp(margin));
        out.loss += inv * loss;

        // d loss / d m = -sigmoid(-m); d m / dW = beta * (-g_w + g_l).
        double sig_neg = 1.0 / (1.0 + std::exp(margin));
        out.grad.axpy(inv * sig_neg * beta, g_w);
        out.grad.axpy(-inv * sig_neg * beta, g_l);
    }
    if (!std::isfinite(out.loss) || !out.grad.finite())
        throw ContractError("non-finite gradient in dpo_loss");
    return out;
}

LossGrad nll_loss(const PolicyParams& p, const std::vector<const PairSample*>& batch,
                  const KnowledgeBase& kb) {
    if (batch.empty()) throw ContractError("nll_loss: empty batch");
    LossGrad out;
    out.grad = GradAccum::zeros_like(p);
    double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto* pair : batch) {
        Session s = replay(pair->history);
        const KnowledgeEntry* injected = resolve_entry(kb, pair->chosen);
        auto trace = trace_output(p.grammar, s, pair->chosen, injected, DecodeMode::Free);
        double len = static_cast<double>(decision_count(pair->chosen));
        double lp = accumulate(p, trace, inv / len, out.grad);
        out.loss -= inv * lp / len;
    }
    if (!std::isfinite(out.loss) || !out.grad.finite())
        throw ContractError("non-finite gradient in nll_loss");
    return out;
}

void apply_update(PolicyParams& p, const GradAccum& grad, double lr) {
    for (size_t i = 0; i < p.act.data.size(); ++i) p.act.data[i] -= lr * grad.act.data[i];
    for (size_t i = 0; i < p.cont.data.size(); ++i) p.cont.data[i] -= lr * grad.cont.data[i];
    for (size_t i = 0; i < p.tmpl.data.size(); ++i) p.tmpl.data[i] -= lr * grad.tmpl.data[i];
    for (size_t i = 0; i < p.know.data.size(); ++i) p.know.data[i] -= lr * grad.know.data[i];
}

PolicyParams train_stage1(const TrainConfig& cfg, const std::vector<SelfAwareSample>& d_self,
                          const KnowledgeBase& kb, EnvKind kind, const MetricsSink& sink) {
    if (d_self.empty()) throw ContractError("train_stage1: empty dataset");
    if (cfg.stage1.epochs < 1) throw ContractError("train_stage1: epochs must be >= 1");
    PolicyParams p = zero_params(kind);
    Rng rng(mix64(cfg.seed, 0x57a9e1ull));

    std::vector<size_t> order(d_self.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step = 0;
    for (int epoch = 0; epoch < cfg.stage1.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += cfg.stage1.batch) {
            std::vector<const SelfAwareSample*> batch;
            for (size_t i = start; i < order.size() && i < start + cfg.stage1.batch; ++i)
                batch.push_back(&d_self[order[i]]);
            LossGrad lg = sft_loss(p, batch, kb);
            apply_update(p, lg.grad, cfg.stage1.lr);
            if (sink) {
                TrainStepMetrics m;
                m.stage = 1;
                m.epoch = epoch;
                m.step = step;
                m.sft = lg.loss;
                m.grad_norm = lg.grad.norm();
                sink(m);
            }
            ++step;
        }
    }
    p.version = "knowself-policy-v1";
    return p;
}

PolicyParams train_stage2(const TrainConfig& cfg, const PolicyParams& ref,
                          const std::vector<PairSample>& d_pair, const KnowledgeBase& kb,
                          const MetricsSink& sink) {
    PolicyParams p = ref;
    if (d_pair.empty()) return p;

    Rng rng(mix64(cfg.seed, 0xd9a0b2ull));
    std::vector<size_t> order(d_pair.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step = 0;
    for (int epoch = 0; epoch < cfg.stage2.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += cfg.stage2.batch) {
            std::vector<const PairSample*> batch;
            for (size_t i = start; i < order.size() && i < start + cfg.stage2.batch; ++i)
                batch.push_back(&d_pair[order[i]]);
            LossGrad dpo = dpo_loss(p, ref, batch, kb, cfg.beta);
            LossGrad nll = nll_loss(p, batch, kb);
            GradAccum grad = dpo.grad;
            grad.axpy(cfg.alpha, nll.grad);
            apply_update(p, grad, cfg.stage2.lr);
            if (sink) {
                TrainStepMetrics m;
                m.stage = 2;
                m.epoch = epoch;
                m.step = step;
                m.dpo = dpo.loss;
                m.nll = nll.loss;
                m.rpo = dpo.loss + cfg.alpha * nll.loss;
                m.grad_norm = grad.norm();
                sink(m);
            }
            ++step;
        }
    }
    return p;
}

}  // namespace knowself
