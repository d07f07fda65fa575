#include "knowself/policy.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace knowself {

std::string to_string(Situation s) {
    switch (s) {
        case Situation::Fast: return "Fast";
        case Situation::Slow: return "Slow";
        case Situation::Knowledgeable: return "Knowledgeable";
    }
    return "?";
}

std::string to_string(DecodeMode m) {
    switch (m) {
        case DecodeMode::Free: return "free";
        case DecodeMode::NoRefl: return "noret";
        case DecodeMode::NoKnow: return "noknow";
        case DecodeMode::FastOnly: return "fastonly";
        case DecodeMode::ForceKnow: return "forceknow";
    }
    return "?";
}

DecodeMode decode_mode_from_string(std::string_view s) {
    std::string l = lower(s);
    if (l == "free") return DecodeMode::Free;
    if (l == "noret" || l == "norefl") return DecodeMode::NoRefl;
    if (l == "noknow") return DecodeMode::NoKnow;
    if (l == "fastonly") return DecodeMode::FastOnly;
    if (l == "forceknow") return DecodeMode::ForceKnow;
    throw ContractError("unknown decode mode: " + std::string(s));
}

// ----------------------------------------------------- reflection templates

namespace {

struct TemplatePattern {
    const char* prefix;
    const char* mid;
    const char* suffix;
};

const TemplatePattern kTemplates[] = {
    {"I tried to ", ", but that seems wrong. I should ", " instead."},
    {"Wait, ", " does not move the task forward. A better step is to ", "."},
    {"On second thought, ", " was a mistake here. Let me ", "."},
    {"That was not right. Instead of ", ", the correct move is to ", "."},
    {"Hmm, ", " leads nowhere in this situation. I will ", " now."},
    {"Let me reconsider. ", " ignores the current goal, so I should ", "."},
    {"My last choice to ", " was premature. The better option is to ", "."},
    {"Rethinking this: ", " does not help, so the right action is to ", "."},
};

}  // namespace

int reflection_template_count() { return static_cast<int>(std::size(kTemplates)); }

std::string instantiate_template(int id, const std::string& wrong_text,
                                 const std::string& revised_text) {
    if (id < 0 || id >= reflection_template_count())
        throw ContractError("bad reflection template id " + std::to_string(id));
    const auto& t = kTemplates[id];
    return std::string(t.prefix) + wrong_text + t.mid + revised_text + t.suffix;
}

std::optional<TemplateMatch> match_template(const std::string& ret_text) {
    for (int id = 0; id < reflection_template_count(); ++id) {
        const auto& t = kTemplates[id];
        std::string prefix(t.prefix), mid(t.mid), suffix(t.suffix);
        if (!starts_with(ret_text, prefix)) continue;
        if (ret_text.size() < prefix.size() + mid.size() + suffix.size()) continue;
        if (ret_text.substr(ret_text.size() - suffix.size()) != suffix) continue;
        size_t mid_pos = ret_text.find(mid, prefix.size());
        if (mid_pos == std::string::npos) continue;
        std::string wrong = ret_text.substr(prefix.size(), mid_pos - prefix.size());
        size_t rev_start = mid_pos + mid.size();
        size_t rev_end = ret_text.size() - suffix.size();
        if (rev_end < rev_start) continue;
        std::string revised = ret_text.substr(rev_start, rev_end - rev_start);
        if (wrong.empty() || revised.empty()) continue;
        return TemplateMatch{id, wrong, revised};
    }
    return std::nullopt;
}

// ------------------------------------------------------------------ outputs

int decision_count(const StructuredOutput& y) {
    return y.situation == Situation::Slow ? 4 : 2;
}

StructuredOutput make_fast(Action a) {
    StructuredOutput y;
    y.situation = Situation::Fast;
    y.first_action = a;
    y.final_action = std::move(a);
    return y;
}

StructuredOutput make_slow(Action wrong, int template_id, std::string ret, Action gold) {
    StructuredOutput y;
    y.situation = Situation::Slow;
    y.first_action = std::move(wrong);
    y.reflection = Reflection{template_id, std::move(ret)};
    y.final_action = std::move(gold);
    return y;
}

StructuredOutput make_knowledgeable(std::string entry_id, std::string know, Action gold) {
    StructuredOutput y;
    y.situation = Situation::Knowledgeable;
    y.knowledge = KnowledgeRef{std::move(entry_id), std::move(know)};
    y.first_action = gold;
    y.final_action = std::move(gold);
    return y;
}

uint64_t Grammar::hash() const {
    std::ostringstream desc;
    desc << to_string(kind) << "|moves=" << moves << "|features=" << feature_dim
         << "|templates=" << templates;
    for (DecisionId id = 0; id < moves; ++id) desc << "|" << move_name(kind, id);
    return fnv1a(desc.str());
}

PolicyParams zero_params(EnvKind kind) {
    PolicyParams p;
    p.grammar = grammar_for(kind);
    p.act = Matrix(p.grammar.act_rows(), p.grammar.feature_dim);
    p.cont = Matrix(2, p.grammar.feature_dim);
    p.tmpl = Matrix(p.grammar.templates, p.grammar.feature_dim);
    p.know = Matrix(p.grammar.moves, p.grammar.feature_dim);
    return p;
}

double params_max_abs_diff(const PolicyParams& a, const PolicyParams& b) {
    double m = 0.0;
    auto scan = [&](const Matrix& x, const Matrix& y) {
        if (x.rows != y.rows || x.cols != y.cols)
            throw ContractError("params shape mismatch");
        for (size_t i = 0; i < x.data.size(); ++i)
            m = std::max(m, std::fabs(x.data[i] - y.data[i]));
    };
    scan(a.act, b.act);
    scan(a.cont, b.cont);
    scan(a.tmpl, b.tmpl);
    scan(a.know, b.know);
    return m;
}

// ------------------------------------------------------------------ scoring

namespace {

bool know_allowed(DecodeMode m) {
    return m == DecodeMode::Free || m == DecodeMode::NoRefl || m == DecodeMode::ForceKnow;
}

bool refl_allowed(DecodeMode m) {
    return m == DecodeMode::Free || m == DecodeMode::NoKnow;
}

std::vector<int> first_slot_support(const Grammar& g, const Session& s, DecodeMode mode) {
    std::vector<int> support;
    if (mode != DecodeMode::ForceKnow)
        support = decision_support(s);
    if (know_allowed(mode)) support.push_back(g.know_row());
    if (support.empty()) throw ContractError("empty first-slot support");
    return support;
}

std::vector<int> action_slot_support(const Session& s, const Action* excluded) {
    std::vector<int> support;
    for (DecisionId id : decision_support(s)) {
        if (excluded) {
            auto a = ground(s, id);
            if (a && *a == *excluded) continue;
        }
        support.push_back(id);
    }
    return support;
}

double dot_row(const Matrix& w, int row, const std::vector<int>& phi) {
    double v = 0.0;
    for (int f : phi) v += w.at(row, f);
    return v;
}

int argmax_row(const Matrix& w, const std::vector<int>& support, const std::vector<int>& phi) {
    int best = support.front();
    double best_v = dot_row(w, best, phi);
    for (size_t i = 1; i < support.size(); ++i) {
        double v = dot_row(w, support[i], phi);
        if (v > best_v) {
            best_v = v;
            best = support[i];
        }
    }
    return best;
}

const Matrix& slot_matrix(const PolicyParams& p, Slot s) {
    switch (s) {
        case Slot::Act: return p.act;
        case Slot::Cont: return p.cont;
        case Slot::Tmpl: return p.tmpl;
        case Slot::Know: return p.know;
    }
    throw ContractError("bad slot");
}

std::vector<int> all_rows(int n) {
    std::vector<int> rows(n);
    for (int i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

}  // namespace

std::vector<DecisionTrace> trace_output(const Grammar& g, const Session& s,
                                        const StructuredOutput& y,
                                        const KnowledgeEntry* injected, DecodeMode mode) {
    std::vector<DecisionTrace> trace;

    if (y.situation == Situation::Knowledgeable) {
        if (!y.knowledge) throw ContractError("Knowledgeable y without knowledge segment");
        if (!injected) throw ContractError("Knowledgeable y requires the teacher-forced entry");
        if (!know_allowed(mode)) throw ContractError("KNOW masked by decode mode");
        SlotContext first_ctx;
        trace.push_back({Slot::Act, g.know_row(), first_slot_support(g, s, mode),
                         features(s, first_ctx)});
        SlotContext final_ctx;
        final_ctx.injected = injected;
        auto support = action_slot_support(s, nullptr);
        auto id = canonical_decision(s, y.final_action);
        if (!id) throw ContractError("final action infeasible: " + action_text(y.final_action));
        trace.push_back({Slot::Know, *id, std::move(support), features(s, final_ctx)});
        return trace;
    }

    if (mode == DecodeMode::ForceKnow) throw ContractError("mode forces KNOW first");
    auto first_id = canonical_decision(s, y.first_action);
    if (!first_id) throw ContractError("first action infeasible: " + action_text(y.first_action));
    SlotContext first_ctx;
    trace.push_back({Slot::Act, *first_id, first_slot_support(g, s, mode),
                     features(s, first_ctx)});

    SlotContext cont_ctx;
    cont_ctx.emitted = *first_id;
    std::vector<int> cont_support = refl_allowed(mode) ? std::vector<int>{kStopRow, kReflRow}
                                                       : std::vector<int>{kStopRow};

    if (y.situation == Situation::Fast) {
        if (y.first_action != y.final_action)
            throw ContractError("Fast y must commit its first action");
        if (y.reflection || y.knowledge) throw ContractError("Fast y carries extra segments");
        trace.push_back({Slot::Cont, kStopRow, std::move(cont_support), features(s, cont_ctx)});
        return trace;
    }

    // Slow
    if (!y.reflection) throw ContractError("Slow y without reflection segment");
    if (y.knowledge) throw ContractError("Slow y carries a knowledge segment");
    if (!refl_allowed(mode)) throw ContractError("REFL masked by decode mode");
    if (y.reflection->template_id < 0 || y.reflection->template_id >= g.templates)
        throw ContractError("Slow y with unknown reflection template");
    if (y.final_action == y.first_action)
        throw ContractError("Slow y must revise the first action");
    trace.push_back({Slot::Cont, kReflRow, std::move(cont_support), features(s, cont_ctx)});

    SlotContext refl_ctx;
    refl_ctx.emitted = *first_id;
    refl_ctx.refl_context = true;
    trace.push_back({Slot::Tmpl, y.reflection->template_id, all_rows(g.templates),
                     features(s, refl_ctx)});

    auto support = action_slot_support(s, &y.first_action);
    auto final_id = canonical_decision(s, y.final_action);
    if (!final_id) throw ContractError("final action infeasible: " + action_text(y.final_action));
    trace.push_back({Slot::Act, *final_id, std::move(support), features(s, refl_ctx)});
    return trace;
}

double logprob_traced(const PolicyParams& p, const std::vector<DecisionTrace>& trace) {
    double total = 0.0;
    for (const auto& d : trace) {
        const Matrix& w = slot_matrix(p, d.slot);
        double chosen = dot_row(w, d.row, d.phi);
        double m = chosen;
        for (int r : d.support) m = std::max(m, dot_row(w, r, d.phi));
        double sum = 0.0;
        bool found = false;
        for (int r : d.support) {
            sum += std::exp(dot_row(w, r, d.phi) - m);
            if (r == d.row) found = true;
        }
        if (!found) throw ContractError("chosen row outside support");
        total += chosen - m - std::log(sum);
    }
    return total;
}

double logprob(const PolicyParams& p, const History& h, const StructuredOutput& y,
               const KnowledgeEntry* injected, DecodeMode mode) {
    Session s = replay(h);
    return logprob_traced(p, trace_output(p.grammar, s, y, injected, mode));
}

// ------------------------------------------------------------------- decode

StructuredOutput decode_at(const PolicyParams& p, const Session& s, const History& h,
                           DecodeMode mode, const KnowledgeProvider& provider) {
    const Grammar& g = p.grammar;
    SlotContext first_ctx;
    std::vector<int> phi0 = features(s, first_ctx);
    auto support0 = first_slot_support(g, s, mode);
    int first = argmax_row(p.act, support0, phi0);

    if (first == g.know_row()) {
        const KnowledgeEntry* entry = provider(h);
        if (!entry) throw ContractError("knowledge provider returned no entry");
        SlotContext final_ctx;
        final_ctx.injected = entry;
        auto support = action_slot_support(s, nullptr);
        int row = argmax_row(p.know, support, features(s, final_ctx));
        auto action = ground(s, row);
        return make_knowledgeable(entry->id, entry->rule_text, *action);
    }

    Action first_action = *ground(s, first);
    SlotContext cont_ctx;
    cont_ctx.emitted = first;
    int cont = kStopRow;
    if (refl_allowed(mode))
        cont = argmax_row(p.cont, {kStopRow, kReflRow}, features(s, cont_ctx));
    if (cont == kStopRow) return make_fast(first_action);

    SlotContext refl_ctx;
    refl_ctx.emitted = first;
    refl_ctx.refl_context = true;
    std::vector<int> phi_r = features(s, refl_ctx);
    int tmpl = argmax_row(p.tmpl, all_rows(g.templates), phi_r);
    auto support = action_slot_support(s, &first_action);
    if (support.empty()) return make_fast(first_action);  // nothing left to revise to
    int revised_row = argmax_row(p.act, support, phi_r);
    Action revised = *ground(s, revised_row);
    std::string ret = instantiate_template(tmpl, action_text(first_action), action_text(revised));
    return make_slow(first_action, tmpl, std::move(ret), std::move(revised));
}

StructuredOutput decode(const PolicyParams& p, const History& h, DecodeMode mode,
                        const KnowledgeProvider& provider) {
    Session s = replay(h);
    return decode_at(p, s, h, mode, provider);
}

RethinkResult rethink(const PolicyParams& p, const History& h, const Action& wrong) {
    Session s = replay(h);
    auto support = action_slot_support(s, &wrong);
    if (support.empty())
        throw ContractError("rethink: no alternative action available");
    SlotContext ctx;
    ctx.refl_context = true;
    ctx.emitted = canonical_decision(s, wrong);
    std::vector<int> phi = features(s, ctx);
    int tmpl = argmax_row(p.tmpl, all_rows(p.grammar.templates), phi);
    int row = argmax_row(p.act, support, phi);
    Action revised = *ground(s, row);
    RethinkResult r;
    r.template_id = tmpl;
    r.revised = revised;
    r.ret_text = instantiate_template(tmpl, action_text(wrong), action_text(revised));
    return r;
}

// ------------------------------------------------------------- LinearPolicy

StructuredOutput LinearPolicy::act(const History& h, DecodeMode mode,
                                   const KnowledgeProvider& provider) const {
    return decode(params_, h, mode, provider);
}

Action LinearPolicy::propose(const History& h) const {
    Session s = replay(h);
    SlotContext ctx;
    auto support = action_slot_support(s, nullptr);
    int row = argmax_row(params_.act, support, features(s, ctx));
    return *ground(s, row);
}

RethinkResult LinearPolicy::rethink(const History& h, const Action& wrong) const {
    return knowself::rethink(params_, h, wrong);
}

}  // namespace knowself
