#include "knowself/policy.hpp"

namespace knowself {

namespace {

class ScriptedPolicy : public Policy {
public:
    ScriptedPolicy(ScriptedKind kind, std::map<TaskType, double> competence, uint64_t seed)
        : kind_(kind), competence_(std::move(competence)), seed_(seed) {
        for (const auto& [type, p] : competence_)
            if (p < 0.0 || p > 1.0)
                throw ContractError("competence for " + to_string(type) + " outside [0,1]");
    }

    std::string name() const override {
        switch (kind_) {
            case ScriptedKind::AlwaysGold: return "always-gold";
            case ScriptedKind::WrongThenGold: return "wrong-then-gold";
            case ScriptedKind::AlwaysWrong: return "always-wrong";
            case ScriptedKind::Competence: return "competence";
        }
        return "scripted";
    }

    Action propose(const History& h) const override {
        Session s = replay(h);
        Action gold = gold_action(s);
        switch (kind_) {
            case ScriptedKind::AlwaysGold: return gold;
            case ScriptedKind::WrongThenGold:
            case ScriptedKind::AlwaysWrong:
                return pick_wrong(s, h, gold, nullptr, 0);
            case ScriptedKind::Competence: {
                Rng rng = rng_for(h, 0);
                if (rng.uniform() < competence_of(s.task().task_type)) return gold;
                return pick_wrong(s, h, gold, nullptr, 0);
            }
        }
        return gold;
    }

    RethinkResult rethink(const History& h, const Action& wrong) const override {
        Session s = replay(h);
        Action gold = gold_action(s);
        Action revised;
        switch (kind_) {
            case ScriptedKind::AlwaysGold:
            case ScriptedKind::WrongThenGold:
                revised = gold;
                break;
            case ScriptedKind::AlwaysWrong:
                revised = pick_wrong(s, h, gold, &wrong, 1);
                break;
            case ScriptedKind::Competence: {
                Rng rng = rng_for(h, 1);
                if (rng.uniform() < competence_of(s.task().task_type)) {
                    revised = gold;
                } else {
                    revised = pick_wrong_or_gold(s, h, gold, wrong);
                }
                break;
            }
        }
        RethinkResult r;
        Rng trng = rng_for(h, 2);
        r.template_id = static_cast<int>(trng.below(reflection_template_count()));
        r.revised = revised;
        r.ret_text = instantiate_template(r.template_id, action_text(wrong), action_text(revised));
        return r;
    }

    StructuredOutput act(const History& h, DecodeMode mode,
                         const KnowledgeProvider& provider) const override {
        if (mode == DecodeMode::FastOnly) return make_fast(propose(h));
        if (mode == DecodeMode::ForceKnow) {
            const KnowledgeEntry* e = provider(h);
            return make_knowledgeable(e->id, e->rule_text, propose(h));
        }
        Session s = replay(h);
        Action gold = gold_action(s);
        switch (kind_) {
            case ScriptedKind::AlwaysGold: return make_fast(gold);
            case ScriptedKind::WrongThenGold: {
                if (mode == DecodeMode::NoRefl) return make_fast(gold);
                Action wrong = propose(h);
                RethinkResult r = rethink(h, wrong);
                return make_slow(wrong, r.template_id, r.ret_text, r.revised);
            }
            case ScriptedKind::AlwaysWrong: {
                Action wrong = propose(h);
                if (mode == DecodeMode::NoKnow) {
                    RethinkResult r = rethink(h, wrong);
                    return make_slow(wrong, r.template_id, r.ret_text, r.revised);
                }
                const KnowledgeEntry* e = provider(h);
                return make_knowledgeable(e->id, e->rule_text, propose(h));
            }
            case ScriptedKind::Competence: return make_fast(propose(h));
        }
        return make_fast(gold);
    }

private:
    double competence_of(TaskType t) const {
        auto it = competence_.find(t);
        return it == competence_.end() ? 0.5 : it->second;
    }

    Rng rng_for(const History& h, int stage) const {
        uint64_t x = mix64(seed_, fnv1a(h.task().id));
        x = mix64(x, h.size() * 8 + static_cast<uint64_t>(stage));
        return Rng(x);
    }

    // A feasible action different from gold (and from `excluded` when given).
    // The environments guarantee at least two such actions at every state.
    Action pick_wrong(const Session& s, const History& h, const Action& gold,
                      const Action* excluded, int stage) const {
        std::vector<Action> wrongs;
        for (DecisionId id : decision_support(s)) {
            Action a = *ground(s, id);
            if (a == gold) continue;
            if (excluded && a == *excluded) continue;
            wrongs.push_back(std::move(a));
        }
        if (wrongs.empty())
            throw ContractError("scripted policy found no wrong action at " + s.task().id);
        Rng rng = rng_for(h, 4 + stage);
        return wrongs[static_cast<size_t>(rng.below(wrongs.size()))];
    }

    Action pick_wrong_or_gold(const Session& s, const History& h, const Action& gold,
                              const Action& excluded) const {
        std::vector<Action> wrongs;
        for (DecisionId id : decision_support(s)) {
            Action a = *ground(s, id);
            if (a == gold || a == excluded) continue;
            wrongs.push_back(std::move(a));
        }
        if (wrongs.empty()) return gold;
        Rng rng = rng_for(h, 6);
        return wrongs[static_cast<size_t>(rng.below(wrongs.size()))];
    }

    ScriptedKind kind_;
    std::map<TaskType, double> competence_;
    uint64_t seed_;
};

}  // namespace

std::shared_ptr<Policy> make_scripted(ScriptedKind kind, std::map<TaskType, double> competence,
                                      uint64_t seed) {
    return std::make_shared<ScriptedPolicy>(kind, std::move(competence), seed);
}

}  // namespace knowself
