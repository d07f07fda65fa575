#include "knowself/knowledge.hpp"

#include <algorithm>

#include "env_detail.hpp"

namespace knowself {

using namespace detail;

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Seeking: return "seeking";
        case Phase::Holding: return "holding";
        case Phase::AtTarget: return "at-target";
        case Phase::PostProcess: return "post-process";
    }
    return "?";
}

std::string to_string(HoldingClass h) {
    switch (h) {
        case HoldingClass::None: return "none";
        case HoldingClass::Goal: return "goal";
        case HoldingClass::Other: return "other";
    }
    return "?";
}

std::string to_string(RuleKind k) { return k == RuleKind::Error ? "Error" : "SuccessProcess"; }

Phase phase_from_string(std::string_view s) {
    if (s == "seeking") return Phase::Seeking;
    if (s == "holding") return Phase::Holding;
    if (s == "at-target") return Phase::AtTarget;
    if (s == "post-process") return Phase::PostProcess;
    throw ArtifactError("bad phase: " + std::string(s));
}

HoldingClass holding_class_from_string(std::string_view s) {
    if (s == "none") return HoldingClass::None;
    if (s == "goal") return HoldingClass::Goal;
    if (s == "other") return HoldingClass::Other;
    throw ArtifactError("bad holding class: " + std::string(s));
}

RuleKind rule_kind_from_string(std::string_view s) {
    if (s == "Error") return RuleKind::Error;
    if (s == "SuccessProcess") return RuleKind::SuccessProcess;
    throw ArtifactError("bad rule kind: " + std::string(s));
}

Phase phase_of(const Session& s) {
    const Task& task = s.task();
    if (task.env_kind == EnvKind::MiniShop) {
        const auto& st = std::get<ShopState>(s.state());
        switch (st.page) {
            case ShopPage::Start: return Phase::Seeking;
            case ShopPage::Results: return Phase::Holding;
            case ShopPage::Item:
                return unmet_attrs(task.goal, st).empty() ? Phase::PostProcess : Phase::AtTarget;
        }
    }
    const auto& st = std::get<HouseState>(s.state());
    if (!st.holding) return Phase::Seeking;
    const HouseObject* held = find_object(st, *st.holding);
    bool prepared = true;
    switch (task.task_type) {
        case TaskType::Clean:
        case TaskType::Heat:
        case TaskType::Cool: prepared = held && object_processed(task, *held); break;
        case TaskType::Examine: prepared = held && held->examined; break;
        default: break;
    }
    if (!prepared) return Phase::Holding;
    if (st.agent_location == task.goal.target_recep) return Phase::AtTarget;
    return Phase::PostProcess;
}

HoldingClass holding_class_of(const Session& s) {
    if (s.task().env_kind == EnvKind::MiniShop) return HoldingClass::None;
    const auto& st = std::get<HouseState>(s.state());
    if (!st.holding) return HoldingClass::None;
    const HouseObject* held = find_object(st, *st.holding);
    return held && held->type == s.task().goal.object_type ? HoldingClass::Goal
                                                           : HoldingClass::Other;
}

ConditionKey abstract_state(const Session& s) {
    return {s.task().task_type, phase_of(s), holding_class_of(s)};
}

int entry_number(const std::string& id) {
    if (!starts_with(id, "rule_")) return -1;
    try {
        return std::stoi(id.substr(5));
    } catch (...) {
        return -1;
    }
}

// ----------------------------------------------------------------- mining

namespace {

struct PairCandidate {
    StepPair pair;
    Phase phase;
    DecisionId win_class;
    size_t order = 0;  // collection order, restored after selection
};

}  // namespace

std::vector<StepPair> mine_pairs(const std::vector<Task>& tasks, const ProposeFn& prior,
                                 int per_type) {
    // Collect mismatches along whole gold trajectories, then keep per_type
    // pairs per task type, preferring one per (phase, win class) so the
    // later trajectory phases are represented before the budget fills with
    // early search errors.
    std::map<TaskType, std::vector<PairCandidate>> candidates;
    size_t order = 0;
    for (const auto& task : tasks) {
        if (static_cast<int>(candidates[task.task_type].size()) >= 4 * per_type) continue;
        auto task_ptr = std::make_shared<Task>(task);
        Session session(task_ptr);
        History history(task_ptr);
        int step_idx = 0;
        while (!session.done()) {
            Action gold = gold_action(session);
            Action predicted = prior(history);
            if (predicted != gold) {
                PairCandidate c{{history, gold, predicted, task.id, step_idx},
                                phase_of(session),
                                decision_class(session, gold).value_or(0), order++};
                candidates[task.task_type].push_back(std::move(c));
            }
            Observation obs = session.apply(gold);
            history.append(gold, obs);
            ++step_idx;
        }
    }

    // Decision phases ordered by how much the downstream rules matter: the
    // holding/placing legs are where search-stage behavior cloning is weak,
    // while seeking states rarely need a rule. Emitting rounds interleaved
    // across task types keeps consolidation's cap truncation even-handed.
    auto phase_rank = [](Phase p) {
        switch (p) {
            case Phase::Holding: return 0;
            case Phase::PostProcess: return 1;
            case Phase::AtTarget: return 2;
            case Phase::Seeking: return 3;
        }
        return 4;
    };

    std::map<TaskType, std::vector<const PairCandidate*>> picked;
    size_t max_rounds = 0;
    for (auto& [type, pool] : candidates) {
        std::stable_sort(pool.begin(), pool.end(),
                         [&](const PairCandidate& a, const PairCandidate& b) {
                             return phase_rank(a.phase) < phase_rank(b.phase);
                         });
        std::vector<bool> taken(pool.size(), false);
        std::vector<std::pair<Phase, DecisionId>> signatures;
        auto& out = picked[type];
        for (size_t i = 0; i < pool.size() && static_cast<int>(out.size()) < per_type; ++i) {
            std::pair<Phase, DecisionId> sig{pool[i].phase, pool[i].win_class};
            if (std::find(signatures.begin(), signatures.end(), sig) != signatures.end())
                continue;
            signatures.push_back(sig);
            taken[i] = true;
            out.push_back(&pool[i]);
        }
        for (size_t i = 0; i < pool.size() && static_cast<int>(out.size()) < per_type; ++i) {
            if (taken[i]) continue;
            out.push_back(&pool[i]);
        }
        max_rounds = std::max(max_rounds, out.size());
    }

    std::vector<StepPair> pairs;
    EnvKind kind = tasks.empty() ? EnvKind::MiniHouse : tasks[0].env_kind;
    for (size_t round = 0; round < max_rounds; ++round)
        for (TaskType type : task_types(kind))
            if (auto it = picked.find(type); it != picked.end() && round < it->second.size())
                pairs.push_back(it->second[round]->pair);
    return pairs;
}

// ------------------------------------------------------------------- rules

namespace {

std::string phase_phrase(EnvKind kind, Phase p) {
    if (kind == EnvKind::MiniShop) {
        switch (p) {
            case Phase::Seeking: return "is on the search page";
            case Phase::Holding: return "is browsing the results";
            case Phase::AtTarget: return "is viewing a product with options left";
            case Phase::PostProcess: return "has selected the required options";
        }
    }
    switch (p) {
        case Phase::Seeking: return "is looking for an object";
        case Phase::Holding: return "has taken an object";
        case Phase::AtTarget: return "has reached the target receptacle";
        case Phase::PostProcess: return "has prepared the object";
    }
    return "";
}

std::string task_word(TaskType t) {
    switch (t) {
        case TaskType::Put: return "put";
        case TaskType::Clean: return "clean";
        case TaskType::Heat: return "heat";
        case TaskType::Cool: return "cool";
        case TaskType::Examine: return "examine";
        case TaskType::PutTwo: return "put two";
        case TaskType::Purchase: return "purchase";
    }
    return "";
}

std::string error_rule_text(EnvKind kind, const ConditionKey& key, DecisionId win_class,
                            DecisionId loss_class) {
    bool ordering_error = false;
    if (kind == EnvKind::MiniHouse) {
        auto w = static_cast<HouseMove>(win_class);
        auto l = static_cast<HouseMove>(loss_class);
        bool win_process = w == HouseMove::CleanHeld || w == HouseMove::HeatHeld ||
                           w == HouseMove::CoolHeld || w == HouseMove::UseLamp ||
                           w == HouseMove::GoAppliance;
        bool loss_commit = l == HouseMove::PutHere || l == HouseMove::GoTarget;
        ordering_error = win_process && loss_commit;
    } else {
        ordering_error = static_cast<ShopMove>(win_class) == ShopMove::ClickOption &&
                         static_cast<ShopMove>(loss_class) == ShopMove::Buy;
    }
    std::string relation = ordering_error ? " before " : " instead of ";
    return "When the agent " + phase_phrase(kind, key.phase) + " for a " +
           task_word(key.task_type) + " task, the agent should " +
           move_advice_phrase(kind, win_class) + relation + move_gerund(kind, loss_class);
}

std::vector<std::string> success_steps(TaskType t) {
    switch (t) {
        case TaskType::Put:
            return {"locate the object", "take the object", "go to the target receptacle",
                    "put the object"};
        case TaskType::Clean:
            return {"locate the object", "take the object", "go to the sinkbasin",
                    "clean the object", "go to the target receptacle", "put the object"};
        case TaskType::Heat:
            return {"locate the object", "take the object", "go to the microwave",
                    "heat the object", "go to the target receptacle", "put the object"};
        case TaskType::Cool:
            return {"locate the object", "take the object", "go to the fridge",
                    "cool the object", "go to the target receptacle", "put the object"};
        case TaskType::Examine:
            return {"locate the object", "take the object", "go to the desklamp",
                    "use the desklamp"};
        case TaskType::PutTwo:
            return {"locate the first object", "take it", "go to the target receptacle",
                    "put it", "locate the second object", "take it",
                    "go to the target receptacle", "put it"};
        case TaskType::Purchase:
            return {"search with the full requirements", "click the best matching item",
                    "click the required options", "click buy now"};
    }
    return {};
}

std::string success_goal_phrase(TaskType t) {
    switch (t) {
        case TaskType::Put: return "putting an object in or on a receptacle";
        case TaskType::Clean: return "putting a clean object in or on a receptacle";
        case TaskType::Heat: return "putting a hot object in or on a receptacle";
        case TaskType::Cool: return "putting a cool object in or on a receptacle";
        case TaskType::Examine: return "examining an object with the desklamp";
        case TaskType::PutTwo: return "putting two objects in or on a receptacle";
        case TaskType::Purchase: return "purchasing a product";
    }
    return "";
}

std::string success_rule_text(TaskType t) {
    std::string text = "When the task requires " + success_goal_phrase(t) +
                       ", the agent should: ";
    auto steps = success_steps(t);
    for (size_t i = 0; i < steps.size(); ++i) {
        if (i) text += "; ";
        text += std::to_string(i + 1) + ". " + steps[i];
    }
    return text;
}

}  // namespace

std::vector<KnowledgeEntry> generate_rules(const std::vector<StepPair>& pairs) {
    if (pairs.empty()) throw ContractError("generate_rules: pairs must be non-empty");
    std::vector<KnowledgeEntry> entries;
    int next_id = 0;
    for (const auto& pair : pairs) {
        Session session = replay(pair.history);
        EnvKind kind = session.task().env_kind;
        ConditionKey key = abstract_state(session);
        auto win_class = decision_class(session, pair.win);
        auto loss_class = decision_class(session, pair.loss);
        if (!win_class) throw ContractError("generate_rules: unclassifiable win action");

        KnowledgeEntry e;
        e.id = "rule_" + std::to_string(next_id++);
        e.kind = RuleKind::Error;
        e.condition_key = key;
        e.advice_class = *win_class;
        e.rule_text = error_rule_text(kind, key, *win_class,
                                      loss_class.value_or(*win_class));
        e.example = "chose '" + action_text(pair.loss) + "' where '" + action_text(pair.win) +
                    "' was correct";
        e.task_id = pair.task_id;
        entries.push_back(e);

        session.apply(pair.win);
        if (session.done()) {
            KnowledgeEntry sp;
            sp.id = "rule_" + std::to_string(next_id++);
            sp.kind = RuleKind::SuccessProcess;
            sp.condition_key = {session.task().task_type, Phase::Seeking, HoldingClass::None};
            sp.advice_class = 0;  // the schema starts with the search move
            sp.rule_text = success_rule_text(session.task().task_type);
            sp.example = "completed " + pair.task_id + " with '" + action_text(pair.win) + "'";
            sp.task_id = pair.task_id;
            entries.push_back(sp);
        }
    }
    return entries;
}

KnowledgeBase consolidate(const KnowledgeBase& base) {
    KnowledgeBase out;
    out.cap = base.cap;

    // Dedupe: Error entries merge when the condition key and the advice
    // coincide (same key with different advice stays split so the selector
    // can contrast them); SuccessProcess entries only collapse as exact
    // duplicates, never by merging.
    for (const auto& e : base.entries) {
        KnowledgeEntry* existing = nullptr;
        for (auto& kept : out.entries) {
            if (kept.kind != e.kind) continue;
            if (!(kept.condition_key == e.condition_key)) continue;
            if (e.kind == RuleKind::Error && kept.advice_class != e.advice_class) continue;
            if (e.kind == RuleKind::SuccessProcess && kept.rule_text != e.rule_text) continue;
            existing = &kept;
            break;
        }
        if (!existing) {
            out.entries.push_back(e);
            continue;
        }
        if (!e.example.empty() && existing->example.find(e.example) == std::string::npos)
            existing->example += " | " + e.example;
    }

    // Cap: drop the most recent Error entries first; SuccessProcess entries
    // go only when no Error remains to drop.
    auto too_big = [&]() { return static_cast<int>(out.entries.size()) > out.cap; };
    while (too_big()) {
        auto it = std::find_if(out.entries.rbegin(), out.entries.rend(),
                               [](const KnowledgeEntry& e) { return e.kind == RuleKind::Error; });
        if (it == out.entries.rend()) break;
        out.entries.erase(std::next(it).base());
    }
    while (too_big()) out.entries.pop_back();
    return out;
}

// --------------------------------------------------------------- selection

bool rule_warns_against(const KnowledgeEntry& e, EnvKind kind, DecisionId loss_class) {
    if (loss_class < 0 || loss_class >= move_count(kind)) return false;
    return e.rule_text.find(move_gerund(kind, loss_class)) != std::string::npos;
}

namespace {

const KnowledgeEntry& select_impl(const std::vector<const KnowledgeEntry*>& entries,
                                  const Session& session, const Action* win,
                                  const Action* loss) {
    if (entries.empty()) throw ContractError("select: knowledge base is empty");
    ConditionKey key = abstract_state(session);
    EnvKind kind = session.task().env_kind;

    std::optional<DecisionId> win_class, loss_class;
    if (win) win_class = decision_class(session, *win);
    if (loss) loss_class = decision_class(session, *loss);

    const KnowledgeEntry* best = nullptr;
    int best_score = -1;
    for (const KnowledgeEntry* e : entries) {
        int score = 0;
        if (e->condition_key.task_type == key.task_type) score += 2;
        if (e->condition_key.phase == key.phase) score += 1;
        if (e->condition_key.holding == key.holding) score += 1;
        if (win_class && e->advice_class == *win_class) score += 2;
        if (loss_class && rule_warns_against(*e, kind, *loss_class)) score += 1;
        bool better = score > best_score ||
                      (score == best_score && best &&
                       entry_number(e->id) < entry_number(best->id));
        if (better) {
            best = e;
            best_score = score;
        }
    }
    return *best;
}

std::vector<const KnowledgeEntry*> all_entries(const KnowledgeBase& kb) {
    std::vector<const KnowledgeEntry*> out;
    out.reserve(kb.entries.size());
    for (const auto& e : kb.entries) out.push_back(&e);
    return out;
}

}  // namespace

const KnowledgeEntry& select_for_inference(const KnowledgeBase& kb, const History& h) {
    Session session = replay(h);
    return select_impl(all_entries(kb), session, nullptr, nullptr);
}

const KnowledgeEntry& select_for_training(const KnowledgeBase& kb, const History& h,
                                          const Action& win, const Action& loss) {
    Session session = replay(h);
    return select_impl(all_entries(kb), session, &win, &loss);
}

const KnowledgeEntry& select_state_aligned(const KnowledgeBase& kb, const History& h) {
    if (kb.entries.empty()) throw ContractError("select: knowledge base is empty");
    Session session = replay(h);
    // Keep rules whose advice is executable right now; the paper's inference
    // selector likewise summarizes the current state before choosing. When
    // nothing survives the filter, fall back to the whole base.
    std::vector<const KnowledgeEntry*> aligned;
    for (const auto& e : kb.entries)
        if (e.kind == RuleKind::SuccessProcess || ground(session, e.advice_class).has_value())
            aligned.push_back(&e);
    if (aligned.empty()) aligned = all_entries(kb);
    return select_impl(aligned, session, nullptr, nullptr);
}

}  // namespace knowself
