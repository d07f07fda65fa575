#pragma once

#include <functional>

#include "knowself/env.hpp"

namespace knowself {

// State abstraction used for rule conditions and selection scoring.
enum class Phase { Seeking, Holding, AtTarget, PostProcess };
enum class HoldingClass { None, Goal, Other };
enum class RuleKind { Error, SuccessProcess };

std::string to_string(Phase p);
std::string to_string(HoldingClass h);
std::string to_string(RuleKind k);
Phase phase_from_string(std::string_view s);
HoldingClass holding_class_from_string(std::string_view s);
RuleKind rule_kind_from_string(std::string_view s);

struct ConditionKey {
    TaskType task_type{TaskType::Put};
    Phase phase{Phase::Seeking};
    HoldingClass holding{HoldingClass::None};

    bool operator==(const ConditionKey& o) const {
        return task_type == o.task_type && phase == o.phase && holding == o.holding;
    }
};

Phase phase_of(const Session& s);
HoldingClass holding_class_of(const Session& s);
ConditionKey abstract_state(const Session& s);

struct KnowledgeEntry {
    std::string id;  // "rule_N"
    std::string rule_text;
    RuleKind kind{RuleKind::Error};
    ConditionKey condition_key;
    DecisionId advice_class = 0;
    std::string example;
    std::string task_id;
};

int entry_number(const std::string& id);

struct KnowledgeBase {
    int cap = 24;
    std::vector<KnowledgeEntry> entries;
};

struct StepPair {
    History history;
    Action win;   // the gold action for the history
    Action loss;  // the prior policy's wrong prediction
    std::string task_id;
    int step = 0;
};

using ProposeFn = std::function<Action(const History&)>;

// Walks gold trajectories with the prior policy's first predictions and
// collects mismatches, at most `per_type` per task type. A prior that never
// errs just yields fewer pairs.
std::vector<StepPair> mine_pairs(const std::vector<Task>& tasks, const ProposeFn& prior,
                                 int per_type);

// One Error entry per pair; when the winning action finishes the episode, an
// additional SuccessProcess entry documenting the gold step schema.
std::vector<KnowledgeEntry> generate_rules(const std::vector<StepPair>& pairs);

// Dedupe, retain SuccessProcess entries, truncate Error entries until the
// cap holds. Idempotent.
KnowledgeBase consolidate(const KnowledgeBase& base);

// Scoring: +2 task-type match, +1 phase match, +1 holding match against the
// history's state abstraction; the training variant adds +2 when the advice
// class equals the win's and +1 when the rule warns against the loss's.
// Ties break toward the lowest rule number. Empty base is a contract error.
const KnowledgeEntry& select_for_inference(const KnowledgeBase& kb, const History& h);
const KnowledgeEntry& select_for_training(const KnowledgeBase& kb, const History& h,
                                          const Action& win, const Action& loss);

// Inference selection used by the episode runtime: restricts candidates to
// rules whose advice is executable in the current state (mirroring the
// selector's state summary), then applies the same scoring.
const KnowledgeEntry& select_state_aligned(const KnowledgeBase& kb, const History& h);

bool rule_warns_against(const KnowledgeEntry& e, EnvKind kind, DecisionId loss_class);

}  // namespace knowself
