#pragma once

#include <set>

#include "knowself/policy.hpp"

namespace knowself {

struct StepOutcome {
    Action committed;
    Situation situation{Situation::Fast};
    std::optional<std::string> knowledge_used;  // entry id, iff Knowledgeable
    bool reflected = false;                     // iff Slow
    std::string rendered;                       // canonical output text
    std::string observation;
};

struct EpisodeResult {
    std::string task_id;
    double reward = 0.0;
    int steps = 0;
    int knowledge_steps = 0;
    int reflection_steps = 0;
    std::optional<std::string> error;
    std::vector<StepOutcome> trace;
};

// One decision step: decode, dispatch on the leading token, commit exactly
// one action to the history. The selector runs exactly once and only for
// the Knowledgeable branch.
StepOutcome run_step(const Policy& policy, Session& session, History& history,
                     const KnowledgeBase& kb, DecodeMode mode);

// Episode loop with the environment's step cap. Policy or selector failures
// surface as an error result with reward 0, never as an exception.
EpisodeResult run_episode(const Policy& policy, const Task& task, const KnowledgeBase& kb,
                          DecodeMode mode, const KnowledgeProvider* provider_override = nullptr);

struct EvalReport {
    std::string mode;
    std::map<TaskType, double> per_type;  // average reward per task type
    std::map<TaskType, int> per_type_count;
    double all = 0.0;
    double know_pct = 0.0;
    double refl_pct = 0.0;
    int total_steps = 0;
    std::vector<EpisodeResult> episodes;
};

// Runs every task (optionally across jobs threads) and aggregates in task
// order. Errored episodes count as reward 0 and stay listed.
EvalReport evaluate(const Policy& policy, const std::vector<Task>& tasks,
                    const KnowledgeBase& kb, DecodeMode mode, int jobs = 1);

struct Split {
    std::vector<TaskType> train_types;
    std::vector<TaskType> test_types;
};

Split split_from_string(std::string_view spec);  // "train=Put,Clean test=Heat,..."

// Evaluates only unseen task types on seeds disjoint from training; any
// overlap in types or seeds is rejected.
EvalReport generalization_eval(const Policy& policy, const std::vector<Task>& eval_tasks,
                               const KnowledgeBase& kb, DecodeMode mode, const Split& split,
                               const std::set<uint64_t>& train_seeds, int jobs = 1);

}  // namespace knowself
