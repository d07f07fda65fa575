#include "knowself/runtime.hpp"

#include <algorithm>
#include <thread>

#include "knowself/labeler.hpp"

namespace knowself {

StepOutcome run_step(const Policy& policy, Session& session, History& history,
                     const KnowledgeBase& kb, DecodeMode mode) {
    KnowledgeProvider provider = [&kb](const History& h) {
        return &select_state_aligned(kb, h);
    };
    StructuredOutput y = policy.act(history, mode, provider);

    StepOutcome outcome;
    outcome.situation = y.situation;
    outcome.committed = y.final_action;
    outcome.reflected = y.situation == Situation::Slow;
    if (y.situation == Situation::Knowledgeable) outcome.knowledge_used = y.knowledge->entry_id;
    outcome.rendered = render(y);

    Observation obs = session.apply(y.final_action);
    outcome.observation = obs.text;
    history.append(y.final_action, std::move(obs));
    return outcome;
}

EpisodeResult run_episode(const Policy& policy, const Task& task, const KnowledgeBase& kb,
                          DecodeMode mode, const KnowledgeProvider* provider_override) {
    EpisodeResult result;
    result.task_id = task.id;
    auto tp = std::make_shared<Task>(task);
    Session session(tp);
    History history(tp);
    int cap = step_cap(task.env_kind);

    try {
        while (!session.done() && session.steps_taken() < cap) {
            StepOutcome outcome;
            if (provider_override) {
                StructuredOutput y = policy.act(history, mode, *provider_override);
                outcome.situation = y.situation;
                outcome.committed = y.final_action;
                outcome.reflected = y.situation == Situation::Slow;
                if (y.situation == Situation::Knowledgeable)
                    outcome.knowledge_used = y.knowledge->entry_id;
                outcome.rendered = render(y);
                Observation obs = session.apply(y.final_action);
                outcome.observation = obs.text;
                history.append(y.final_action, std::move(obs));
            } else {
                outcome = run_step(policy, session, history, kb, mode);
            }
            ++result.steps;
            if (outcome.situation == Situation::Knowledgeable) ++result.knowledge_steps;
            if (outcome.reflected) ++result.reflection_steps;
            result.trace.push_back(std::move(outcome));
        }
        result.reward = session.done() ? session.reward() : 0.0;
    } catch (const std::exception& e) {
        result.error = e.what();
        result.reward = 0.0;
    }
    return result;
}

EvalReport evaluate(const Policy& policy, const std::vector<Task>& tasks,
                    const KnowledgeBase& kb, DecodeMode mode, int jobs) {
    if (tasks.empty()) throw ContractError("evaluate: task set is empty");
    EvalReport report;
    report.mode = to_string(mode);
    report.episodes.resize(tasks.size());

    auto worker = [&](size_t begin, size_t end) {
        for (size_t i = begin; i < end; ++i)
            report.episodes[i] = run_episode(policy, tasks[i], kb, mode);
    };
    if (jobs <= 1 || tasks.size() < 2) {
        worker(0, tasks.size());
    } else {
        size_t n = tasks.size();
        size_t workers = std::min<size_t>(jobs, n);
        std::vector<std::thread> pool;
        size_t chunk = (n + workers - 1) / workers;
        for (size_t w = 0; w < workers; ++w) {
            size_t begin = w * chunk;
            size_t end = std::min(n, begin + chunk);
            if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    std::map<TaskType, double> sums;
    double total = 0.0;
    int know = 0, refl = 0, steps = 0;
    for (size_t i = 0; i < tasks.size(); ++i) {
        const auto& ep = report.episodes[i];
        sums[tasks[i].task_type] += ep.reward;
        report.per_type_count[tasks[i].task_type] += 1;
        total += ep.reward;
        know += ep.knowledge_steps;
        refl += ep.reflection_steps;
        steps += ep.steps;
    }
    for (const auto& [type, sum] : sums)
        report.per_type[type] = sum / report.per_type_count[type];
    report.all = total / static_cast<double>(tasks.size());
    report.total_steps = steps;
    report.know_pct = steps > 0 ? 100.0 * know / steps : 0.0;
    report.refl_pct = steps > 0 ? 100.0 * refl / steps : 0.0;
    return report;
}

Split split_from_string(std::string_view spec) {
    Split out;
    for (const auto& part : split(spec, ' ')) {
        if (part.empty()) continue;
        std::vector<TaskType>* dst = nullptr;
        std::string_view rest;
        if (starts_with(part, "train=")) {
            dst = &out.train_types;
            rest = std::string_view(part).substr(6);
        } else if (starts_with(part, "test=")) {
            dst = &out.test_types;
            rest = std::string_view(part).substr(5);
        } else {
            throw ContractError("bad split segment: '" + part + "'");
        }
        for (const auto& name : split(rest, ','))
            if (!name.empty()) dst->push_back(task_type_from_string(name));
    }
    if (out.train_types.empty() && out.test_types.empty())
        throw ContractError("empty split spec");
    return out;
}

EvalReport generalization_eval(const Policy& policy, const std::vector<Task>& eval_tasks,
                               const KnowledgeBase& kb, DecodeMode mode, const Split& split,
                               const std::set<uint64_t>& train_seeds, int jobs) {
    if (split.test_types.empty()) throw ContractError("generalization split: empty test set");
    for (TaskType t : split.train_types)
        for (TaskType u : split.test_types)
            if (t == u)
                throw ContractError("generalization split: overlapping type " + to_string(t));
    for (const auto& task : eval_tasks) {
        if (std::find(split.test_types.begin(), split.test_types.end(), task.task_type) ==
            split.test_types.end())
            throw ContractError("task " + task.id + " is not a test-type task");
        if (train_seeds.count(task.seed))
            throw ContractError("task " + task.id + " reuses a training seed");
    }
    return evaluate(policy, eval_tasks, kb, mode, jobs);
}

}  // namespace knowself
