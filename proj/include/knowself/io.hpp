#pragma once

#include <filesystem>

#include <json.hpp>

#include "knowself/labeler.hpp"
#include "knowself/runtime.hpp"

namespace knowself {

// Insertion-ordered JSON keeps every emitted artifact byte-stable.
using Json = nlohmann::ordered_json;

// ---- tasks & trajectories (JSONL) ----

Json task_to_json(const Task& t);
Task task_from_json(const Json& j);

Json trajectory_to_json(const Trajectory& t);

// ---- knowledge base (JSON) ----

Json kb_to_json(const KnowledgeBase& kb);
KnowledgeBase kb_from_json(const Json& j);

Json step_pair_to_json(const StepPair& p);

// ---- datasets (JSONL) ----

Json self_sample_to_json(const SelfAwareSample& s);
Json pair_sample_to_json(const PairSample& p);

// Rebuilds a gold-trajectory prefix for (task, step); the digest check
// guards against joining records to the wrong histories.
History history_at(const std::shared_ptr<const Task>& task, int step);
SelfAwareSample self_sample_from_json(const Json& j,
                                      const std::map<std::string, std::shared_ptr<const Task>>& tasks,
                                      const KnowledgeBase* kb);
PairSample pair_sample_from_json(const Json& j,
                                 const std::map<std::string, std::shared_ptr<const Task>>& tasks,
                                 const KnowledgeBase* kb);

// ---- evaluation artifacts ----

Json episode_to_json(const EpisodeResult& e);
// {mode, per_type, all, know_pct, refl_pct, episodes: <path>}
Json report_to_json(const EvalReport& r, const std::string& episodes_path);

// ---- policy params (JSON, bit-exact floats via base64 LE float64) ----

Json params_to_json(const PolicyParams& p);
PolicyParams params_from_json(const Json& j);

// ---- files ----

void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

uint64_t file_digest(const std::filesystem::path& path);

}  // namespace knowself
