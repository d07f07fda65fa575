#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "knowself/common.hpp"

namespace knowself {

enum class EnvKind { MiniHouse, MiniShop };
enum class TaskType { Put, Clean, Heat, Cool, Examine, PutTwo, Purchase };

std::string to_string(EnvKind k);
std::string to_string(TaskType t);
EnvKind env_kind_from_string(std::string_view s);
TaskType task_type_from_string(std::string_view s);
const std::vector<TaskType>& task_types(EnvKind kind);
int step_cap(EnvKind kind);

enum class Verb { GoTo, Open, Close, Take, Put, Use, Clean, Heat, Cool, Click, Search, Buy };

struct Action {
    Verb verb{Verb::GoTo};
    std::vector<std::string> args;

    bool operator==(const Action& o) const { return verb == o.verb && args == o.args; }
    bool operator!=(const Action& o) const { return !(*this == o); }
};

std::string action_text(const Action& a);
Action parse_action(std::string_view text);  // throws ContractError on malformed text

struct Observation {
    std::string text;
    std::vector<std::string> revealed;  // entity ids exposed by this observation
};

inline const char* kNothingHappens = "Nothing happens";

// ---------------------------------------------------------------- MiniHouse

struct HouseObject {
    std::string id;    // "apple 1"
    std::string type;  // "apple"
    std::string location;  // receptacle id, or "agent" while held
    bool clean = false;
    bool hot = false;
    bool cold = false;
    bool examined = false;
};

struct HouseRecep {
    std::string id;    // "cabinet 2"
    std::string type;  // "cabinet"
    bool openable = false;
    bool open = true;  // closed receptacles hide contents
};

struct HouseState {
    std::vector<HouseRecep> receptacles;  // canonical search order
    std::vector<HouseObject> objects;
    std::string agent_location = "start";
    std::optional<std::string> holding;
    std::string lamp_id;        // "desklamp 1"
    std::string lamp_location;  // receptacle id
};

// ----------------------------------------------------------------- MiniShop

struct ShopItem {
    std::string id;     // "B001"
    std::string title;  // "red large cotton shirt"
    std::string product;
    std::map<std::string, std::string> inherent;              // attr group -> value
    std::map<std::string, std::vector<std::string>> options;  // group -> selectable values
    double price = 0.0;
};

enum class ShopPage { Start, Results, Item };

struct ShopState {
    std::vector<ShopItem> catalog;
    ShopPage page = ShopPage::Start;
    std::string query;
    std::vector<std::string> results;  // ranked item ids
    std::string current_item;
    std::map<std::string, std::string> selected;  // option group -> value
    bool bought = false;
};

using WorldState = std::variant<HouseState, ShopState>;

// -------------------------------------------------------------------- tasks

struct GoalSpec {
    // MiniHouse
    std::string object_type;
    std::string target_recep;
    // MiniShop
    std::string product;
    std::vector<std::pair<std::string, std::string>> required_attrs;  // ordered
    double price_cap = 0.0;
};

struct Task {
    std::string id;
    EnvKind env_kind{EnvKind::MiniHouse};
    TaskType task_type{TaskType::Put};
    std::string goal_text;
    uint64_t seed = 0;
    WorldState initial_state;
    GoalSpec goal;
};

// task_type must be valid for env_kind; throws ContractError otherwise.
// The generated task is always solvable: generation runs the oracle and a
// failure is a hard error.
Task generate_task(EnvKind kind, TaskType type, uint64_t seed);

// Rebuilds the goal parameters from the serialized goal text and state.
GoalSpec parse_goal_text(EnvKind kind, TaskType type, const std::string& goal_text,
                         const WorldState& initial_state);

struct StepResult {
    WorldState state;
    Observation obs;
    double reward = 0.0;
    bool done = false;
};

// Total transition function: invalid actions return the unchanged state with
// the exact observation "Nothing happens".
StepResult step(const Task& task, const WorldState& state, const Action& action);

// Current-location observation; contents of closed receptacles never leak.
Observation observe(const Task& task, const WorldState& state);

// ------------------------------------------------------------------ history

struct HistoryStep {
    Action action;
    Observation obs;
};

class History {
public:
    History() = default;
    explicit History(std::shared_ptr<const Task> task) : task_(std::move(task)) {}

    const Task& task() const { return *task_; }
    std::shared_ptr<const Task> task_ptr() const { return task_; }
    const std::vector<HistoryStep>& steps() const { return steps_; }
    size_t size() const { return steps_.size(); }

    void append(Action a, Observation o) { steps_.push_back({std::move(a), std::move(o)}); }

private:
    std::shared_ptr<const Task> task_;
    std::vector<HistoryStep> steps_;  // append-only
};

std::string serialize_history(const History& h);  // canonical text, used for digests
uint64_t history_digest(const History& h);

// ------------------------------------------------------- decision vocabulary
//
// The policy does not rank raw entity-level actions; it ranks a fixed,
// per-environment vocabulary of decisions that ground to concrete actions
// given the agent's belief. The oracle planner emits the same vocabulary,
// so gold trajectories are always expressible by the policy.

enum class HouseMove : int {
    GoNext,      // go to the next receptacle with unobserved contents
    GoSeen,      // go to the receptacle where a needed object was seen
    GoTarget,    // go to the task's target receptacle
    GoAppliance, // go to the task-relevant appliance (sink/microwave/fridge/lamp)
    OpenHere,
    CloseHere,
    TakeGoal,    // take a needed object from the current receptacle
    PutHere,     // put the held object in/on the current receptacle
    CleanHeld,
    HeatHeld,
    CoolHeld,
    UseLamp,
    Count
};

enum class ShopMove : int {
    SearchFull,   // search with product + all required attributes
    SearchLoose,  // search with the product name only
    ClickBest,    // click the top-ranked result
    ClickSecond,  // click the runner-up result
    ClickOption,  // click the next unmet required option
    ClickBack,    // click[back to search]
    Buy,          // click[buy now]
    Count
};

using DecisionId = int;

int move_count(EnvKind kind);
std::string move_name(EnvKind kind, DecisionId id);
// Verb-class phrases used by the knowledge module's rule templates.
std::string move_advice_phrase(EnvKind kind, DecisionId id);
std::string move_gerund(EnvKind kind, DecisionId id);

// ------------------------------------------------------------------ session
//
// A session is the live episode view: the true state plus the agent-side
// belief (which receptacles have had their contents observed, where objects
// were last seen). Sessions replay deterministically from a history.

class Session {
public:
    explicit Session(std::shared_ptr<const Task> task);

    const Task& task() const { return *task_; }
    std::shared_ptr<const Task> task_ptr() const { return task_; }
    const WorldState& state() const { return state_; }
    bool done() const { return done_; }
    double reward() const { return reward_; }
    int steps_taken() const { return steps_; }

    const std::set<std::string>& observed_receps() const { return observed_; }
    const std::map<std::string, std::string>& seen_objects() const { return seen_; }
    const Observation& last_obs() const { return last_obs_; }

    // Advances the true state and the belief; total.
    Observation apply(const Action& a);

private:
    std::shared_ptr<const Task> task_;
    WorldState state_;
    std::set<std::string> observed_;
    std::map<std::string, std::string> seen_;  // object id -> receptacle id
    Observation last_obs_;
    bool done_ = false;
    double reward_ = 0.0;
    int steps_ = 0;

    void absorb(const Observation& o);
};

Session replay(const History& h);

// Grounds a decision into a concrete action under the session's belief.
// Returns nullopt when the decision cannot even be phrased (e.g. GoSeen with
// no sighting recorded). A grounded action may still be a no-op in the world.
std::optional<Action> ground(const Session& s, DecisionId id);

// Canonical support: groundable decisions, deduplicated so that when two ids
// ground to the same concrete action only the lowest id remains.
std::vector<DecisionId> decision_support(const Session& s);

// Lowest decision id in the support that grounds to `a`.
std::optional<DecisionId> canonical_decision(const Session& s, const Action& a);

// Decision class of an arbitrary action: the canonical decision when the
// action is in the support, otherwise a verb-level classification. Used for
// rule advice and warned-verb matching, where off-support actions occur.
std::optional<DecisionId> decision_class(const Session& s, const Action& a);

// ------------------------------------------------------------------- oracle

// Next gold decision for the session's belief state; ContractError if the
// episode is already done or the planner is stuck (a generation bug).
DecisionId gold_decision(const Session& s);
Action gold_action(const Session& s);

struct Trajectory {
    std::string task_id;
    std::vector<HistoryStep> steps;
    double reward = 0.0;
};

// Gold trajectory; executing it through step() reaches done with full reward
// (MiniHouse) or reward >= 0.8 (MiniShop).
std::vector<Action> oracle_plan(const Task& task);
Trajectory oracle_rollout(const Task& task);

}  // namespace knowself
