#include "knowself/env.hpp"

#include <algorithm>
#include <sstream>

#include "env_detail.hpp"

namespace knowself {

using namespace detail;

std::string to_string(EnvKind k) {
    return k == EnvKind::MiniHouse ? "MiniHouse" : "MiniShop";
}

std::string to_string(TaskType t) {
    switch (t) {
        case TaskType::Put: return "Put";
        case TaskType::Clean: return "Clean";
        case TaskType::Heat: return "Heat";
        case TaskType::Cool: return "Cool";
        case TaskType::Examine: return "Examine";
        case TaskType::PutTwo: return "PutTwo";
        case TaskType::Purchase: return "Purchase";
    }
    return "?";
}

EnvKind env_kind_from_string(std::string_view s) {
    std::string l = lower(s);
    if (l == "minihouse") return EnvKind::MiniHouse;
    if (l == "minishop") return EnvKind::MiniShop;
    throw ContractError("unknown env kind: " + std::string(s));
}

TaskType task_type_from_string(std::string_view s) {
    std::string l = lower(s);
    if (l == "put") return TaskType::Put;
    if (l == "clean") return TaskType::Clean;
    if (l == "heat") return TaskType::Heat;
    if (l == "cool") return TaskType::Cool;
    if (l == "examine") return TaskType::Examine;
    if (l == "puttwo") return TaskType::PutTwo;
    if (l == "purchase") return TaskType::Purchase;
    throw ContractError("unknown task type: " + std::string(s));
}

const std::vector<TaskType>& task_types(EnvKind kind) {
    static const std::vector<TaskType> house = {TaskType::Put,  TaskType::Clean,
                                                TaskType::Heat, TaskType::Cool,
                                                TaskType::Examine, TaskType::PutTwo};
    static const std::vector<TaskType> shop = {TaskType::Purchase};
    return kind == EnvKind::MiniHouse ? house : shop;
}

int step_cap(EnvKind kind) { return kind == EnvKind::MiniHouse ? 40 : 10; }

// ------------------------------------------------------------------ actions

std::string action_text(const Action& a) {
    switch (a.verb) {
        case Verb::GoTo: return "go to " + a.args.at(0);
        case Verb::Open: return "open " + a.args.at(0);
        case Verb::Close: return "close " + a.args.at(0);
        case Verb::Take: return "take " + a.args.at(0) + " from " + a.args.at(1);
        case Verb::Put: return "put " + a.args.at(0) + " in/on " + a.args.at(1);
        case Verb::Use: return "use " + a.args.at(0);
        case Verb::Clean: return "clean " + a.args.at(0) + " with " + a.args.at(1);
        case Verb::Heat: return "heat " + a.args.at(0) + " with " + a.args.at(1);
        case Verb::Cool: return "cool " + a.args.at(0) + " with " + a.args.at(1);
        case Verb::Search: return "search[" + a.args.at(0) + "]";
        case Verb::Buy: return "click[buy now]";
        case Verb::Click: return "click[" + a.args.at(0) + "]";
    }
    return "";
}

Action parse_action(std::string_view text) {
    std::string t = trim(text);
    auto tail = [&](size_t n) { return std::string(t.substr(n)); };
    auto two_args = [&](Verb v, size_t prefix_len, const std::string& sep) {
        std::string rest = tail(prefix_len);
        size_t pos = rest.find(sep);
        if (pos == std::string::npos)
            throw ContractError("malformed action: '" + t + "'");
        return Action{v, {trim(rest.substr(0, pos)), trim(rest.substr(pos + sep.size()))}};
    };
    if (starts_with(t, "go to ")) return {Verb::GoTo, {tail(6)}};
    if (starts_with(t, "open ")) return {Verb::Open, {tail(5)}};
    if (starts_with(t, "close ")) return {Verb::Close, {tail(6)}};
    if (starts_with(t, "take ")) return two_args(Verb::Take, 5, " from ");
    if (starts_with(t, "put ")) return two_args(Verb::Put, 4, " in/on ");
    if (starts_with(t, "use ")) return {Verb::Use, {tail(4)}};
    if (starts_with(t, "clean ")) return two_args(Verb::Clean, 6, " with ");
    if (starts_with(t, "heat ")) return two_args(Verb::Heat, 5, " with ");
    if (starts_with(t, "cool ")) return two_args(Verb::Cool, 5, " with ");
    if (starts_with(t, "search[") && t.back() == ']')
        return {Verb::Search, {std::string(t.substr(7, t.size() - 8))}};
    if (t == "click[buy now]") return {Verb::Buy, {}};
    if (starts_with(t, "click[") && t.back() == ']')
        return {Verb::Click, {std::string(t.substr(6, t.size() - 7))}};
    throw ContractError("malformed action: '" + t + "'");
}

// ---------------------------------------------------------------- task gen

Task generate_task(EnvKind kind, TaskType type, uint64_t seed) {
    const auto& valid = task_types(kind);
    if (std::find(valid.begin(), valid.end(), type) == valid.end())
        throw ContractError("task type " + to_string(type) + " is not valid for " +
                            to_string(kind));
    Task task = kind == EnvKind::MiniHouse ? generate_house_task(type, seed)
                                           : generate_shop_task(seed);
    // Solvability is part of the generation contract.
    Trajectory gold = oracle_rollout(task);
    (void)gold;
    return task;
}

GoalSpec parse_goal_text(EnvKind kind, TaskType type, const std::string& goal_text,
                         const WorldState& initial_state) {
    GoalSpec g;
    if (kind == EnvKind::MiniHouse) {
        const auto& st = std::get<HouseState>(initial_state);
        if (type == TaskType::Examine) {
            std::string rest = goal_text;
            if (!starts_with(rest, "examine the "))
                throw ArtifactError("unparseable goal text: " + goal_text);
            size_t with = rest.find(" with the desklamp");
            g.object_type = rest.substr(12, with - 12);
            g.target_recep = first_eligible_target(st);
            return g;
        }
        size_t sep = goal_text.find(" in/on ");
        if (sep == std::string::npos)
            throw ArtifactError("unparseable goal text: " + goal_text);
        g.target_recep = goal_text.substr(sep + 7);
        std::string head = goal_text.substr(0, sep);  // "put a [clean|hot|cool] X" | "put two X"
        for (const char* prefix : {"put a clean ", "put a hot ", "put a cool ", "put two ",
                                   "put a "}) {
            if (starts_with(head, prefix)) {
                g.object_type = head.substr(std::string(prefix).size());
                return g;
            }
        }
        throw ArtifactError("unparseable goal text: " + goal_text);
    }
    // "i am looking for a <values...> <product>, and price lower than N dollars"
    size_t comma = goal_text.find(", and price lower than ");
    if (!starts_with(goal_text, "i am looking for a ") || comma == std::string::npos)
        throw ArtifactError("unparseable goal text: " + goal_text);
    std::string head = goal_text.substr(19, comma - 19);
    std::string tail = goal_text.substr(comma + 24);
    size_t dollars = tail.find(" dollars");
    g.price_cap = std::stod(tail.substr(0, dollars));
    auto words = split(head, ' ');
    if (words.empty()) throw ArtifactError("unparseable goal text: " + goal_text);
    g.product = words.back();
    for (size_t i = 0; i + 1 < words.size(); ++i) {
        auto group = detail::attr_group_of(words[i]);
        if (!group) throw ArtifactError("unknown goal attribute: " + words[i]);
        g.required_attrs.push_back({*group, words[i]});
    }
    return g;
}

StepResult step(const Task& task, const WorldState& state, const Action& action) {
    if (task.env_kind == EnvKind::MiniHouse)
        return house_step(task, std::get<HouseState>(state), action);
    return shop_step(task, std::get<ShopState>(state), action);
}

Observation observe(const Task& task, const WorldState& state) {
    if (task.env_kind == EnvKind::MiniHouse)
        return house_observe(task, std::get<HouseState>(state), /*arrival=*/false);
    return shop_observe(task, std::get<ShopState>(state));
}

// ------------------------------------------------------------------ history

std::string serialize_history(const History& h) {
    std::ostringstream out;
    out << h.task().id << "\n" << h.task().goal_text << "\n";
    for (const auto& s : h.steps())
        out << action_text(s.action) << "\n" << s.obs.text << "\n";
    return out.str();
}

uint64_t history_digest(const History& h) { return fnv1a(serialize_history(h)); }

// ---------------------------------------------------------------- decisions

int move_count(EnvKind kind) {
    return kind == EnvKind::MiniHouse ? static_cast<int>(HouseMove::Count)
                                      : static_cast<int>(ShopMove::Count);
}

std::string move_name(EnvKind kind, DecisionId id) {
    static const char* house[] = {"GoNext",   "GoSeen",   "GoTarget", "GoAppliance",
                                  "OpenHere", "CloseHere", "TakeGoal", "PutHere",
                                  "CleanHeld", "HeatHeld", "CoolHeld", "UseLamp"};
    static const char* shop[] = {"SearchFull", "SearchLoose", "ClickBest", "ClickSecond",
                                 "ClickOption", "ClickBack",  "Buy"};
    if (id < 0 || id >= move_count(kind)) throw ContractError("bad decision id");
    return kind == EnvKind::MiniHouse ? house[id] : shop[id];
}

std::string move_advice_phrase(EnvKind kind, DecisionId id) {
    static const char* house[] = {
        "explore another receptacle",
        "go back to the receptacle where the object was seen",
        "go to the target receptacle",
        "go to the required appliance",
        "open the receptacle",
        "close the receptacle",
        "take the object",
        "put the object down",
        "clean it with the cleaner",
        "heat it with the heater",
        "cool it with the cooler",
        "examine it with the desklamp",
    };
    static const char* shop[] = {
        "search with the full requirements",
        "search with the product name",
        "click the best matching item",
        "click an alternative item",
        "click the required options",
        "go back to the search page",
        "buy now",
    };
    if (id < 0 || id >= move_count(kind)) throw ContractError("bad decision id");
    return kind == EnvKind::MiniHouse ? house[id] : shop[id];
}

std::string move_gerund(EnvKind kind, DecisionId id) {
    static const char* house[] = {"exploring elsewhere", "backtracking",
                                  "going to the target", "visiting the appliance",
                                  "opening",             "closing",
                                  "taking",              "putting",
                                  "cleaning",            "heating",
                                  "cooling",             "using the lamp"};
    static const char* shop[] = {"searching again", "searching loosely", "clicking the top item",
                                 "clicking an alternative", "clicking options",
                                 "going back",      "buying"};
    if (id < 0 || id >= move_count(kind)) throw ContractError("bad decision id");
    return kind == EnvKind::MiniHouse ? house[id] : shop[id];
}

// ------------------------------------------------------------------ session

Session::Session(std::shared_ptr<const Task> task)
    : task_(std::move(task)), state_(task_->initial_state) {
    last_obs_ = knowself::observe(*task_, state_);
    absorb(last_obs_);
}

void Session::absorb(const Observation&) {
    if (task_->env_kind != EnvKind::MiniHouse) return;
    const auto& st = std::get<HouseState>(state_);
    if (st.agent_location == "start") return;
    const HouseRecep* r = find_recep(st, st.agent_location);
    if (!r || !contents_visible(*r)) return;
    observed_.insert(r->id);
    for (const auto* o : objects_at(st, r->id)) seen_[o->id] = r->id;
}

Observation Session::apply(const Action& a) {
    if (done_) {
        last_obs_ = Observation{kNothingHappens, {}};
        return last_obs_;
    }
    StepResult res = knowself::step(*task_, state_, a);
    state_ = std::move(res.state);
    ++steps_;
    if (task_->env_kind == EnvKind::MiniHouse) {
        const auto& st = std::get<HouseState>(state_);
        if (a.verb == Verb::Take && res.obs.text != kNothingHappens) seen_.erase(a.args[0]);
        if (a.verb == Verb::Put && res.obs.text != kNothingHappens) seen_[a.args[0]] = a.args[1];
        (void)st;
    }
    absorb(res.obs);
    if (res.done) {
        done_ = true;
        reward_ = res.reward;
    }
    last_obs_ = res.obs;
    return res.obs;
}

Session replay(const History& h) {
    Session s(h.task_ptr());
    for (const auto& step : h.steps()) s.apply(step.action);
    return s;
}

// ---------------------------------------------------------------- grounding

namespace {

std::optional<Action> ground_house(const Session& s, HouseMove m) {
    const auto& task = s.task();
    const auto& st = std::get<HouseState>(s.state());
    const std::string& here = st.agent_location;
    bool at_recep = here != "start";

    switch (m) {
        case HouseMove::GoNext: {
            for (const auto& r : st.receptacles)
                if (!s.observed_receps().count(r.id) && r.id != here) return Action{Verb::GoTo, {r.id}};
            for (const auto& r : st.receptacles)
                if (r.id != here) return Action{Verb::GoTo, {r.id}};
            return std::nullopt;
        }
        case HouseMove::GoSeen: {
            for (const auto& r : st.receptacles) {
                if (r.id == here) continue;
                for (const auto* o : needed_objects(task, st))
                    if (auto it = s.seen_objects().find(o->id);
                        it != s.seen_objects().end() && it->second == r.id)
                        return Action{Verb::GoTo, {r.id}};
            }
            return std::nullopt;
        }
        case HouseMove::GoTarget:
            if (task.goal.target_recep.empty() || task.goal.target_recep == here)
                return std::nullopt;
            return Action{Verb::GoTo, {task.goal.target_recep}};
        case HouseMove::GoAppliance: {
            std::string app = appliance_recep(task, st);
            if (app == here) return std::nullopt;
            return Action{Verb::GoTo, {app}};
        }
        case HouseMove::OpenHere:
        case HouseMove::CloseHere: {
            // Phrasable anywhere; the world no-ops when the receptacle is not
            // openable, not nearby, or already in the requested state. Away
            // from any receptacle the phrase names the first openable one.
            std::string recep = here;
            if (!at_recep) {
                recep.clear();
                for (const auto& r : st.receptacles)
                    if (r.openable) {
                        recep = r.id;
                        break;
                    }
                if (recep.empty()) return std::nullopt;
            }
            return Action{m == HouseMove::OpenHere ? Verb::Open : Verb::Close, {recep}};
        }
        case HouseMove::TakeGoal: {
            if (!at_recep || st.holding) return std::nullopt;
            const HouseRecep* r = find_recep(st, here);
            if (!contents_visible(*r)) return std::nullopt;
            for (const auto* o : needed_objects(task, st))
                if (o->location == here) return Action{Verb::Take, {o->id, here}};
            return std::nullopt;
        }
        case HouseMove::PutHere:
            // Placement is phrased at the task target only; wrong-action
            // probes get their variety from the go/open/close moves.
            if (!st.holding || here != task.goal.target_recep) return std::nullopt;
            return Action{Verb::Put, {*st.holding, here}};
        case HouseMove::CleanHeld: {
            if (!at_recep || !st.holding) return std::nullopt;
            const HouseRecep* r = find_recep(st, here);
            if (!r || r->type != "sinkbasin") return std::nullopt;
            return Action{Verb::Clean, {*st.holding, here}};
        }
        case HouseMove::HeatHeld: {
            if (!at_recep || !st.holding) return std::nullopt;
            const HouseRecep* r = find_recep(st, here);
            if (!r || r->type != "microwave") return std::nullopt;
            return Action{Verb::Heat, {*st.holding, here}};
        }
        case HouseMove::CoolHeld: {
            if (!at_recep || !st.holding) return std::nullopt;
            const HouseRecep* r = find_recep(st, here);
            if (!r || r->type != "fridge") return std::nullopt;
            return Action{Verb::Cool, {*st.holding, here}};
        }
        case HouseMove::UseLamp:
            if (here != st.lamp_location) return std::nullopt;
            return Action{Verb::Use, {st.lamp_id}};
        default:
            return std::nullopt;
    }
}

std::optional<Action> ground_shop(const Session& s, ShopMove m) {
    const auto& task = s.task();
    const auto& st = std::get<ShopState>(s.state());
    if (st.bought) return std::nullopt;

    switch (m) {
        case ShopMove::SearchFull: return Action{Verb::Search, {full_query(task.goal)}};
        case ShopMove::SearchLoose: return Action{Verb::Search, {loose_query(task.goal)}};
        case ShopMove::ClickBest:
            if (st.page != ShopPage::Results || st.results.empty()) return std::nullopt;
            return Action{Verb::Click, {st.results[0]}};
        case ShopMove::ClickSecond:
            if (st.page != ShopPage::Results || st.results.size() < 2) return std::nullopt;
            return Action{Verb::Click, {st.results[1]}};
        case ShopMove::ClickOption: {
            if (st.page != ShopPage::Item) return std::nullopt;
            auto unmet = unmet_attrs(task.goal, st);
            if (!unmet.empty()) return Action{Verb::Click, {unmet[0].second}};
            const ShopItem* it = find_item(st, st.current_item);
            if (!it || it->options.empty()) return std::nullopt;
            return Action{Verb::Click, {it->options.begin()->second.front()}};
        }
        case ShopMove::ClickBack: return Action{Verb::Click, {"back to search"}};
        case ShopMove::Buy:
            if (st.page != ShopPage::Item) return std::nullopt;
            return Action{Verb::Buy, {}};
        default:
            return std::nullopt;
    }
}

}  // namespace

std::optional<Action> ground(const Session& s, DecisionId id) {
    if (id < 0 || id >= move_count(s.task().env_kind)) return std::nullopt;
    if (s.task().env_kind == EnvKind::MiniHouse)
        return ground_house(s, static_cast<HouseMove>(id));
    return ground_shop(s, static_cast<ShopMove>(id));
}

std::vector<DecisionId> decision_support(const Session& s) {
    std::vector<DecisionId> ids;
    std::vector<std::string> taken;
    for (DecisionId id = 0; id < move_count(s.task().env_kind); ++id) {
        auto a = ground(s, id);
        if (!a) continue;
        std::string text = action_text(*a);
        if (std::find(taken.begin(), taken.end(), text) != taken.end()) continue;
        taken.push_back(text);
        ids.push_back(id);
    }
    return ids;
}

std::optional<DecisionId> canonical_decision(const Session& s, const Action& a) {
    for (DecisionId id : decision_support(s)) {
        auto g = ground(s, id);
        if (g && *g == a) return id;
    }
    return std::nullopt;
}

std::optional<DecisionId> decision_class(const Session& s, const Action& a) {
    if (auto id = canonical_decision(s, a)) return id;
    const Task& task = s.task();
    if (task.env_kind == EnvKind::MiniHouse) {
        const auto& st = std::get<HouseState>(s.state());
        switch (a.verb) {
            case Verb::GoTo: {
                const std::string& dest = a.args.empty() ? "" : a.args[0];
                if (dest == task.goal.target_recep) return static_cast<int>(HouseMove::GoTarget);
                if (dest == appliance_recep(task, st))
                    return static_cast<int>(HouseMove::GoAppliance);
                for (const auto* o : needed_objects(task, st))
                    if (auto it = s.seen_objects().find(o->id);
                        it != s.seen_objects().end() && it->second == dest)
                        return static_cast<int>(HouseMove::GoSeen);
                return static_cast<int>(HouseMove::GoNext);
            }
            case Verb::Open: return static_cast<int>(HouseMove::OpenHere);
            case Verb::Close: return static_cast<int>(HouseMove::CloseHere);
            case Verb::Take: return static_cast<int>(HouseMove::TakeGoal);
            case Verb::Put: return static_cast<int>(HouseMove::PutHere);
            case Verb::Clean: return static_cast<int>(HouseMove::CleanHeld);
            case Verb::Heat: return static_cast<int>(HouseMove::HeatHeld);
            case Verb::Cool: return static_cast<int>(HouseMove::CoolHeld);
            case Verb::Use: return static_cast<int>(HouseMove::UseLamp);
            default: return std::nullopt;
        }
    }
    switch (a.verb) {
        case Verb::Search:
            return a.args.at(0) == full_query(task.goal)
                       ? static_cast<int>(ShopMove::SearchFull)
                       : static_cast<int>(ShopMove::SearchLoose);
        case Verb::Buy: return static_cast<int>(ShopMove::Buy);
        case Verb::Click: {
            const std::string& arg = a.args.at(0);
            if (arg == "back to search") return static_cast<int>(ShopMove::ClickBack);
            const auto& st = std::get<ShopState>(s.state());
            if (!st.results.empty() && arg == st.results[0])
                return static_cast<int>(ShopMove::ClickBest);
            if (st.results.size() > 1 && arg == st.results[1])
                return static_cast<int>(ShopMove::ClickSecond);
            return static_cast<int>(ShopMove::ClickOption);
        }
        default: return std::nullopt;
    }
}

// ------------------------------------------------------------------- oracle

namespace {

HouseMove gold_house(const Session& s) {
    const auto& task = s.task();
    const auto& st = std::get<HouseState>(s.state());
    const std::string& here = st.agent_location;

    if (st.holding) {
        const HouseObject* held = find_object(st, *st.holding);
        if (held->type != task.goal.object_type) {
            // Off-policy salvage: carry it to the target and free the hand.
            if (here != task.goal.target_recep) return HouseMove::GoTarget;
            const HouseRecep* r = find_recep(st, here);
            return contents_visible(*r) ? HouseMove::PutHere : HouseMove::OpenHere;
        }
        bool needs_process = task.task_type == TaskType::Clean ||
                             task.task_type == TaskType::Heat ||
                             task.task_type == TaskType::Cool;
        if (needs_process && !object_processed(task, *held)) {
            if (here == appliance_recep(task, st)) {
                switch (task.task_type) {
                    case TaskType::Clean: return HouseMove::CleanHeld;
                    case TaskType::Heat: return HouseMove::HeatHeld;
                    default: return HouseMove::CoolHeld;
                }
            }
            return HouseMove::GoAppliance;
        }
        if (task.task_type == TaskType::Examine)
            return here == st.lamp_location ? HouseMove::UseLamp : HouseMove::GoAppliance;
        if (here == task.goal.target_recep) {
            const HouseRecep* r = find_recep(st, here);
            if (!contents_visible(*r)) return HouseMove::OpenHere;
            return HouseMove::PutHere;
        }
        return HouseMove::GoTarget;
    }

    // Seeking a needed instance.
    auto needed = needed_objects(task, st);
    if (needed.empty()) throw ContractError("oracle: no needed object but task not done");
    const HouseRecep* r = here != "start" ? find_recep(st, here) : nullptr;
    for (const auto* o : needed) {
        if (o->location == here && r) {
            if (contents_visible(*r)) return HouseMove::TakeGoal;
            return HouseMove::OpenHere;
        }
    }
    for (const auto* o : needed) {
        auto it = s.seen_objects().find(o->id);
        if (it != s.seen_objects().end() && it->second != here) return HouseMove::GoSeen;
    }
    if (r && !s.observed_receps().count(here) && !contents_visible(*r)) return HouseMove::OpenHere;
    for (const auto& rec : st.receptacles)
        if (!s.observed_receps().count(rec.id) && rec.id != here) return HouseMove::GoNext;
    throw ContractError("oracle: search exhausted without finding the goal object");
}

ShopMove gold_shop(const Session& s) {
    const auto& task = s.task();
    const auto& st = std::get<ShopState>(s.state());
    switch (st.page) {
        case ShopPage::Start: return ShopMove::SearchFull;
        case ShopPage::Results:
            if (st.query != full_query(task.goal)) return ShopMove::SearchFull;
            return ShopMove::ClickBest;
        case ShopPage::Item: {
            ShopState probe = st;
            probe.query = full_query(task.goal);
            auto ranked = rank_items(probe, probe.query);
            if (!ranked.empty() && st.current_item != ranked[0]) return ShopMove::ClickBack;
            if (!unmet_attrs(task.goal, st).empty()) return ShopMove::ClickOption;
            return ShopMove::Buy;
        }
    }
    throw ContractError("oracle: bad shop page");
}

}  // namespace

DecisionId gold_decision(const Session& s) {
    if (s.done()) throw ContractError("gold_decision: episode already done");
    DecisionId raw = s.task().env_kind == EnvKind::MiniHouse
                         ? static_cast<DecisionId>(gold_house(s))
                         : static_cast<DecisionId>(gold_shop(s));
    auto action = ground(s, raw);
    if (!action) throw ContractError("oracle: gold decision failed to ground");
    auto canon = canonical_decision(s, *action);
    if (!canon) throw ContractError("oracle: gold action missing from support");
    return *canon;
}

Action gold_action(const Session& s) {
    auto a = ground(s, gold_decision(s));
    return *a;
}

std::vector<Action> oracle_plan(const Task& task) {
    auto traj = oracle_rollout(task);
    std::vector<Action> plan;
    plan.reserve(traj.steps.size());
    for (const auto& s : traj.steps) plan.push_back(s.action);
    return plan;
}

Trajectory oracle_rollout(const Task& task) {
    Session s(std::make_shared<Task>(task));
    Trajectory traj;
    traj.task_id = task.id;
    int cap = step_cap(task.env_kind);
    while (!s.done() && s.steps_taken() < cap) {
        Action a = gold_action(s);
        Observation o = s.apply(a);
        traj.steps.push_back({a, o});
    }
    traj.reward = s.reward();
    double min_reward = task.env_kind == EnvKind::MiniHouse ? 1.0 : 0.8;
    if (!s.done() || traj.reward < min_reward)
        throw ContractError("oracle failed to solve task " + task.id +
                            " (reward " + std::to_string(traj.reward) + ")");
    return traj;
}

}  // namespace knowself
