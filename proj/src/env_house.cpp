#include <sstream>

#include "env_detail.hpp"

namespace knowself::detail {

namespace {

struct RecepSpec {
    const char* id;
    const char* type;
    bool openable;
};

// Fixtures present in every world; the lamp lives on the desk.
const RecepSpec kFixedReceps[] = {
    {"countertop 1", "countertop", false}, {"desk 1", "desk", false},
    {"sinkbasin 1", "sinkbasin", false},   {"microwave 1", "microwave", true},
    {"fridge 1", "fridge", true},          {"garbagecan 1", "garbagecan", false},
};

const RecepSpec kExtraReceps[] = {
    {"cabinet 1", "cabinet", true},   {"cabinet 2", "cabinet", true},
    {"drawer 1", "drawer", true},     {"drawer 2", "drawer", true},
    {"shelf 1", "shelf", false},      {"shelf 2", "shelf", false},
    {"sidetable 1", "sidetable", false}, {"dresser 1", "dresser", true},
    {"safe 1", "safe", true},         {"countertop 2", "countertop", false},
};

const char* kObjectTypes[] = {
    "apple", "bread", "tomato", "potato", "egg", "mug",  "cup",      "plate",
    "bowl",  "spoon", "book",   "pen",    "pencil", "keychain", "watch", "cellphone",
    "soapbar", "cloth", "statue", "vase",
};

const std::vector<std::string> kCleanable = {"apple", "tomato", "potato", "mug", "cup",
                                             "plate", "bowl",   "spoon",  "cloth", "soapbar"};
const std::vector<std::string> kHeatable = {"apple", "bread", "tomato", "potato", "egg",
                                            "mug",   "cup",   "plate",  "bowl"};
const std::vector<std::string> kCoolable = kHeatable;
const std::vector<std::string> kExaminable = {"book",  "pen",   "pencil", "keychain",
                                              "watch", "cellphone", "statue", "vase"};

// Targets exclude appliances and the desk so that GoTarget, GoAppliance and
// UseLamp stay distinct wrong-action candidates in every state.
bool target_eligible(const HouseRecep& r) {
    return r.type != "sinkbasin" && r.type != "microwave" && r.type != "fridge" &&
           r.type != "desk";
}

}  // namespace

std::string first_eligible_target(const HouseState& st) {
    for (const auto& r : st.receptacles)
        if (target_eligible(r)) return r.id;
    throw ContractError("no target-eligible receptacle");
}

namespace {

std::string list_objects(const std::vector<const HouseObject*>& objs) {
    if (objs.empty()) return "you see nothing";
    std::string out = "you see ";
    for (size_t i = 0; i < objs.size(); ++i) {
        if (i) out += ", ";
        out += "a " + objs[i]->id;
    }
    return out;
}

}  // namespace

const HouseRecep* find_recep(const HouseState& st, const std::string& id) {
    for (const auto& r : st.receptacles)
        if (r.id == id) return &r;
    return nullptr;
}

const HouseObject* find_object(const HouseState& st, const std::string& id) {
    for (const auto& o : st.objects)
        if (o.id == id) return &o;
    return nullptr;
}

HouseObject* find_object_mut(HouseState& st, const std::string& id) {
    for (auto& o : st.objects)
        if (o.id == id) return &o;
    return nullptr;
}

bool contents_visible(const HouseRecep& r) { return !r.openable || r.open; }

std::vector<const HouseObject*> objects_at(const HouseState& st, const std::string& recep) {
    std::vector<const HouseObject*> out;
    for (const auto& o : st.objects)
        if (o.location == recep) out.push_back(&o);
    return out;
}

std::string appliance_recep(const Task& task, const HouseState& st) {
    switch (task.task_type) {
        case TaskType::Clean: return "sinkbasin 1";
        case TaskType::Heat: return "microwave 1";
        case TaskType::Cool: return "fridge 1";
        case TaskType::Examine: return st.lamp_location;
        default: return "sinkbasin 1";
    }
}

bool object_processed(const Task& task, const HouseObject& o) {
    switch (task.task_type) {
        case TaskType::Clean: return o.clean;
        case TaskType::Heat: return o.hot;
        case TaskType::Cool: return o.cold;
        default: return true;
    }
}

bool object_satisfied(const Task& task, const HouseObject& o) {
    if (o.type != task.goal.object_type) return false;
    if (task.task_type == TaskType::Examine) return o.examined;
    return o.location == task.goal.target_recep && object_processed(task, o);
}

std::vector<const HouseObject*> needed_objects(const Task& task, const HouseState& st) {
    std::vector<const HouseObject*> out;
    for (const auto& o : st.objects) {
        if (o.type != task.goal.object_type) continue;
        if (o.location == "agent") continue;
        if (object_satisfied(task, o)) continue;
        out.push_back(&o);
    }
    return out;
}

bool house_goal_done(const Task& task, const HouseState& st) {
    int satisfied = 0;
    for (const auto& o : st.objects)
        if (object_satisfied(task, o)) ++satisfied;
    int want = task.task_type == TaskType::PutTwo ? 2 : 1;
    return satisfied >= want;
}

Observation house_observe(const Task& task, const HouseState& st, bool arrival) {
    Observation obs;
    if (st.agent_location == "start") {
        std::string text = "You are in the middle of a room. Looking quickly around you, you see ";
        for (size_t i = 0; i < st.receptacles.size(); ++i) {
            if (i) text += ", ";
            text += "a " + st.receptacles[i].id;
        }
        text += ". There is a " + st.lamp_id + " on the " + st.lamp_location + ".";
        text += " Your task is to: " + task.goal_text + ".";
        obs.text = text;
        return obs;
    }
    const HouseRecep* r = find_recep(st, st.agent_location);
    std::string text = arrival ? "You arrive at the " + r->id + ". " : "You are at the " + r->id + ". ";
    if (!contents_visible(*r)) {
        text += "The " + r->id + " is closed.";
    } else {
        auto objs = objects_at(st, r->id);
        text += "On the " + r->id + ", " + list_objects(objs) + ".";
        for (const auto* o : objs) obs.revealed.push_back(o->id);
    }
    obs.text = text;
    return obs;
}

StepResult house_step(const Task& task, const HouseState& st, const Action& a) {
    StepResult res;
    res.state = st;
    res.obs.text = kNothingHappens;
    HouseState& ns = std::get<HouseState>(res.state);

    auto nothing = [&]() {
        res.state = st;
        res.obs = Observation{kNothingHappens, {}};
        return res;
    };

    switch (a.verb) {
        case Verb::GoTo: {
            if (a.args.size() != 1) return nothing();
            const HouseRecep* r = find_recep(ns, a.args[0]);
            if (!r || a.args[0] == ns.agent_location) return nothing();
            ns.agent_location = a.args[0];
            res.obs = house_observe(task, ns, /*arrival=*/true);
            break;
        }
        case Verb::Open: {
            if (a.args.size() != 1 || a.args[0] != ns.agent_location) return nothing();
            for (auto& r : ns.receptacles) {
                if (r.id != a.args[0]) continue;
                if (!r.openable || r.open) return nothing();
                r.open = true;
                auto objs = objects_at(ns, r.id);
                res.obs.text = "You open the " + r.id + ". In it, " + list_objects(objs) + ".";
                for (const auto* o : objs) res.obs.revealed.push_back(o->id);
                return res;
            }
            return nothing();
        }
        case Verb::Close: {
            if (a.args.size() != 1 || a.args[0] != ns.agent_location) return nothing();
            for (auto& r : ns.receptacles) {
                if (r.id != a.args[0]) continue;
                if (!r.openable || !r.open) return nothing();
                r.open = false;
                res.obs.text = "You close the " + r.id + ".";
                return res;
            }
            return nothing();
        }
        case Verb::Take: {
            if (a.args.size() != 2 || ns.holding) return nothing();
            const std::string& obj_id = a.args[0];
            const std::string& recep_id = a.args[1];
            if (recep_id != ns.agent_location) return nothing();
            const HouseRecep* r = find_recep(ns, recep_id);
            if (!r || !contents_visible(*r)) return nothing();
            HouseObject* o = find_object_mut(ns, obj_id);
            if (!o || o->location != recep_id) return nothing();
            o->location = "agent";
            ns.holding = obj_id;
            res.obs.text = "You pick up the " + obj_id + " from the " + recep_id + ".";
            break;
        }
        case Verb::Put: {
            if (a.args.size() != 2 || !ns.holding || a.args[0] != *ns.holding) return nothing();
            const std::string& recep_id = a.args[1];
            if (recep_id != ns.agent_location) return nothing();
            const HouseRecep* r = find_recep(ns, recep_id);
            if (!r || !contents_visible(*r)) return nothing();
            HouseObject* o = find_object_mut(ns, a.args[0]);
            o->location = recep_id;
            ns.holding.reset();
            res.obs.text = "You put the " + a.args[0] + " in/on the " + recep_id + ".";
            break;
        }
        case Verb::Clean:
        case Verb::Heat:
        case Verb::Cool: {
            if (a.args.size() != 2 || !ns.holding || a.args[0] != *ns.holding) return nothing();
            const std::string& recep_id = a.args[1];
            if (recep_id != ns.agent_location) return nothing();
            const HouseRecep* r = find_recep(ns, recep_id);
            if (!r) return nothing();
            const char* required = a.verb == Verb::Clean  ? "sinkbasin"
                                   : a.verb == Verb::Heat ? "microwave"
                                                          : "fridge";
            if (r->type != required) return nothing();
            HouseObject* o = find_object_mut(ns, a.args[0]);
            if (a.verb == Verb::Clean) {
                o->clean = true;
                res.obs.text = "You clean the " + a.args[0] + " using the " + recep_id + ".";
            } else if (a.verb == Verb::Heat) {
                o->hot = true;
                o->cold = false;
                res.obs.text = "You heat the " + a.args[0] + " using the " + recep_id + ".";
            } else {
                o->cold = true;
                o->hot = false;
                res.obs.text = "You cool the " + a.args[0] + " using the " + recep_id + ".";
            }
            break;
        }
        case Verb::Use: {
            if (a.args.size() != 1 || a.args[0] != ns.lamp_id) return nothing();
            if (ns.agent_location != ns.lamp_location) return nothing();
            res.obs.text = "You turn on the " + ns.lamp_id + ".";
            if (ns.holding && task.task_type == TaskType::Examine) {
                HouseObject* o = find_object_mut(ns, *ns.holding);
                if (o->type == task.goal.object_type) o->examined = true;
            }
            break;
        }
        default:
            return nothing();  // shopping verbs do nothing in the house
    }

    if (house_goal_done(task, ns)) {
        res.done = true;
        res.reward = 1.0;
    }
    return res;
}

Task generate_house_task(TaskType type, uint64_t seed) {
    Rng rng(mix64(seed, static_cast<uint64_t>(type) + 0x5eedull));

    HouseState st;
    for (const auto& spec : kFixedReceps)
        st.receptacles.push_back({spec.id, spec.type, spec.openable, !spec.openable});
    std::vector<RecepSpec> extras(std::begin(kExtraReceps), std::end(kExtraReceps));
    int n_extra = rng.range(2, 8);
    rng.shuffle(extras);
    for (int i = 0; i < n_extra; ++i)
        st.receptacles.push_back({extras[i].id, extras[i].type, extras[i].openable,
                                  !extras[i].openable});
    rng.shuffle(st.receptacles);  // canonical search order varies per seed

    st.lamp_id = "desklamp 1";
    st.lamp_location = "desk 1";

    int n_obj = rng.range(10, 20);
    std::map<std::string, int> counts;
    for (int i = 0; i < n_obj; ++i) {
        std::string t = kObjectTypes[rng.below(std::size(kObjectTypes))];
        int n = ++counts[t];
        std::string recep = st.receptacles[rng.below(st.receptacles.size())].id;
        st.objects.push_back({t + " " + std::to_string(n), t, recep});
    }

    // Goal object type, constrained by what the task verb can act on.
    const std::vector<std::string>* eligible = nullptr;
    switch (type) {
        case TaskType::Clean: eligible = &kCleanable; break;
        case TaskType::Heat: eligible = &kHeatable; break;
        case TaskType::Cool: eligible = &kCoolable; break;
        case TaskType::Examine: eligible = &kExaminable; break;
        default: break;
    }
    std::string goal_type;
    if (eligible) {
        goal_type = rng.pick(*eligible);
    } else {
        goal_type = kObjectTypes[rng.below(std::size(kObjectTypes))];
    }

    std::vector<std::string> target_pool;
    for (const auto& r : st.receptacles)
        if (target_eligible(r)) target_pool.push_back(r.id);
    // Examine has no placement goal; its nominal target (used only to keep
    // GoTarget groundable) is pinned to the first eligible receptacle so it
    // can be rederived from the serialized state.
    std::string target = type == TaskType::Examine ? target_pool.front() : rng.pick(target_pool);

    // Make sure the needed instances exist and do not start on the target.
    auto place_off_target = [&]() {
        std::vector<std::string> pool;
        for (const auto& r : st.receptacles)
            if (r.id != target) pool.push_back(r.id);
        return rng.pick(pool);
    };
    int want = type == TaskType::PutTwo ? 2 : 1;
    int have = 0;
    for (auto& o : st.objects) {
        if (o.type != goal_type) continue;
        if (have < want) {
            if (o.location == target) o.location = place_off_target();
            ++have;
        }
    }
    while (have < want) {
        int n = ++counts[goal_type];
        st.objects.push_back({goal_type + " " + std::to_string(n), goal_type, place_off_target()});
        ++have;
    }

    Task task;
    task.env_kind = EnvKind::MiniHouse;
    task.task_type = type;
    task.seed = seed;
    task.goal.object_type = goal_type;
    task.goal.target_recep = target;
    switch (type) {
        case TaskType::Put: task.goal_text = "put a " + goal_type + " in/on " + target; break;
        case TaskType::Clean: task.goal_text = "put a clean " + goal_type + " in/on " + target; break;
        case TaskType::Heat: task.goal_text = "put a hot " + goal_type + " in/on " + target; break;
        case TaskType::Cool: task.goal_text = "put a cool " + goal_type + " in/on " + target; break;
        case TaskType::Examine:
            task.goal_text = "examine the " + goal_type + " with the desklamp";
            break;
        case TaskType::PutTwo: task.goal_text = "put two " + goal_type + " in/on " + target; break;
        default: throw ContractError("generate_house_task: bad task type");
    }
    std::ostringstream id;
    id << "mh-" << lower(to_string(type)) << "-" << seed;
    task.id = id.str();
    task.initial_state = st;
    return task;
}

}  // namespace knowself::detail
