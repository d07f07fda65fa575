#include "knowself/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace knowself {

namespace {

Json house_to_json(const HouseState& st) {
    Json receps = Json::array();
    for (const auto& r : st.receptacles)
        receps.push_back({{"id", r.id}, {"type", r.type}, {"openable", r.openable},
                          {"open", r.open}});
    Json objs = Json::array();
    for (const auto& o : st.objects) {
        Json jo = {{"id", o.id}, {"type", o.type}, {"location", o.location}};
        Json props = Json::object();
        props["clean"] = o.clean;
        props["hot"] = o.hot;
        props["cold"] = o.cold;
        props["examined"] = o.examined;
        jo["properties"] = props;
        objs.push_back(jo);
    }
    Json j;
    j["receptacles"] = receps;
    j["objects"] = objs;
    Json agent;
    agent["location"] = st.agent_location;
    if (st.holding) agent["holding"] = *st.holding;
    j["agent"] = agent;
    j["lamp"] = {{"id", st.lamp_id}, {"location", st.lamp_location}};
    return j;
}

HouseState house_from_json(const Json& j) {
    HouseState st;
    for (const auto& r : j.at("receptacles"))
        st.receptacles.push_back({r.at("id"), r.at("type"), r.at("openable"), r.at("open")});
    for (const auto& o : j.at("objects")) {
        HouseObject obj;
        obj.id = o.at("id");
        obj.type = o.at("type");
        obj.location = o.at("location");
        const auto& p = o.at("properties");
        obj.clean = p.at("clean");
        obj.hot = p.at("hot");
        obj.cold = p.at("cold");
        obj.examined = p.at("examined");
        st.objects.push_back(obj);
    }
    st.agent_location = j.at("agent").at("location");
    if (j.at("agent").contains("holding")) st.holding = j.at("agent").at("holding");
    st.lamp_id = j.at("lamp").at("id");
    st.lamp_location = j.at("lamp").at("location");
    return st;
}

Json shop_to_json(const ShopState& st) {
    Json items = Json::array();
    for (const auto& it : st.catalog) {
        Json ji;
        ji["id"] = it.id;
        ji["title"] = it.title;
        ji["product"] = it.product;
        ji["inherent"] = it.inherent;
        ji["options"] = it.options;
        ji["price"] = it.price;
        items.push_back(ji);
    }
    Json j;
    j["catalog"] = items;
    j["page"] = static_cast<int>(st.page);
    j["query"] = st.query;
    j["results"] = st.results;
    j["current_item"] = st.current_item;
    j["selected"] = st.selected;
    j["bought"] = st.bought;
    return j;
}

ShopState shop_from_json(const Json& j) {
    ShopState st;
    for (const auto& ji : j.at("catalog")) {
        ShopItem it;
        it.id = ji.at("id");
        it.title = ji.at("title");
        it.product = ji.at("product");
        it.inherent = ji.at("inherent").get<std::map<std::string, std::string>>();
        it.options = ji.at("options").get<std::map<std::string, std::vector<std::string>>>();
        it.price = ji.at("price");
        st.catalog.push_back(it);
    }
    st.page = static_cast<ShopPage>(j.at("page").get<int>());
    st.query = j.at("query");
    st.results = j.at("results").get<std::vector<std::string>>();
    st.current_item = j.at("current_item");
    st.selected = j.at("selected").get<std::map<std::string, std::string>>();
    st.bought = j.at("bought");
    return st;
}

}  // namespace

Json task_to_json(const Task& t) {
    Json j;
    j["id"] = t.id;
    j["env_kind"] = to_string(t.env_kind);
    j["task_type"] = to_string(t.task_type);
    j["goal_text"] = t.goal_text;
    j["seed"] = t.seed;
    j["initial_state"] = t.env_kind == EnvKind::MiniHouse
                             ? house_to_json(std::get<HouseState>(t.initial_state))
                             : shop_to_json(std::get<ShopState>(t.initial_state));
    return j;
}

Task task_from_json(const Json& j) {
    Task t;
    t.id = j.at("id");
    t.env_kind = env_kind_from_string(j.at("env_kind").get<std::string>());
    t.task_type = task_type_from_string(j.at("task_type").get<std::string>());
    t.goal_text = j.at("goal_text");
    t.seed = j.at("seed");
    if (t.env_kind == EnvKind::MiniHouse)
        t.initial_state = house_from_json(j.at("initial_state"));
    else
        t.initial_state = shop_from_json(j.at("initial_state"));
    t.goal = parse_goal_text(t.env_kind, t.task_type, t.goal_text, t.initial_state);
    return t;
}

Json trajectory_to_json(const Trajectory& t) {
    Json steps = Json::array();
    for (const auto& s : t.steps)
        steps.push_back({{"action", action_text(s.action)}, {"observation", s.obs.text}});
    Json j;
    j["task_id"] = t.task_id;
    j["steps"] = steps;
    j["reward"] = t.reward;
    return j;
}

Json kb_to_json(const KnowledgeBase& kb) {
    Json entries = Json::array();
    for (const auto& e : kb.entries) {
        Json je;
        je["id"] = e.id;
        je["rule_text"] = e.rule_text;
        je["kind"] = to_string(e.kind);
        je["condition_key"] = {{"task_type", to_string(e.condition_key.task_type)},
                               {"phase", to_string(e.condition_key.phase)},
                               {"holding", to_string(e.condition_key.holding)}};
        je["advice_action_class"] = e.advice_class;
        je["example"] = e.example;
        je["task_id"] = e.task_id;
        entries.push_back(je);
    }
    Json j;
    j["cap"] = kb.cap;
    j["entries"] = entries;
    return j;
}

KnowledgeBase kb_from_json(const Json& j) {
    KnowledgeBase kb;
    kb.cap = j.at("cap");
    for (const auto& je : j.at("entries")) {
        KnowledgeEntry e;
        e.id = je.at("id");
        e.rule_text = je.at("rule_text");
        e.kind = rule_kind_from_string(je.at("kind").get<std::string>());
        const auto& ck = je.at("condition_key");
        e.condition_key.task_type = task_type_from_string(ck.at("task_type").get<std::string>());
        e.condition_key.phase = phase_from_string(ck.at("phase").get<std::string>());
        e.condition_key.holding =
            holding_class_from_string(ck.at("holding").get<std::string>());
        e.advice_class = je.at("advice_action_class");
        e.example = je.at("example");
        e.task_id = je.at("task_id");
        kb.entries.push_back(e);
    }
    return kb;
}

Json step_pair_to_json(const StepPair& p) {
    Json j;
    j["task_id"] = p.task_id;
    j["step"] = p.step;
    j["history_digest"] = hex64(history_digest(p.history));
    j["win"] = action_text(p.win);
    j["loss"] = action_text(p.loss);
    return j;
}

Json self_sample_to_json(const SelfAwareSample& s) {
    Json j;
    j["task_id"] = s.task_id;
    j["step"] = s.step;
    j["history_digest"] = hex64(history_digest(s.history));
    j["label"] = to_string(s.label);
    j["canonical_text"] = s.canonical_text;
    if (s.output.knowledge) j["knowledge_id"] = s.output.knowledge->entry_id;
    return j;
}

Json pair_sample_to_json(const PairSample& p) {
    Json j;
    j["task_id"] = p.task_id;
    j["step"] = p.step;
    j["chosen_text"] = render(p.chosen);
    j["rejected_text"] = render(p.rejected);
    return j;
}

History history_at(const std::shared_ptr<const Task>& task, int step) {
    Session s(task);
    History h(task);
    for (int i = 0; i < step; ++i) {
        Action a = gold_action(s);
        Observation o = s.apply(a);
        h.append(a, o);
    }
    return h;
}

namespace {

Situation situation_from_string(std::string_view s) {
    if (s == "Fast") return Situation::Fast;
    if (s == "Slow") return Situation::Slow;
    if (s == "Knowledgeable") return Situation::Knowledgeable;
    throw ArtifactError("bad situation: " + std::string(s));
}

std::shared_ptr<const Task> lookup_task(
    const std::map<std::string, std::shared_ptr<const Task>>& tasks, const std::string& id) {
    auto it = tasks.find(id);
    if (it == tasks.end()) throw ArtifactError("record references unknown task " + id);
    return it->second;
}

}  // namespace

SelfAwareSample self_sample_from_json(
    const Json& j, const std::map<std::string, std::shared_ptr<const Task>>& tasks,
    const KnowledgeBase* kb) {
    SelfAwareSample s;
    s.task_id = j.at("task_id");
    s.step = j.at("step");
    s.history = history_at(lookup_task(tasks, s.task_id), s.step);
    if (hex64(history_digest(s.history)) != j.at("history_digest").get<std::string>())
        throw ArtifactError("history digest mismatch for " + s.task_id + " step " +
                            std::to_string(s.step));
    s.canonical_text = j.at("canonical_text");
    s.output = parse_output(s.canonical_text, kb);
    s.label = situation_from_string(j.at("label").get<std::string>());
    if (s.label != s.output.situation)
        throw ArtifactError("label does not match rendered output for " + s.task_id);
    return s;
}

PairSample pair_sample_from_json(const Json& j,
                                 const std::map<std::string, std::shared_ptr<const Task>>& tasks,
                                 const KnowledgeBase* kb) {
    PairSample p;
    p.task_id = j.at("task_id");
    p.step = j.at("step");
    p.history = history_at(lookup_task(tasks, p.task_id), p.step);
    p.chosen = parse_output(j.at("chosen_text").get<std::string>(), kb);
    p.rejected = parse_output(j.at("rejected_text").get<std::string>(), kb);
    return p;
}

Json episode_to_json(const EpisodeResult& e) {
    Json steps = Json::array();
    for (const auto& s : e.trace) {
        Json js;
        js["action"] = action_text(s.committed);
        js["situation"] = to_string(s.situation);
        js["reflected"] = s.reflected;
        if (s.knowledge_used) js["knowledge_used"] = *s.knowledge_used;
        js["output"] = s.rendered;
        js["observation"] = s.observation;
        steps.push_back(js);
    }
    Json j;
    j["task_id"] = e.task_id;
    j["reward"] = e.reward;
    j["steps"] = e.steps;
    j["knowledge_steps"] = e.knowledge_steps;
    j["reflection_steps"] = e.reflection_steps;
    if (e.error) j["error"] = *e.error;
    j["trace"] = steps;
    return j;
}

Json report_to_json(const EvalReport& r, const std::string& episodes_path) {
    Json per_type = Json::object();
    for (const auto& [type, avg] : r.per_type)
        per_type[to_string(type)] = format_fixed(100.0 * avg, 2);
    Json j;
    j["mode"] = r.mode;
    j["per_type"] = per_type;
    j["all"] = format_fixed(100.0 * r.all, 2);
    j["know_pct"] = format_fixed(r.know_pct, 2);
    j["refl_pct"] = format_fixed(r.refl_pct, 2);
    j["total_steps"] = r.total_steps;
    j["episodes"] = episodes_path;
    return j;
}

// ---------------------------------------------------------------- params

namespace {

std::string matrix_b64(const Matrix& m) {
    return base64_encode(reinterpret_cast<const unsigned char*>(m.data.data()),
                         m.data.size() * sizeof(double));
}

Matrix matrix_from(const Json& j) {
    Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
    auto bytes = base64_decode(j.at("data").get<std::string>());
    if (bytes.size() != m.data.size() * sizeof(double))
        throw ArtifactError("slot payload size mismatch");
    std::memcpy(m.data.data(), bytes.data(), bytes.size());
    return m;
}

Json slot_json(const char* name, const Matrix& m) {
    return {{"name", name}, {"rows", m.rows}, {"cols", m.cols}, {"data", matrix_b64(m)}};
}

}  // namespace

Json params_to_json(const PolicyParams& p) {
    Json j;
    j["version"] = p.version;
    j["env_kind"] = to_string(p.grammar.kind);
    j["grammar_hash"] = hex64(p.grammar.hash());
    j["slots"] = Json::array({slot_json("act", p.act), slot_json("cont", p.cont),
                              slot_json("tmpl", p.tmpl), slot_json("know", p.know)});
    return j;
}

PolicyParams params_from_json(const Json& j) {
    EnvKind kind = env_kind_from_string(j.at("env_kind").get<std::string>());
    PolicyParams p = zero_params(kind);
    p.version = j.at("version");
    if (j.at("grammar_hash").get<std::string>() != hex64(p.grammar.hash()))
        throw ArtifactError("params were written for a different grammar");
    for (const auto& js : j.at("slots")) {
        std::string name = js.at("name");
        Matrix m = matrix_from(js);
        Matrix* dst = name == "act" ? &p.act : name == "cont" ? &p.cont
                      : name == "tmpl" ? &p.tmpl : name == "know" ? &p.know : nullptr;
        if (!dst) throw ArtifactError("unknown slot " + name);
        if (m.rows != dst->rows || m.cols != dst->cols)
            throw ArtifactError("slot " + name + " has the wrong shape");
        *dst = std::move(m);
    }
    return p;
}

// ------------------------------------------------------------------ files

void write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArtifactError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw ArtifactError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("missing artifact: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const std::filesystem::path& path, const Json& j) {
    write_text(path, j.dump(2) + "\n");
}

Json read_json(const std::filesystem::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ArtifactError("corrupt JSON in " + path.string() + ": " + e.what());
    }
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump() + "\n";
    write_text(path, out);
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::vector<Json> rows;
    std::istringstream in(read_text(path));
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(Json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ArtifactError("corrupt JSONL at " + path.string() + ":" +
                                std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

uint64_t file_digest(const std::filesystem::path& path) { return fnv1a(read_text(path)); }

}  // namespace knowself
