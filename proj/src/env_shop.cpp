#include <algorithm>
#include <cmath>
#include <sstream>

#include "env_detail.hpp"

namespace knowself::detail {

namespace {

const char* kProducts[] = {"shirt",  "mug",     "lamp",   "backpack", "shoes",
                           "jacket", "kettle",  "blanket", "headphones", "wallet"};
const std::vector<std::string> kColors = {"red", "blue", "black", "green", "white", "yellow"};
const std::vector<std::string> kSizes = {"small", "medium", "large"};
const std::vector<std::string> kMaterials = {"cotton", "leather", "wool", "steel", "ceramic", "canvas"};

std::string money(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
}

std::vector<std::string> query_terms(const std::string& query) {
    std::vector<std::string> terms;
    for (auto& t : split(query, ' '))
        if (!t.empty()) terms.push_back(t);
    return terms;
}

bool item_mentions(const ShopItem& item, const std::string& term) {
    if (item.product == term) return true;
    for (const auto& [group, value] : item.inherent)
        if (value == term) return true;
    for (const auto& [group, values] : item.options)
        if (std::find(values.begin(), values.end(), term) != values.end()) return true;
    return false;
}

}  // namespace

std::optional<std::string> attr_group_of(const std::string& value) {
    auto has = [&](const std::vector<std::string>& pool) {
        return std::find(pool.begin(), pool.end(), value) != pool.end();
    };
    if (has(kColors)) return "color";
    if (has(kSizes)) return "size";
    if (has(kMaterials)) return "material";
    return std::nullopt;
}

const ShopItem* find_item(const ShopState& st, const std::string& id) {
    for (const auto& it : st.catalog)
        if (it.id == id) return &it;
    return nullptr;
}

std::string full_query(const GoalSpec& g) {
    std::string q;
    for (const auto& [group, value] : g.required_attrs) q += value + " ";
    return q + g.product;
}

std::string loose_query(const GoalSpec& g) { return g.product; }

std::vector<std::string> rank_items(const ShopState& st, const std::string& query) {
    auto terms = query_terms(query);
    std::vector<std::pair<int, const ShopItem*>> scored;
    for (const auto& it : st.catalog) {
        int s = 0;
        for (const auto& t : terms)
            if (item_mentions(it, t)) ++s;
        scored.push_back({s, &it});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        if (a.second->price != b.second->price) return a.second->price < b.second->price;
        return a.second->id < b.second->id;
    });
    std::vector<std::string> ids;
    for (size_t i = 0; i < scored.size() && i < 10; ++i) ids.push_back(scored[i].second->id);
    return ids;
}

std::vector<std::pair<std::string, std::string>> unmet_attrs(const GoalSpec& g, const ShopState& st) {
    std::vector<std::pair<std::string, std::string>> out;
    const ShopItem* item = find_item(st, st.current_item);
    if (!item) return out;
    for (const auto& [group, value] : g.required_attrs) {
        auto inh = item->inherent.find(group);
        if (inh != item->inherent.end() && inh->second == value) continue;
        auto sel = st.selected.find(group);
        if (sel != st.selected.end() && sel->second == value) continue;
        auto opt = item->options.find(group);
        if (opt == item->options.end()) continue;  // cannot be fixed by clicking
        if (std::find(opt->second.begin(), opt->second.end(), value) == opt->second.end()) continue;
        out.push_back({group, value});
    }
    return out;
}

double purchase_reward(const GoalSpec& g, const ShopState& st) {
    const ShopItem* item = find_item(st, st.current_item);
    if (!item || g.required_attrs.empty()) return 0.0;
    int matched = 0;
    for (const auto& [group, value] : g.required_attrs) {
        auto inh = item->inherent.find(group);
        if (inh != item->inherent.end() && inh->second == value) {
            ++matched;
            continue;
        }
        auto sel = st.selected.find(group);
        if (sel != st.selected.end() && sel->second == value) ++matched;
    }
    double frac = static_cast<double>(matched) / static_cast<double>(g.required_attrs.size());
    double price_factor = item->price <= g.price_cap ? 1.0 : 0.5;
    return frac * price_factor;
}

Observation shop_observe(const Task& task, const ShopState& st) {
    Observation obs;
    std::ostringstream t;
    switch (st.page) {
        case ShopPage::Start:
            t << "Instruction: " << task.goal_text << " [SEP] Search";
            break;
        case ShopPage::Results: {
            t << "Instruction: " << task.goal_text << " [SEP] Page 1";
            for (const auto& id : st.results) {
                const ShopItem* it = find_item(st, id);
                t << " [SEP] " << id << " [SEP] " << it->title << " [SEP] $" << money(it->price);
                obs.revealed.push_back(id);
            }
            break;
        }
        case ShopPage::Item: {
            const ShopItem* it = find_item(st, st.current_item);
            t << it->id << " [SEP] " << it->title << " [SEP] Price: $" << money(it->price);
            for (const auto& [group, values] : it->options) {
                t << " [SEP] " << group;
                for (const auto& v : values) {
                    t << " [SEP] " << v;
                    auto sel = st.selected.find(group);
                    if (sel != st.selected.end() && sel->second == v) t << " (selected)";
                }
            }
            t << " [SEP] Buy Now";
            obs.revealed.push_back(it->id);
            break;
        }
    }
    obs.text = t.str();
    return obs;
}

StepResult shop_step(const Task& task, const ShopState& st, const Action& a) {
    StepResult res;
    res.state = st;
    ShopState& ns = std::get<ShopState>(res.state);

    auto nothing = [&]() {
        res.state = st;
        res.obs = Observation{kNothingHappens, {}};
        return res;
    };
    if (st.bought) return nothing();

    switch (a.verb) {
        case Verb::Search: {
            if (a.args.size() != 1 || a.args[0].empty()) return nothing();
            ns.query = a.args[0];
            ns.results = rank_items(ns, ns.query);
            ns.page = ShopPage::Results;
            ns.current_item.clear();
            ns.selected.clear();
            res.obs = shop_observe(task, ns);
            return res;
        }
        case Verb::Click: {
            if (a.args.size() != 1) return nothing();
            const std::string& arg = a.args[0];
            if (arg == "back to search") {
                ns.page = ShopPage::Start;
                ns.current_item.clear();
                ns.selected.clear();
                res.obs = shop_observe(task, ns);
                return res;
            }
            if (ns.page == ShopPage::Results) {
                if (std::find(ns.results.begin(), ns.results.end(), arg) == ns.results.end())
                    return nothing();
                ns.current_item = arg;
                ns.selected.clear();
                ns.page = ShopPage::Item;
                res.obs = shop_observe(task, ns);
                return res;
            }
            if (ns.page == ShopPage::Item) {
                const ShopItem* it = find_item(ns, ns.current_item);
                for (const auto& [group, values] : it->options) {
                    if (std::find(values.begin(), values.end(), arg) != values.end()) {
                        ns.selected[group] = arg;
                        res.obs = shop_observe(task, ns);
                        return res;
                    }
                }
                return nothing();
            }
            return nothing();
        }
        case Verb::Buy: {
            if (ns.page != ShopPage::Item) return nothing();
            ns.bought = true;
            res.done = true;
            res.reward = purchase_reward(task.goal, ns);
            res.obs.text = "Your order has been placed. Thank you for shopping!";
            return res;
        }
        default:
            return nothing();  // household verbs do nothing in the shop
    }
}

Task generate_shop_task(uint64_t seed) {
    Rng rng(mix64(seed, 0x5a0bull));

    GoalSpec goal;
    goal.product = kProducts[rng.below(std::size(kProducts))];
    std::string goal_color = rng.pick(kColors);
    std::string goal_size = rng.pick(kSizes);
    std::string goal_material = rng.pick(kMaterials);
    goal.required_attrs.push_back({"color", goal_color});
    goal.required_attrs.push_back({"size", goal_size});
    bool want_material = rng.below(2) == 0;
    if (want_material) goal.required_attrs.push_back({"material", goal_material});
    goal.price_cap = 10.0 * rng.range(2, 9);

    ShopState st;
    auto pick_other = [&](const std::vector<std::string>& pool, const std::string& not_this) {
        for (;;) {
            const std::string& v = pool[rng.below(pool.size())];
            if (v != not_this) return v;
        }
    };
    auto make_item = [&](int idx, const std::string& product, const std::string& color,
                         const std::string& size, const std::string& material, double price) {
        ShopItem it;
        char id[16];
        std::snprintf(id, sizeof(id), "B%03d", idx);
        it.id = id;
        it.product = product;
        it.inherent["material"] = material;
        it.options["color"] = {color, pick_other(kColors, color), pick_other(kColors, color)};
        it.options["size"] = {size, pick_other(kSizes, size)};
        it.price = std::floor(price * 100.0 + 0.5) / 100.0;
        it.title = color + " " + size + " " + material + " " + product;
        return it;
    };

    // Item 0 is the designed match: every required attribute reachable, price
    // under the cap. Distractors miss an attribute, overprice, or are a
    // different product entirely.
    st.catalog.push_back(make_item(0, goal.product, goal_color, goal_size, goal_material,
                                   goal.price_cap * (0.5 + 0.4 * rng.uniform())));
    st.catalog.push_back(make_item(1, goal.product, pick_other(kColors, goal_color), goal_size,
                                   goal_material, goal.price_cap * (0.3 + 0.3 * rng.uniform())));
    st.catalog.push_back(make_item(2, goal.product, goal_color,
                                   pick_other(kSizes, goal_size),
                                   pick_other(kMaterials, goal_material),
                                   goal.price_cap * (0.4 + 0.4 * rng.uniform())));
    st.catalog.push_back(make_item(3, goal.product, goal_color, goal_size, goal_material,
                                   goal.price_cap * (1.1 + 0.5 * rng.uniform())));
    for (int i = 4; i < 12; ++i) {
        std::string product = kProducts[rng.below(std::size(kProducts))];
        if (product == goal.product) product = pick_other({std::begin(kProducts), std::end(kProducts)}, goal.product);
        st.catalog.push_back(make_item(i, product, rng.pick(kColors), rng.pick(kSizes),
                                       rng.pick(kMaterials), 5.0 + 90.0 * rng.uniform()));
    }

    Task task;
    task.env_kind = EnvKind::MiniShop;
    task.task_type = TaskType::Purchase;
    task.seed = seed;
    task.goal = goal;
    std::string attrs;
    for (const auto& [group, value] : goal.required_attrs) attrs += value + " ";
    std::ostringstream gt;
    gt << "i am looking for a " << attrs << goal.product << ", and price lower than "
       << static_cast<int>(goal.price_cap) << " dollars";
    task.goal_text = gt.str();
    task.id = "ms-purchase-" + std::to_string(seed);
    task.initial_state = st;
    return task;
}

}  // namespace knowself::detail
