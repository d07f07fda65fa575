#include "env_detail.hpp"
#include "knowself/policy.hpp"

namespace knowself {

using namespace detail;

namespace {

constexpr int kHouseMoves = static_cast<int>(HouseMove::Count);
constexpr int kShopMoves = static_cast<int>(ShopMove::Count);

// House layout. Offsets are compile-time constants so the trainer's
// finite-difference harness sees a fixed dimension per environment.
// The policy reads a deliberately compact sketch of the history: it keeps
// the task, a coarse subgoal phase, location class, and the last
// observation, but does not track per-object processing state. The
// knowledge module's condition keys are finer (they replay the history), so
// selected rules can disambiguate states this sketch aliases.
namespace hf {
constexpr int bias = 0;
constexpr int task = 1;        // 6
constexpr int phase = 7;       // seeking, holding, at-target
constexpr int loc = 10;        // start, target, appliance, seen-obj, other
constexpr int closed = 15;
constexpr int visible_here = 16;
constexpr int known_elsewhere = 17;
constexpr int holding = 18;    // none, goal, other
constexpr int lastobs = 21;    // nothing, revealed-needed, closed, other
constexpr int refl = 25;
constexpr int emitted = 26;    // kHouseMoves
constexpr int know = emitted + kHouseMoves;          // 38
constexpr int advice = know + 1;                     // 39, kHouseMoves wide
constexpr int know_kind = advice + kHouseMoves;      // 51
constexpr int dim = know_kind + 1;                   // 52
}  // namespace hf

namespace sf {
constexpr int bias = 0;
constexpr int task = 1;
constexpr int page = 2;        // start, results, item
constexpr int price_ok = 5;
constexpr int bought = 6;
constexpr int lastobs = 7;     // nothing, listing, other
constexpr int refl = 10;
constexpr int emitted = 11;    // kShopMoves
constexpr int know = emitted + kShopMoves;        // 18
constexpr int advice = know + 1;                  // 19
constexpr int know_kind = advice + kShopMoves;    // 26
constexpr int dim = know_kind + 1;                // 27
}  // namespace sf

void house_features(const Session& s, const SlotContext& ctx, std::vector<int>& out) {
    const Task& task = s.task();
    const auto& st = std::get<HouseState>(s.state());

    out.push_back(hf::bias);
    out.push_back(hf::task + static_cast<int>(task.task_type));

    if (ctx.refl_context) {
        // The revision decision conditions on what was emitted, not on the
        // state sketch; state evidence stays with the first decision.
        out.push_back(hf::refl);
        if (ctx.emitted && *ctx.emitted >= 0 && *ctx.emitted < kHouseMoves)
            out.push_back(hf::emitted + *ctx.emitted);
        return;
    }
    if (ctx.injected) {
        // The post-knowledge decision reads the injected rule, nothing else:
        // the selected advice already encodes the state summary. Even the
        // task/bias features stay out, so rows that only appear in supports
        // where they tend to be right cannot accumulate free mass.
        if (ctx.injected->advice_class >= 0 && ctx.injected->advice_class < kHouseMoves)
            out.push_back(hf::advice + ctx.injected->advice_class);
        else
            out.push_back(hf::know);
        if (ctx.injected->kind == RuleKind::SuccessProcess) out.push_back(hf::know_kind);
        return;
    }

    Phase phase = phase_of(s);
    int phase3 = phase == Phase::Seeking ? 0 : phase == Phase::AtTarget ? 2 : 1;
    out.push_back(hf::phase + phase3);

    const std::string& here = st.agent_location;
    auto needed = needed_objects(task, st);
    bool visible_here = false;
    bool known_elsewhere = false;
    bool known_here = false;
    const HouseRecep* r = here != "start" ? find_recep(st, here) : nullptr;
    for (const auto* o : needed) {
        if (o->location == here && r && contents_visible(*r)) visible_here = true;
        auto it = s.seen_objects().find(o->id);
        if (it != s.seen_objects().end()) {
            if (it->second == here) known_here = true;
            else known_elsewhere = true;
        }
    }

    int loc_class;
    if (here == "start") loc_class = 0;
    else if (here == task.goal.target_recep) loc_class = 1;
    else if (here == appliance_recep(task, st)) loc_class = 2;
    else if (known_here || visible_here) loc_class = 3;
    else loc_class = 4;
    out.push_back(hf::loc + loc_class);

    if (r && !contents_visible(*r)) out.push_back(hf::closed);
    if (visible_here) out.push_back(hf::visible_here);
    if (known_elsewhere) out.push_back(hf::known_elsewhere);

    int holding_class = 0;
    if (st.holding) {
        const HouseObject* held = find_object(st, *st.holding);
        holding_class = held && held->type == task.goal.object_type ? 1 : 2;
    }
    out.push_back(hf::holding + holding_class);

    const Observation& last = s.last_obs();
    int obs_class = 3;
    if (last.text == kNothingHappens) obs_class = 0;
    else if (last.text.size() > 10 && last.text.substr(last.text.size() - 10) == "is closed.")
        obs_class = 2;
    else {
        for (const auto* o : needed)
            for (const auto& id : last.revealed)
                if (id == o->id) obs_class = 1;
    }
    out.push_back(hf::lastobs + obs_class);

    if (ctx.emitted && *ctx.emitted >= 0 && *ctx.emitted < kHouseMoves)
        out.push_back(hf::emitted + *ctx.emitted);
}

void shop_features(const Session& s, const SlotContext& ctx, std::vector<int>& out) {
    const Task& task = s.task();
    const auto& st = std::get<ShopState>(s.state());

    out.push_back(sf::bias);
    out.push_back(sf::task);

    if (ctx.refl_context) {
        out.push_back(sf::refl);
        if (ctx.emitted && *ctx.emitted >= 0 && *ctx.emitted < kShopMoves)
            out.push_back(sf::emitted + *ctx.emitted);
        return;
    }
    if (ctx.injected) {
        if (ctx.injected->advice_class >= 0 && ctx.injected->advice_class < kShopMoves)
            out.push_back(sf::advice + ctx.injected->advice_class);
        else
            out.push_back(sf::know);
        if (ctx.injected->kind == RuleKind::SuccessProcess) out.push_back(sf::know_kind);
        return;
    }

    out.push_back(sf::page + static_cast<int>(st.page));
    if (st.page == ShopPage::Item) {
        const ShopItem* it = find_item(st, st.current_item);
        if (it && it->price <= task.goal.price_cap) out.push_back(sf::price_ok);
    }
    if (st.bought) out.push_back(sf::bought);

    const Observation& last = s.last_obs();
    int obs_class = 2;
    if (last.text == kNothingHappens) obs_class = 0;
    else if (!last.revealed.empty()) obs_class = 1;
    out.push_back(sf::lastobs + obs_class);

    if (ctx.emitted && *ctx.emitted >= 0 && *ctx.emitted < kShopMoves)
        out.push_back(sf::emitted + *ctx.emitted);
}

}  // namespace

Grammar grammar_for(EnvKind kind) {
    Grammar g;
    g.kind = kind;
    g.moves = move_count(kind);
    g.feature_dim = kind == EnvKind::MiniHouse ? hf::dim : sf::dim;
    return g;
}

std::vector<int> features(const Session& s, const SlotContext& ctx) {
    std::vector<int> out;
    out.reserve(12);
    if (s.task().env_kind == EnvKind::MiniHouse) house_features(s, ctx, out);
    else shop_features(s, ctx, out);
    return out;
}

}  // namespace knowself
