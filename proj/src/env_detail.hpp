#pragma once

// Internal helpers shared between the environment translation units.

#include <algorithm>

#include "knowself/env.hpp"

namespace knowself::detail {

// ---- MiniHouse ----

const HouseRecep* find_recep(const HouseState& st, const std::string& id);
const HouseObject* find_object(const HouseState& st, const std::string& id);
HouseObject* find_object_mut(HouseState& st, const std::string& id);
bool contents_visible(const HouseRecep& r);
std::vector<const HouseObject*> objects_at(const HouseState& st, const std::string& recep);

// The receptacle the task's process step happens at. Put/PutTwo fall back to
// the sink so the decision stays groundable (and a plausible wrong move).
std::string appliance_recep(const Task& task, const HouseState& st);

bool object_processed(const Task& task, const HouseObject& o);
bool object_satisfied(const Task& task, const HouseObject& o);
// Goal-type instances still requiring work, excluding the held one.
std::vector<const HouseObject*> needed_objects(const Task& task, const HouseState& st);
bool house_goal_done(const Task& task, const HouseState& st);

Observation house_observe(const Task& task, const HouseState& st, bool arrival);
StepResult house_step(const Task& task, const HouseState& st, const Action& a);
Task generate_house_task(TaskType type, uint64_t seed);
std::string first_eligible_target(const HouseState& st);

// ---- MiniShop ----

const ShopItem* find_item(const ShopState& st, const std::string& id);
std::string full_query(const GoalSpec& g);
std::string loose_query(const GoalSpec& g);
std::vector<std::string> rank_items(const ShopState& st, const std::string& query);
// Required attrs not yet satisfied on the current item page, in goal order.
std::vector<std::pair<std::string, std::string>> unmet_attrs(const GoalSpec& g, const ShopState& st);
double purchase_reward(const GoalSpec& g, const ShopState& st);

Observation shop_observe(const Task& task, const ShopState& st);
StepResult shop_step(const Task& task, const ShopState& st, const Action& a);
Task generate_shop_task(uint64_t seed);
std::optional<std::string> attr_group_of(const std::string& value);

}  // namespace knowself::detail
