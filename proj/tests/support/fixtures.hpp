#pragma once

// Shared test fixtures.

#include "knowself/env.hpp"

namespace knowself::testing {

// A history whose next decision offers exactly nine first-slot options under
// NoRefl (eight groundable actions plus KNOW): a PutTwo search where one
// needed object sits on the lamp's desk, another was sighted elsewhere and
// left in place, and the go-to moves land on distinct receptacles.
inline History nine_option_history() {
    for (uint64_t seed = 0; seed < 4000; ++seed) {
        Task t = generate_task(EnvKind::MiniHouse, TaskType::PutTwo, seed);
        const auto& st = std::get<HouseState>(t.initial_state);
        const HouseObject* on_desk = nullptr;
        const HouseObject* elsewhere = nullptr;
        for (const auto& o : st.objects) {
            if (o.type != t.goal.object_type) continue;
            if (o.location == "desk 1") on_desk = &o;
        }
        if (!on_desk) continue;
        for (const auto& o : st.objects) {
            if (o.type != t.goal.object_type || o.id == on_desk->id) continue;
            const HouseRecep* r = nullptr;
            for (const auto& rec : st.receptacles)
                if (rec.id == o.location) r = &rec;
            if (!r || r->openable) continue;
            if (r->id == "desk 1" || r->id == t.goal.target_recep) continue;
            elsewhere = &o;
        }
        if (!elsewhere) continue;

        auto tp = std::make_shared<Task>(t);
        Session s(tp);
        History h(tp);
        for (const std::string& dest : {elsewhere->location, std::string("desk 1")}) {
            Action a{Verb::GoTo, {dest}};
            Observation o = s.apply(a);
            h.append(a, o);
        }
        if (decision_support(s).size() == 8) return h;
    }
    throw ContractError("no nine-option state found");
}

}  // namespace knowself::testing
