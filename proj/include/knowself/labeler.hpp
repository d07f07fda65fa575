#pragma once

#include "knowself/policy.hpp"

namespace knowself {

struct ParseError : ContractError {
    explicit ParseError(const std::string& msg) : ContractError(msg) {}
};

struct SelfAwareSample {
    std::string task_id;
    int step = 0;
    History history;
    StructuredOutput output;
    Situation label{Situation::Fast};
    std::string canonical_text;
};

struct PairSample {
    std::string task_id;
    int step = 0;
    History history;
    StructuredOutput chosen;
    StructuredOutput rejected;
};

// The situation judgement criterion: compare the probe's first prediction,
// then its rethink, against the gold action.
struct ClassifyResult {
    Situation label{Situation::Fast};
    Action predicted;                 // a^p
    std::optional<Action> reflected;  // a^r, absent for Fast
    std::string ret_text;
    int template_id = 0;
};

ClassifyResult classify(const History& h, const Action& gold, const Policy& probe);

enum class DataVariant { KnowSelf, NoRet, NoKnow, NoAll, FullKnow };
enum class MixKind { None, Absolute, Relative };

std::string to_string(DataVariant v);
DataVariant data_variant_from_string(std::string_view s);

struct BuildOptions {
    DataVariant variant = DataVariant::KnowSelf;
    MixKind mix = MixKind::None;
    double mix_p = 1.0;
    uint64_t mix_seed = 0;
};

// Walks every gold step of every task, classifies it with the probe, and
// emits the special-token training sample for the requested variant.
std::vector<SelfAwareSample> build_self_dataset(const std::vector<Task>& tasks,
                                                const Policy& probe, const KnowledgeBase& kb,
                                                const BuildOptions& opts);

// Greedy-decodes the reference policy on each sample's history and keeps the
// outputs whose committed action differs from the gold one.
std::vector<PairSample> mine_negatives(const std::vector<SelfAwareSample>& d_self,
                                       const Policy& ref, const KnowledgeProvider& provider);

// Canonical wire format:
//   Fast           <action>
//   Slow           <a_p>\n[Reflection]<reflection> <ret> </reflection>\n<gold>
//   Knowledgeable  [Knowledge]<knowledge> <know> </knowledge>\n<gold>
std::string render(const StructuredOutput& y);

// parse(render(y)) == y; the knowledge base resolves entry ids from rule
// text. Malformed text raises ParseError naming the offending span.
StructuredOutput parse_output(const std::string& text, const KnowledgeBase* kb = nullptr);

}  // namespace knowself
