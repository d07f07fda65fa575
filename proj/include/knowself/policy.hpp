#pragma once

#include <functional>
#include <map>

#include "knowself/knowledge.hpp"

namespace knowself {

enum class Situation { Fast, Slow, Knowledgeable };
enum class DecodeMode { Free, NoRefl, NoKnow, FastOnly, ForceKnow };

std::string to_string(Situation s);
std::string to_string(DecodeMode m);
DecodeMode decode_mode_from_string(std::string_view s);

// ----------------------------------------------------- reflection templates

int reflection_template_count();  // 8
std::string instantiate_template(int id, const std::string& wrong_text,
                                 const std::string& revised_text);
// Recovers (template id, wrong text, revised text); nullopt for free-form text.
struct TemplateMatch {
    int id;
    std::string wrong;
    std::string revised;
};
std::optional<TemplateMatch> match_template(const std::string& ret_text);

// ---------------------------------------------------------- grammar, params

struct Reflection {
    int template_id = -1;  // -1 marks free-form text from a remote model
    std::string ret_text;

    bool operator==(const Reflection& o) const {
        return template_id == o.template_id && ret_text == o.ret_text;
    }
};

struct KnowledgeRef {
    std::string entry_id;
    std::string know_text;

    bool operator==(const KnowledgeRef& o) const {
        return entry_id == o.entry_id && know_text == o.know_text;
    }
};

// The structured output y. Shapes follow the three situations:
//   Fast           a STOP                    (2 decisions)
//   Slow           a REFL template a'        (4 decisions)
//   Knowledgeable  KNOW a                    (2 decisions)
struct StructuredOutput {
    Situation situation{Situation::Fast};
    Action first_action;
    std::optional<Reflection> reflection;
    std::optional<KnowledgeRef> knowledge;
    Action final_action;

    bool operator==(const StructuredOutput& o) const {
        return situation == o.situation && first_action == o.first_action &&
               reflection == o.reflection && knowledge == o.knowledge &&
               final_action == o.final_action;
    }
};

int decision_count(const StructuredOutput& y);  // |y|

StructuredOutput make_fast(Action a);
StructuredOutput make_slow(Action wrong, int template_id, std::string ret, Action gold);
StructuredOutput make_knowledgeable(std::string entry_id, std::string know, Action gold);

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct Grammar {
    EnvKind kind{EnvKind::MiniHouse};
    int moves = 0;
    int feature_dim = 0;
    int templates = 8;

    int act_rows() const { return moves + 1; }  // + KNOW
    int know_row() const { return moves; }
    uint64_t hash() const;
};

Grammar grammar_for(EnvKind kind);

// Four weight slots. The act slot scores the first decision and, with the
// reflection context bit set, the post-reflection action; the know slot
// scores the action taken after a knowledge injection.
struct PolicyParams {
    Grammar grammar;
    std::string version = "knowself-policy-v1";
    Matrix act;   // (moves + 1) x feature_dim
    Matrix cont;  // 2 x feature_dim  (STOP, REFL)
    Matrix tmpl;  // templates x feature_dim
    Matrix know;  // moves x feature_dim
};

PolicyParams zero_params(EnvKind kind);
double params_max_abs_diff(const PolicyParams& a, const PolicyParams& b);

// ----------------------------------------------------------------- features

struct SlotContext {
    bool refl_context = false;
    std::optional<DecisionId> emitted;  // first emitted decision, when any
    const KnowledgeEntry* injected = nullptr;
};

// Sparse binary feature indices; deterministic in (session, context).
std::vector<int> features(const Session& s, const SlotContext& ctx);

// ------------------------------------------------------------ scoring paths

enum class Slot { Act, Cont, Tmpl, Know };
inline const int kStopRow = 0;
inline const int kReflRow = 1;

struct DecisionTrace {
    Slot slot;
    int row;                    // chosen row
    std::vector<int> support;   // rows the softmax normalizes over
    std::vector<int> phi;       // active feature indices
};

// Factorizes y into per-slot decisions under the mode's masks. Throws
// ContractError when y is not representable (grammar-invalid, masked by the
// mode, or infeasible in the session's state).
std::vector<DecisionTrace> trace_output(const Grammar& g, const Session& s,
                                        const StructuredOutput& y,
                                        const KnowledgeEntry* injected, DecodeMode mode);

double logprob_traced(const PolicyParams& p, const std::vector<DecisionTrace>& trace);

// log pi(y | h). Knowledgeable y requires the teacher-forced entry.
double logprob(const PolicyParams& p, const History& h, const StructuredOutput& y,
               const KnowledgeEntry* injected = nullptr, DecodeMode mode = DecodeMode::Free);

using KnowledgeProvider = std::function<const KnowledgeEntry*(const History&)>;

// Greedy argmax per decision (temperature 0). The provider runs exactly once
// and only when KNOW is emitted.
StructuredOutput decode(const PolicyParams& p, const History& h, DecodeMode mode,
                        const KnowledgeProvider& provider);
StructuredOutput decode_at(const PolicyParams& p, const Session& s, const History& h,
                           DecodeMode mode, const KnowledgeProvider& provider);

struct RethinkResult {
    std::string ret_text;
    Action revised;
    int template_id = 0;
};

// Revised action = argmax over the remaining actions with the reflection
// context bit set; never returns the excluded action.
RethinkResult rethink(const PolicyParams& p, const History& h, const Action& wrong);

// ------------------------------------------------------------ policy handle

class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    // Full structured output for a step.
    virtual StructuredOutput act(const History& h, DecodeMode mode,
                                 const KnowledgeProvider& provider) const = 0;
    // Probe interface used by the situation criterion.
    virtual Action propose(const History& h) const = 0;
    virtual RethinkResult rethink(const History& h, const Action& wrong) const = 0;
};

class LinearPolicy : public Policy {
public:
    explicit LinearPolicy(PolicyParams params) : params_(std::move(params)) {}
    const PolicyParams& params() const { return params_; }

    std::string name() const override { return "linear"; }
    StructuredOutput act(const History& h, DecodeMode mode,
                         const KnowledgeProvider& provider) const override;
    Action propose(const History& h) const override;
    RethinkResult rethink(const History& h, const Action& wrong) const override;

private:
    PolicyParams params_;
};

enum class ScriptedKind { AlwaysGold, WrongThenGold, AlwaysWrong, Competence };

// Competence predicts gold with probability p per task type under the seed;
// the other kinds are exact. p outside [0,1] is rejected.
std::shared_ptr<Policy> make_scripted(ScriptedKind kind,
                                      std::map<TaskType, double> competence = {},
                                      uint64_t seed = 0);

}  // namespace knowself
