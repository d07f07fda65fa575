#include "knowself/labeler.hpp"

#include <algorithm>
#include <cmath>

namespace knowself {

std::string to_string(DataVariant v) {
    switch (v) {
        case DataVariant::KnowSelf: return "knowself";
        case DataVariant::NoRet: return "noret";
        case DataVariant::NoKnow: return "noknow";
        case DataVariant::NoAll: return "noall";
        case DataVariant::FullKnow: return "fullknow";
    }
    return "?";
}

DataVariant data_variant_from_string(std::string_view s) {
    std::string l = lower(s);
    if (l == "knowself") return DataVariant::KnowSelf;
    if (l == "noret") return DataVariant::NoRet;
    if (l == "noknow") return DataVariant::NoKnow;
    if (l == "noall") return DataVariant::NoAll;
    if (l == "fullknow") return DataVariant::FullKnow;
    throw ContractError("unknown data variant: " + std::string(s));
}

ClassifyResult classify(const History& h, const Action& gold, const Policy& probe) {
    ClassifyResult r;
    r.predicted = probe.propose(h);
    if (r.predicted == gold) {
        r.label = Situation::Fast;
        return r;
    }
    RethinkResult rt = probe.rethink(h, r.predicted);
    r.reflected = rt.revised;
    r.ret_text = rt.ret_text;
    r.template_id = rt.template_id;
    r.label = rt.revised == gold ? Situation::Slow : Situation::Knowledgeable;
    return r;
}

namespace {

SelfAwareSample build_sample(const std::string& task_id, int step, const History& h,
                             const Action& gold, const ClassifyResult& c,
                             const KnowledgeBase& kb, DataVariant variant) {
    SelfAwareSample sample;
    sample.task_id = task_id;
    sample.step = step;
    sample.history = h;

    auto knowledgeable = [&](const Action* loss) {
        const KnowledgeEntry& e = loss ? select_for_training(kb, h, gold, *loss)
                                       : select_for_inference(kb, h);
        return make_knowledgeable(e.id, e.rule_text, gold);
    };
    auto slow_to_gold = [&](const Action& wrong, int tmpl) {
        return make_slow(wrong, tmpl,
                         instantiate_template(tmpl, action_text(wrong), action_text(gold)),
                         gold);
    };

    switch (variant) {
        case DataVariant::NoAll:
            sample.output = make_fast(gold);
            break;
        case DataVariant::FullKnow:
            switch (c.label) {
                case Situation::Fast: sample.output = knowledgeable(nullptr); break;
                case Situation::Slow: sample.output = knowledgeable(&c.predicted); break;
                case Situation::Knowledgeable:
                    sample.output = knowledgeable(&*c.reflected);
                    break;
            }
            break;
        case DataVariant::NoRet:
            switch (c.label) {
                case Situation::Fast: sample.output = make_fast(gold); break;
                case Situation::Slow: sample.output = knowledgeable(&c.predicted); break;
                case Situation::Knowledgeable:
                    sample.output = knowledgeable(&*c.reflected);
                    break;
            }
            break;
        case DataVariant::NoKnow:
            switch (c.label) {
                case Situation::Fast: sample.output = make_fast(gold); break;
                case Situation::Slow:
                    sample.output = make_slow(c.predicted, c.template_id, c.ret_text, gold);
                    break;
                case Situation::Knowledgeable:
                    // Reflection-only variant: keep the slow shape, land on gold.
                    sample.output = slow_to_gold(c.predicted, c.template_id);
                    break;
            }
            break;
        case DataVariant::KnowSelf:
            switch (c.label) {
                case Situation::Fast: sample.output = make_fast(gold); break;
                case Situation::Slow:
                    sample.output = make_slow(c.predicted, c.template_id, c.ret_text, gold);
                    break;
                case Situation::Knowledgeable:
                    sample.output = knowledgeable(&*c.reflected);
                    break;
            }
            break;
    }
    sample.label = sample.output.situation;
    sample.canonical_text = render(sample.output);
    return sample;
}

}  // namespace

std::vector<SelfAwareSample> build_self_dataset(const std::vector<Task>& tasks,
                                                const Policy& probe, const KnowledgeBase& kb,
                                                const BuildOptions& opts) {
    std::vector<SelfAwareSample> samples;
    for (const auto& task : tasks) {
        auto tp = std::make_shared<Task>(task);
        Session s(tp);
        History h(tp);
        int step = 0;
        while (!s.done()) {
            Action gold = gold_action(s);
            ClassifyResult c = classify(h, gold, probe);
            samples.push_back(build_sample(task.id, step, h, gold, c, kb, opts.variant));
            Observation o = s.apply(gold);
            h.append(gold, o);
            ++step;
        }
    }

    if (opts.mix == MixKind::None) return samples;
    if (opts.mix_p < 0.0 || opts.mix_p > 1.0)
        throw ContractError("mix fraction outside [0,1]");

    size_t n = samples.size();
    size_t keep = static_cast<size_t>(std::ceil(opts.mix_p * static_cast<double>(n)));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix64(opts.mix_seed, 0x3a17ull));
    rng.shuffle(order);
    std::vector<bool> kept(n, false);
    for (size_t i = 0; i < keep && i < n; ++i) kept[order[i]] = true;

    std::vector<SelfAwareSample> mixed;
    for (size_t i = 0; i < n; ++i) {
        if (kept[i]) {
            mixed.push_back(samples[i]);
        } else if (opts.mix == MixKind::Relative) {
            // Replaced by the plain gold-only sample to restore full count.
            SelfAwareSample plain = samples[i];
            plain.output = make_fast(samples[i].output.final_action);
            plain.label = Situation::Fast;
            plain.canonical_text = render(plain.output);
            mixed.push_back(std::move(plain));
        }
    }
    return mixed;
}

std::vector<PairSample> mine_negatives(const std::vector<SelfAwareSample>& d_self,
                                       const Policy& ref, const KnowledgeProvider& provider) {
    std::vector<PairSample> pairs;
    for (const auto& sample : d_self) {
        StructuredOutput predicted = ref.act(sample.history, DecodeMode::Free, provider);
        if (predicted.final_action == sample.output.final_action) continue;
        PairSample p;
        p.task_id = sample.task_id;
        p.step = sample.step;
        p.history = sample.history;
        p.chosen = sample.output;
        p.rejected = std::move(predicted);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// -------------------------------------------------------------- wire format

namespace {

const std::string kReflOpen = "[Reflection]<reflection> ";
const std::string kReflClose = " </reflection>";
const std::string kKnowOpen = "[Knowledge]<knowledge> ";
const std::string kKnowClose = " </knowledge>";

Action parse_action_line(const std::string& line, const char* where) {
    try {
        return parse_action(line);
    } catch (const ContractError&) {
        throw ParseError(std::string("unparseable ") + where + " action: '" + line + "'");
    }
}

}  // namespace

std::string render(const StructuredOutput& y) {
    switch (y.situation) {
        case Situation::Fast:
            return action_text(y.final_action);
        case Situation::Slow:
            return action_text(y.first_action) + "\n" + kReflOpen + y.reflection->ret_text +
                   kReflClose + "\n" + action_text(y.final_action);
        case Situation::Knowledgeable:
            return kKnowOpen + y.knowledge->know_text + kKnowClose + "\n" +
                   action_text(y.final_action);
    }
    throw ContractError("render: bad situation");
}

StructuredOutput parse_output(const std::string& text, const KnowledgeBase* kb) {
    if (starts_with(text, "[Knowledge]")) {
        if (!starts_with(text, kKnowOpen))
            throw ParseError("missing <knowledge> tag after [Knowledge] in '" +
                             text.substr(0, 24) + "...'");
        size_t close = text.find(kKnowClose, kKnowOpen.size());
        if (close == std::string::npos) throw ParseError("unclosed knowledge tag");
        std::string know = text.substr(kKnowOpen.size(), close - kKnowOpen.size());
        size_t nl = close + kKnowClose.size();
        if (nl >= text.size() || text[nl] != '\n')
            throw ParseError("missing action line after </knowledge>");
        Action final_action = parse_action_line(text.substr(nl + 1), "final");
        std::string entry_id;
        if (kb) {
            for (const auto& e : kb->entries)
                if (e.rule_text == know) {
                    entry_id = e.id;
                    break;
                }
        }
        return make_knowledgeable(entry_id, know, final_action);
    }

    size_t refl = text.find("\n[Reflection]");
    if (refl != std::string::npos) {
        Action first = parse_action_line(text.substr(0, refl), "first");
        size_t seg = refl + 1;
        if (text.compare(seg, kReflOpen.size(), kReflOpen) != 0)
            throw ParseError("missing <reflection> tag after [Reflection]");
        size_t ret_start = seg + kReflOpen.size();
        size_t close = text.find(kReflClose, ret_start);
        if (close == std::string::npos) throw ParseError("unclosed reflection tag");
        std::string ret = text.substr(ret_start, close - ret_start);
        size_t nl = close + kReflClose.size();
        if (nl >= text.size() || text[nl] != '\n')
            throw ParseError("missing action line after </reflection>");
        Action final_action = parse_action_line(text.substr(nl + 1), "final");
        auto match = match_template(ret);
        int template_id = match ? match->id : -1;
        return make_slow(first, template_id, ret, final_action);
    }

    if (text.find('\n') != std::string::npos)
        throw ParseError("unknown leading token in multi-line output: '" +
                         text.substr(0, text.find('\n')) + "'");
    return make_fast(parse_action_line(text, "single"));
}

}  // namespace knowself
