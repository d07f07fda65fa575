#include "knowself/remote.hpp"

#include <chrono>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "knowself/labeler.hpp"

namespace knowself {

namespace {

using nlohmann::json;

std::string strip_action_prefix(const std::string& line) {
    std::string t = trim(line);
    if (starts_with(t, "Action:")) return trim(t.substr(7));
    return t;
}

Action parse_reply_action(const std::string& line) {
    try {
        return parse_action(strip_action_prefix(line));
    } catch (const ContractError&) {
        throw ParseError("unparseable action in model output: '" + line + "'");
    }
}

// Lines that carry an action, in order; "Thought:" lines are dropped.
std::vector<std::string> action_lines(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& raw : split(text, '\n')) {
        std::string line = trim(raw);
        if (line.empty() || starts_with(line, "Thought:")) continue;
        out.push_back(line);
    }
    return out;
}

}  // namespace

std::string remote_prompt(const History& h) {
    std::ostringstream out;
    out << "Task: " << h.task().goal_text << "\n";
    out << observe(h.task(), h.task().initial_state).text << "\n";
    for (const auto& s : h.steps())
        out << "> " << action_text(s.action) << "\n" << s.obs.text << "\n";
    out << "What is your next action?";
    return out.str();
}

std::optional<StructuredOutput> parse_remote_content(const std::string& content) {
    std::string text = trim(content);
    if (text.empty()) throw ParseError("empty model output");

    if (starts_with(text, "[Knowledge]")) {
        // Either a bare request for knowledge, or a complete segment.
        try {
            return parse_output(text);
        } catch (const ParseError&) {
            std::string rest = trim(text.substr(11));
            auto lines = action_lines(rest);
            if (lines.empty()) return std::nullopt;  // ask again with knowledge
            // "[Knowledge]" followed by a plain action.
            Action a = parse_reply_action(lines.back());
            return make_knowledgeable("", "", a);
        }
    }

    size_t refl = text.find("[Reflection]");
    if (refl != std::string::npos) {
        try {
            return parse_output(text);
        } catch (const ParseError&) {
            // Free-form: first action, then a rethought action after the tag.
            auto before = action_lines(text.substr(0, refl));
            auto after = action_lines(text.substr(refl + 12));
            if (before.empty() || after.empty())
                throw ParseError("reflection reply without two actions");
            Action first = parse_reply_action(before.back());
            Action revised = parse_reply_action(after.back());
            std::string ret;
            for (const auto& raw : split(text.substr(refl + 12), '\n')) {
                std::string line = trim(raw);
                if (starts_with(line, "Thought:")) ret = trim(line.substr(8));
            }
            return make_slow(first, -1, ret.empty() ? "reconsidered" : ret, revised);
        }
    }

    auto lines = action_lines(text);
    if (lines.empty()) throw ParseError("no action line in model output");
    return make_fast(parse_reply_action(lines.back()));
}

namespace {

class RemotePolicy : public Policy {
public:
    explicit RemotePolicy(RemoteConfig cfg) : cfg_(std::move(cfg)) {}

    std::string name() const override { return "remote:" + cfg_.model; }

    StructuredOutput act(const History& h, DecodeMode mode,
                         const KnowledgeProvider& provider) const override {
        std::string content = complete(remote_prompt(h), mode, "");
        auto parsed = parse_remote_content(content);
        if (parsed && parsed->situation == Situation::Knowledgeable &&
            parsed->knowledge->know_text.empty()) {
            // The model asked for knowledge inline; attach the selected entry.
            const KnowledgeEntry* e = provider(h);
            return make_knowledgeable(e->id, e->rule_text, parsed->final_action);
        }
        if (parsed) return *parsed;

        // Bare [Knowledge]: select, then continue the step with it.
        const KnowledgeEntry* e = provider(h);
        std::string follow = complete(remote_prompt(h), mode, e->rule_text);
        auto lines = action_lines(follow);
        if (lines.empty()) throw ParseError("no action after knowledge injection");
        Action a = parse_reply_action(lines.back());
        return make_knowledgeable(e->id, e->rule_text, a);
    }

    Action propose(const History& h) const override {
        std::string content = complete(remote_prompt(h), DecodeMode::FastOnly, "");
        auto lines = action_lines(content);
        if (lines.empty()) throw ParseError("no action line in model output");
        return parse_reply_action(lines.back());
    }

    RethinkResult rethink(const History& h, const Action& wrong) const override {
        std::string prompt = remote_prompt(h) +
                             "\nYour previous action '" + action_text(wrong) +
                             "' was not executed. Reconsider and answer with a different "
                             "action.";
        std::string content = complete(prompt, DecodeMode::FastOnly, "");
        auto lines = action_lines(content);
        if (lines.empty()) throw ParseError("no action line in model output");
        RethinkResult r;
        r.template_id = -1;
        r.revised = parse_reply_action(lines.back());
        r.ret_text = "reconsidered after " + action_text(wrong);
        return r;
    }

private:
    std::string complete(const std::string& prompt, DecodeMode mode,
                         const std::string& knowledge) const {
        json payload;
        payload["model"] = cfg_.model;
        payload["temperature"] = 0;
        std::string system =
            "You control an agent. Reply with the next action. You may reply with "
            "[Knowledge] to request a relevant rule, or append [Reflection] followed by a "
            "corrected action. Mode: " +
            to_string(mode) + ".";
        json messages = json::array();
        messages.push_back({{"role", "system"}, {"content", system}});
        messages.push_back({{"role", "user"}, {"content", prompt}});
        if (!knowledge.empty())
            messages.push_back(
                {{"role", "user"},
                 {"content", "[Knowledge]<knowledge> " + knowledge +
                                 " </knowledge>\nContinue with your action."}});
        payload["messages"] = messages;
        std::string body = payload.dump();

        int backoff = cfg_.backoff_ms;
        std::string last_error = "no attempt made";
        for (int attempt = 0; attempt < cfg_.attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                backoff *= 2;
            }
            httplib::Client client(cfg_.host, cfg_.port);
            client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
            client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
            auto res = client.Post(cfg_.path, body, "application/json");
            if (!res) {
                last_error = "connection failed";
                continue;
            }
            if (res->status != 200) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            try {
                json reply = json::parse(res->body);
                return reply.at("choices").at(0).at("message").at("content")
                    .get<std::string>();
            } catch (const json::exception& e) {
                throw ParseError(std::string("malformed completion payload: ") + e.what());
            }
        }
        throw ContractError("remote endpoint failed after " + std::to_string(cfg_.attempts) +
                            " attempts: " + last_error);
    }

    RemoteConfig cfg_;
};

}  // namespace

std::shared_ptr<Policy> remote_policy(const RemoteConfig& cfg) {
    return std::make_shared<RemotePolicy>(cfg);
}

}  // namespace knowself
