#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "knowself/remote.hpp"
#include "knowself/runtime.hpp"

using namespace knowself;
using nlohmann::json;

namespace {

// Serves canned assistant replies in sequence.
class CannedServer {
public:
    explicit CannedServer(std::vector<std::string> replies) : replies_(std::move(replies)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            requests_.push_back(req.body);
            size_t i = std::min(hits_.fetch_add(1), replies_.size() - 1);
            json reply = {{"choices", {{{"message", {{"role", "assistant"},
                                                     {"content", replies_[i]}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~CannedServer() {
        server_.stop();
        thread_.join();
    }
    int port() const { return port_; }
    size_t hits() const { return hits_.load(); }
    std::vector<std::string> requests_;

private:
    std::vector<std::string> replies_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<size_t> hits_{0};
};

KnowledgeBase tiny_kb() {
    KnowledgeBase kb;
    kb.cap = 24;
    KnowledgeEntry e;
    e.id = "rule_0";
    e.kind = RuleKind::Error;
    e.condition_key = {TaskType::Put, Phase::Seeking, HoldingClass::None};
    e.advice_class = 0;
    e.rule_text = "When the agent is looking for an object for a put task, the agent should "
                  "explore another receptacle instead of closing";
    kb.entries.push_back(e);
    return kb;
}

History empty_history(const Task& t) { return History(std::make_shared<Task>(t)); }

}  // namespace

TEST_CASE("canned action reply parses as a Fast output") {
    CannedServer server({"Thought: the shelf looks promising.\nAction: go to shelf 1"});
    RemoteConfig cfg;
    cfg.port = server.port();
    auto policy = remote_policy(cfg);

    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 1);
    KnowledgeBase kb = tiny_kb();
    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    StructuredOutput y = policy->act(empty_history(t), DecodeMode::Free, provider);
    CHECK(y.situation == Situation::Fast);
    CHECK(action_text(y.final_action) == "go to shelf 1");
}

TEST_CASE("a [Knowledge] reply invokes the provider and continues the step") {
    CannedServer server({"[Knowledge]", "Thought: the rule helps.\nAction: go to countertop 1"});
    RemoteConfig cfg;
    cfg.port = server.port();
    auto policy = remote_policy(cfg);

    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 2);
    KnowledgeBase kb = tiny_kb();
    int provider_calls = 0;
    KnowledgeProvider provider = [&](const History& h) {
        ++provider_calls;
        return &select_for_inference(kb, h);
    };
    StructuredOutput y = policy->act(empty_history(t), DecodeMode::Free, provider);
    CHECK(y.situation == Situation::Knowledgeable);
    CHECK(provider_calls == 1);
    CHECK(y.knowledge->entry_id == "rule_0");
    CHECK(action_text(y.final_action) == "go to countertop 1");
    CHECK(server.hits() == 2);
    // The follow-up request carries the selected rule verbatim.
    CHECK(server.requests_.back().find("cool") == std::string::npos);
    CHECK(server.requests_.back().find("explore another receptacle") != std::string::npos);
}

TEST_CASE("special-token replies parse through the canonical grammar") {
    std::string slow = "go to shelf 1\n[Reflection]<reflection> I tried to go to shelf 1, but "
                       "that seems wrong. I should go to countertop 1 instead. </reflection>\n"
                       "go to countertop 1";
    CannedServer server({slow});
    RemoteConfig cfg;
    cfg.port = server.port();
    auto policy = remote_policy(cfg);

    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 3);
    KnowledgeBase kb = tiny_kb();
    KnowledgeProvider provider = [&](const History& h) { return &select_for_inference(kb, h); };
    StructuredOutput y = policy->act(empty_history(t), DecodeMode::Free, provider);
    CHECK(y.situation == Situation::Slow);
    CHECK(y.reflection->template_id == 0);
    CHECK(action_text(y.final_action) == "go to countertop 1");
}

TEST_CASE("free-form reflection replies fall back to line parsing") {
    std::string content = "Thought: try the drawer.\nAction: open drawer 1\n"
                          "[Reflection]Thought: it is locked, use the shelf.\n"
                          "Action: go to shelf 2";
    auto y = parse_remote_content(content);
    REQUIRE(y.has_value());
    CHECK(y->situation == Situation::Slow);
    CHECK(y->reflection->template_id == -1);
    CHECK(action_text(y->first_action) == "open drawer 1");
    CHECK(action_text(y->final_action) == "go to shelf 2");
}

TEST_CASE("malformed output is a parse error, not a crash") {
    CHECK_THROWS_AS(parse_remote_content("I have no idea."), ParseError);
    CHECK_THROWS_AS(parse_remote_content(""), ParseError);

    CannedServer server({"gibberish with no action"});
    RemoteConfig cfg;
    cfg.port = server.port();
    auto policy = remote_policy(cfg);
    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 4);
    KnowledgeBase kb = tiny_kb();
    EpisodeResult r = run_episode(*policy, t, kb, DecodeMode::Free);
    CHECK(r.error.has_value());
    CHECK(r.reward == 0.0);
}

TEST_CASE("timeout after retries becomes an episode error") {
    RemoteConfig cfg;
    cfg.port = 1;  // nothing listens here
    cfg.attempts = 3;
    cfg.backoff_ms = 1;
    cfg.timeout_ms = 50;
    auto policy = remote_policy(cfg);

    Task t = generate_task(EnvKind::MiniHouse, TaskType::Put, 5);
    KnowledgeBase kb = tiny_kb();
    EpisodeResult r = run_episode(*policy, t, kb, DecodeMode::Free);
    REQUIRE(r.error.has_value());
    CHECK(r.error->find("3 attempts") != std::string::npos);
    CHECK(r.reward == 0.0);
}
