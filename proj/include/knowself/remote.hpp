#pragma once

#include "knowself/labeler.hpp"

namespace knowself {

// Chat-completion-style HTTP endpoint. Failures after the retry budget and
// unparseable replies surface as exceptions; the episode loop records them.
struct RemoteConfig {
    std::string host = "127.0.0.1";
    int port = 0;
    std::string path = "/v1/chat/completions";
    std::string model = "knowself-agent";
    int attempts = 3;
    int backoff_ms = 50;  // doubles per retry
    int timeout_ms = 2000;
};

std::shared_ptr<Policy> remote_policy(const RemoteConfig& cfg);

// Exposed for tests: the prompt for a history and the reply parser.
std::string remote_prompt(const History& h);

// Parses assistant text into a structured output. Accepts "Thought:" lines,
// "Action:" prefixes, and the special-token segments. A reply that opens
// with [Knowledge] but carries no action yields nullopt (the caller selects
// knowledge and asks again).
std::optional<StructuredOutput> parse_remote_content(const std::string& content);

}  // namespace knowself
