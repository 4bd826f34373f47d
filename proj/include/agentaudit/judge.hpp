#pragma once

// External LLM judge: single-answer grading prompts, rating extraction, an
// on-disk verdict cache and bounded-concurrency scoring of an audit set.
//
// Wire protocol (see README): POST <endpoint> with
//   {"model": ..., "temperature": ..., "messages": [{"role": "user", "content": <prompt>}]}
// and read choices[0].message.content from the JSON response.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentaudit/core.hpp"
#include "agentaudit/metrics_reasoning.hpp"

namespace agentaudit {

/// Single-answer grading template asking for a 1-10 rating written as
/// "Rating: [[x]]".
inline constexpr const char* single_answer_template =
    "[Instruction]\n"
    "Please act as an impartial judge and evaluate the quality of the response provided by an AI assistant "
    "to the user question displayed below. Your evaluation should consider factors such as the helpfulness, "
    "relevance, accuracy, depth, creativity, and level of detail of the response. Begin your evaluation by "
    "providing a short explanation. Be as objective as possible. After providing your explanation, you must "
    "rate the response on a scale of 1 to 10 by strictly following this format: \"[[rating]]\", for example: "
    "\"Rating: [[5]]\".\n\n"
    "[Question]\n{question}\n\n"
    "[The Start of Assistant's Answer]\n{response}\n[The End of Assistant's Answer]";

class JudgeError : public AuditError {
public:
    explicit JudgeError(const std::string& what) : AuditError(ExitCode::judge_failure, what) {}
};

/// The completion held no usable "[[x]]" rating.
class RatingParseError : public JudgeError {
public:
    RatingParseError(const std::string& what, std::string completion)
        : JudgeError(what), completion_(std::move(completion)) {}
    const std::string& completion() const { return completion_; }

private:
    std::string completion_;
};

struct JudgeConfig {
    std::string endpoint;
    std::string model;
    std::string template_id = "single-v1";
    std::string prompt_template = single_answer_template;
    int max_in_flight = 4;
    int max_attempts = 3;
    int backoff_ms = 500;
    std::string cache_dir = ".judge-cache";
    double temperature = 0.0;
    int timeout_s = 120;
    /// Environment variable holding the bearer token.
    std::string api_key_env = "JUDGE_API_KEY";
    /// Forbid network calls; every verdict must come from the cache.
    bool offline = false;
};

inline void validate(const JudgeConfig& c) {
    if (c.max_in_flight < 1) throw InputError("judge config: max_in_flight must be >= 1");
    if (c.max_attempts < 1) throw InputError("judge config: max_attempts must be >= 1");
    if (c.model.empty()) throw InputError("judge config: model is required");
    if (c.prompt_template.find("{question}") == std::string::npos ||
        c.prompt_template.find("{response}") == std::string::npos) {
        throw InputError("judge config: template must contain {question} and {response}");
    }
}

inline JudgeConfig judge_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InputError("judge config must be a JSON object");
    JudgeConfig c;
    try {
        c.endpoint = j.value("endpoint", c.endpoint);
        c.model = j.value("model", c.model);
        c.template_id = j.value("template_id", c.template_id);
        c.prompt_template = j.value("template", c.prompt_template);
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.max_attempts = j.value("max_attempts", c.max_attempts);
        c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
        c.cache_dir = j.value("cache_dir", c.cache_dir);
        c.temperature = j.value("temperature", c.temperature);
        c.timeout_s = j.value("timeout_s", c.timeout_s);
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.offline = j.value("offline", c.offline);
    } catch (const nlohmann::json::type_error& e) {
        throw InputError(std::string("judge config: ") + e.what());
    }
    validate(c);
    return c;
}

inline JudgeConfig load_judge_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read judge config: " + path);
    try {
        return judge_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("judge config " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Prompts and ratings
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a, lower-case hex.
inline std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct Prompt {
    std::string text;
    std::string hash;
};

/// Replaces every {question} and {response} slot.
inline Prompt build_prompt(std::string_view question, std::string_view response, std::string_view templ) {
    for (const char* slot : {"{question}", "{response}"}) {
        if (templ.find(slot) == std::string_view::npos) {
            throw InputError(std::string("prompt template lacks the ") + slot + " slot");
        }
    }
    std::string out;
    out.reserve(templ.size() + question.size() + response.size());
    std::size_t i = 0;
    while (i < templ.size()) {
        if (templ.compare(i, 10, "{question}") == 0) {
            out += question;
            i += 10;
        } else if (templ.compare(i, 10, "{response}") == 0) {
            out += response;
            i += 10;
        } else {
            out += templ[i++];
        }
    }
    return {out, fnv1a_hex(out)};
}

/// Last "[[x]]" in the completion, x a number in [1, 10].
inline double parse_rating(const std::string& completion) {
    static const std::regex pattern(R"(\[\[\s*([0-9]+(?:\.[0-9]+)?)\s*\]\])");
    std::optional<std::string> last;
    for (auto it = std::sregex_iterator(completion.begin(), completion.end(), pattern); it != std::sregex_iterator();
         ++it) {
        last = (*it)[1].str();
    }
    if (!last) throw RatingParseError("no [[rating]] in judge completion", completion);
    double v = std::stod(*last);
    if (v < 1.0 || v > 10.0) throw RatingParseError("judge rating " + *last + " outside [1, 10]", completion);
    return v;
}

inline double normalize_rating(double raw) { return (raw - 1.0) / 9.0; }

/// Cache key over everything that determines a verdict.
inline std::string judge_cache_key(const std::string& model, const std::string& prompt_hash, double temperature) {
    return fnv1a_hex(model + '\0' + prompt_hash + '\0' + detail::format_double(temperature));
}

struct JudgeVerdict {
    std::string instance_id;
    double raw_score = 0.0;
    double normalized = 0.0;
    std::string raw_completion;
    std::string prompt_hash;
    bool cached = false;
};

inline nlohmann::json make_chat_request(const std::string& prompt, const JudgeConfig& config) {
    return {{"model", config.model},
            {"temperature", config.temperature},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
}

inline std::string extract_completion(const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw JudgeError(std::string("unexpected judge response: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

/// One JSON file per cache key. Writes go to a temporary file that is then
/// renamed over the target.
class VerdictCache {
public:
    explicit VerdictCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }

    std::optional<JudgeVerdict> load(const std::string& key) const {
        std::ifstream in(path_for(key));
        if (!in) return std::nullopt;
        try {
            auto j = nlohmann::json::parse(in);
            JudgeVerdict v;
            v.raw_score = j.at("raw_score").get<double>();
            v.normalized = j.at("normalized").get<double>();
            v.raw_completion = j.at("raw_completion").get<std::string>();
            v.prompt_hash = j.at("prompt_hash").get<std::string>();
            v.cached = true;
            return v;
        } catch (const nlohmann::json::exception&) {
            return std::nullopt;
        }
    }

    void store(const std::string& key, const JudgeVerdict& v, const std::string& model) const {
        std::filesystem::create_directories(dir_);
        nlohmann::json j = {{"raw_score", v.raw_score},
                            {"normalized", v.normalized},
                            {"raw_completion", v.raw_completion},
                            {"prompt_hash", v.prompt_hash},
                            {"judge_model", model}};
        auto target = path_for(key);
        std::ostringstream tid;
        tid << std::this_thread::get_id();
        auto tmp = target;
        tmp += ".tmp-" + tid.str();
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw JudgeError("cannot write judge cache file " + tmp.string());
            out << j.dump(1) << "\n";
        }
        std::filesystem::rename(tmp, target);
    }

    std::size_t entry_count() const {
        if (!std::filesystem::exists(dir_)) return 0;
        std::size_t n = 0;
        for (const auto& e : std::filesystem::directory_iterator(dir_)) {
            if (e.path().extension() == ".json") ++n;
        }
        return n;
    }

private:
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Sends one prompt and returns the judge's completion text.
class JudgeTransport {
public:
    virtual ~JudgeTransport() = default;
    virtual std::string complete(const std::string& prompt, const JudgeConfig& config) = 0;
};

/// Raised when some records could not be scored; carries what did succeed.
class JudgeScoringError : public JudgeError {
public:
    JudgeScoringError(const std::string& what, std::vector<std::string> failed,
                      std::map<std::string, JudgeVerdict> partial)
        : JudgeError(what), failed_(std::move(failed)), partial_(std::move(partial)) {}
    const std::vector<std::string>& failed_ids() const { return failed_; }
    const std::map<std::string, JudgeVerdict>& partial() const { return partial_; }

private:
    std::vector<std::string> failed_;
    std::map<std::string, JudgeVerdict> partial_;
};

/// Scores every record's final response. Cache hits skip the transport; in
/// offline mode (or with a null transport) a miss is an error. At most
/// `max_in_flight` requests run at once. The returned map is keyed and ordered
/// by instance id.
inline std::map<std::string, JudgeVerdict> score_audit_set(const AuditSet& audit, const JudgeConfig& config,
                                                           JudgeTransport* transport) {
    validate(config);
    require_one_record_per_instance(audit);
    VerdictCache cache(config.cache_dir);

    struct Job {
        std::string instance_id;
        Prompt prompt;
        std::string key;
    };
    std::map<std::string, JudgeVerdict> verdicts;
    std::vector<Job> pending;
    for (const auto& r : audit) {
        Job job{r.instance.id, build_prompt(r.instance.question, r.trajectory.final_response, config.prompt_template), {}};
        job.key = judge_cache_key(config.model, job.prompt.hash, config.temperature);
        if (auto hit = cache.load(job.key)) {
            hit->instance_id = job.instance_id;
            verdicts[job.instance_id] = std::move(*hit);
        } else {
            pending.push_back(std::move(job));
        }
    }

    std::vector<std::string> failed;
    if (!pending.empty() && (config.offline || transport == nullptr)) {
        for (const auto& j : pending) failed.push_back(j.instance_id);
        throw JudgeScoringError("judge offline and no cached verdict for: " + detail::join(failed, ", "), failed,
                                verdicts);
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            const Job& job = pending[i];
            std::string last_error;
            std::optional<JudgeVerdict> verdict;
            for (int attempt = 0; attempt < config.max_attempts && !verdict; ++attempt) {
                if (attempt > 0 && config.backoff_ms > 0) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(config.backoff_ms << (attempt - 1)));
                }
                try {
                    std::string completion = transport->complete(job.prompt.text, config);
                    double raw = parse_rating(completion);
                    verdict = JudgeVerdict{job.instance_id, raw, normalize_rating(raw), completion, job.prompt.hash, false};
                } catch (const std::exception& e) {
                    last_error = e.what();
                }
            }
            if (verdict) {
                cache.store(job.key, *verdict, config.model);
            }
            std::lock_guard lock(mu);
            if (verdict) {
                verdicts[job.instance_id] = std::move(*verdict);
            } else {
                failed.push_back(job.instance_id + " (" + last_error + ")");
            }
        }
    };
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), pending.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (!failed.empty()) {
        std::sort(failed.begin(), failed.end());
        throw JudgeScoringError("judge failed after retries for: " + detail::join(failed, ", "), failed, verdicts);
    }
    return verdicts;
}

inline ScoreMap to_score_map(const std::map<std::string, JudgeVerdict>& verdicts, const std::string& model) {
    ScoreMap out;
    for (const auto& [id, v] : verdicts) out[id] = ScoreEntry{v.raw_score, v.normalized, model, v.prompt_hash};
    return out;
}

}  // namespace agentaudit
