#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <mutex>
#include <thread>

#include "agentaudit/judge.hpp"
#include "agentaudit/judge_http.hpp"
#include "support.hpp"

using namespace agentaudit;
using testing_support::make_audit;
using testing_support::Rec;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("agentaudit_judge_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

JudgeConfig config_for(const std::filesystem::path& cache) {
    JudgeConfig c;
    c.model = "stub-judge";
    c.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    c.cache_dir = cache.string();
    c.backoff_ms = 0;
    return c;
}

class FakeTransport : public JudgeTransport {
public:
    explicit FakeTransport(std::string reply, int delay_ms = 0) : reply_(std::move(reply)), delay_ms_(delay_ms) {}

    std::string complete(const std::string&, const JudgeConfig&) override {
        int now = ++in_flight_;
        {
            std::lock_guard lock(mu_);
            peak_ = std::max(peak_, now);
        }
        if (delay_ms_) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_));
        ++calls_;
        --in_flight_;
        return reply_;
    }

    int calls() const { return calls_; }
    int peak() const { return peak_; }

private:
    std::string reply_;
    int delay_ms_;
    std::atomic<int> calls_{0};
    std::atomic<int> in_flight_{0};
    std::mutex mu_;
    int peak_ = 0;
};

AuditSet three_records() {
    return make_audit({{"A", 0, 0, {}, "It may be effusion."}, {"A", 1, 1, {}, "Clear."}, {"B", 0, 0, {}, "Opacity."}});
}

}  // namespace

TEST(BuildPrompt, SubstitutesSlots) {
    auto p = build_prompt("q1", "a1", "Q:{question}\nA:{response}");
    EXPECT_EQ(p.text, "Q:q1\nA:a1");
    EXPECT_EQ(p.hash, build_prompt("q1", "a1", "Q:{question}\nA:{response}").hash);
    EXPECT_NE(p.hash, build_prompt("q1", "a2", "Q:{question}\nA:{response}").hash);
}

TEST(BuildPrompt, MissingSlotIsAnError) {
    EXPECT_THROW(build_prompt("q", "a", "Q:{question}"), InputError);
}

TEST(BuildPrompt, DefaultTemplateHasBothSlots) {
    auto p = build_prompt("QUESTION-X", "RESPONSE-Y", single_answer_template);
    EXPECT_NE(p.text.find("QUESTION-X"), std::string::npos);
    EXPECT_NE(p.text.find("RESPONSE-Y"), std::string::npos);
    EXPECT_NE(p.text.find("[[rating]]"), std::string::npos);
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(ParseRating, Examples) {
    EXPECT_EQ(parse_rating("Good explanation. Rating: [[7]]"), 7.0);
    EXPECT_EQ(parse_rating("[[3]] then revised: [[9]]"), 9.0);
    EXPECT_EQ(parse_rating("Rating: [[ 8.5 ]]"), 8.5);
    EXPECT_THROW(parse_rating("great answer"), RatingParseError);
}

TEST(ParseRating, OutOfRangeCarriesCompletion) {
    try {
        parse_rating("Rating: [[11]]");
        FAIL();
    } catch (const RatingParseError& e) {
        EXPECT_EQ(e.completion(), "Rating: [[11]]");
        EXPECT_EQ(e.code(), ExitCode::judge_failure);
    }
    EXPECT_THROW(parse_rating("[[0]]"), RatingParseError);
}

TEST(NormalizeRating, MapsOneToTenOntoUnitInterval) {
    EXPECT_EQ(normalize_rating(1), 0.0);
    EXPECT_EQ(normalize_rating(10), 1.0);
    EXPECT_DOUBLE_EQ(normalize_rating(7), 6.0 / 9.0);
}

TEST(CacheKey, DependsOnModelPromptAndTemperature) {
    auto k = judge_cache_key("m", "h", 0.0);
    EXPECT_EQ(k, judge_cache_key("m", "h", 0.0));
    EXPECT_NE(k, judge_cache_key("m2", "h", 0.0));
    EXPECT_NE(k, judge_cache_key("m", "h2", 0.0));
    EXPECT_NE(k, judge_cache_key("m", "h", 0.5));
}

TEST(ExtractCompletion, ChatCompletionShape) {
    EXPECT_EQ(extract_completion(R"({"choices":[{"message":{"role":"assistant","content":"Rating: [[4]]"}}]})"),
              "Rating: [[4]]");
    EXPECT_THROW(extract_completion(R"({"error":"x"})"), JudgeError);
}

TEST(JudgeConfig, ValidationAndJson) {
    auto c = judge_config_from_json(nlohmann::json::parse(R"({"model":"m","endpoint":"http://h/x","max_in_flight":2})"));
    EXPECT_EQ(c.max_in_flight, 2);
    EXPECT_THROW(judge_config_from_json(nlohmann::json::parse(R"({"endpoint":"http://h"})")), InputError);
    EXPECT_THROW(judge_config_from_json(nlohmann::json::parse(R"({"model":"m","template":"no slots"})")), InputError);
}

TEST(ScoreAuditSet, ColdCachePopulatesThenOfflineReplays) {
    auto dir = fresh_dir("cold");
    auto audit = three_records();
    auto config = config_for(dir);
    FakeTransport fake("Rating: [[7]]");
    auto first = score_audit_set(audit, config, &fake);
    EXPECT_EQ(fake.calls(), 3);
    EXPECT_EQ(VerdictCache(dir).entry_count(), 3u);
    for (const auto& [id, v] : first) {
        EXPECT_FALSE(v.cached);
        EXPECT_EQ(v.raw_score, 7.0);
    }

    config.offline = true;
    auto second = score_audit_set(audit, config, nullptr);
    ASSERT_EQ(second.size(), 3u);
    for (const auto& [id, v] : second) {
        EXPECT_TRUE(v.cached);
        EXPECT_EQ(v.normalized, first.at(id).normalized);
        EXPECT_EQ(v.prompt_hash, first.at(id).prompt_hash);
    }
    std::filesystem::remove_all(dir);
}

TEST(ScoreAuditSet, OfflineMissListsIds) {
    auto dir = fresh_dir("miss");
    auto config = config_for(dir);
    config.offline = true;
    FakeTransport fake("Rating: [[7]]");
    try {
        score_audit_set(three_records(), config, &fake);
        FAIL();
    } catch (const JudgeScoringError& e) {
        EXPECT_EQ(e.failed_ids().size(), 3u);
        EXPECT_EQ(fake.calls(), 0);
    }
}

TEST(ScoreAuditSet, UnparseableRepliesFailAfterRetries) {
    auto dir = fresh_dir("unparseable");
    auto config = config_for(dir);
    config.max_attempts = 2;
    FakeTransport fake("I refuse to rate.");
    auto audit = three_records();
    try {
        score_audit_set(audit, config, &fake);
        FAIL();
    } catch (const JudgeScoringError& e) {
        EXPECT_EQ(e.failed_ids().size(), 3u);
        EXPECT_NE(std::string(e.what()).find(audit[0].instance.id), std::string::npos);
        EXPECT_EQ(e.code(), ExitCode::judge_failure);
    }
    EXPECT_EQ(fake.calls(), 6);
    EXPECT_EQ(VerdictCache(dir).entry_count(), 0u);
}

TEST(ScoreAuditSet, InFlightBounded) {
    auto dir = fresh_dir("inflight");
    auto config = config_for(dir);
    config.max_in_flight = 2;
    std::vector<Rec> recs;
    for (int i = 0; i < 12; ++i) recs.push_back({i % 2 ? "A" : "B", 0, 0, {}, "r" + std::to_string(i)});
    FakeTransport fake("[[5]]", 5);
    score_audit_set(make_audit(recs), config, &fake);
    EXPECT_LE(fake.peak(), 2);
    EXPECT_EQ(fake.calls(), 12);
    std::filesystem::remove_all(dir);
}

TEST(ScoreAuditSet, PooledDriversRejected) {
    auto audit = three_records();
    auto recs = std::vector<AuditRecord>(audit.begin(), audit.end());
    auto dup = recs[0];
    dup.trajectory.driver_id = "other";
    recs.push_back(dup);
    AuditSet pooled(recs, audit.grouping(), audit.vocabulary());
    FakeTransport fake("[[5]]");
    EXPECT_THROW(score_audit_set(pooled, config_for(fresh_dir("pooled")), &fake), InputError);
}

TEST(HttpTransport, SplitEndpoint) {
    auto [base, path] = HttpJudgeTransport::split_endpoint("http://localhost:8080/v1/chat/completions");
    EXPECT_EQ(base, "http://localhost:8080");
    EXPECT_EQ(path, "/v1/chat/completions");
    EXPECT_THROW(HttpJudgeTransport::split_endpoint("localhost"), InputError);
}

TEST(HttpTransport, TalksToStubEndpoint) {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string auth_seen;
    std::mutex mu;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        {
            std::lock_guard lock(mu);
            auth_seen = req.get_header_value("Authorization");
        }
        auto body = nlohmann::json::parse(req.body);
        if (body.at("model") != "stub-judge" || body.at("messages").at(0).at("role") != "user") {
            res.status = 400;
            return;
        }
        nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "Fine. Rating: [[7]]"}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("AGENTAUDIT_TEST_KEY", "secret", 1);
    auto dir = fresh_dir("http");
    auto config = config_for(dir);
    config.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    config.api_key_env = "AGENTAUDIT_TEST_KEY";
    HttpJudgeTransport http;
    auto verdicts = score_audit_set(three_records(), config, &http);
    server.stop();
    t.join();

    EXPECT_EQ(hits.load(), 3);
    EXPECT_EQ(auth_seen, "Bearer secret");
    for (const auto& [id, v] : verdicts) EXPECT_EQ(v.raw_score, 7.0);
    std::filesystem::remove_all(dir);
}

TEST(HttpTransport, ServerErrorIsJudgeError) {
    httplib::Server server;
    server.Post("/x", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    JudgeConfig c = config_for(fresh_dir("http500"));
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/x";
    HttpJudgeTransport http;
    EXPECT_THROW(http.complete("p", c), JudgeError);
    server.stop();
    t.join();
}
