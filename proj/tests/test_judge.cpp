#include <doctest.h>

#include <atomic>
#include <functional>
#include <mutex>
#include <set>
#include <thread>

// Eigen-dependent headers come before httplib; resolv.h defines a _res macro.
#include "judgeirt/judge.hpp"
#include "judgeirt/nuts.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace judgeirt;
using nlohmann::json;

namespace {

RatingSchema quality_schema() { return rating_schema_from_json(json::parse(R"({"criteria":[{"key":"quality","min":1,"max":5}]})")); }

json completion(const std::string& content) {
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}};
}

// Local chat-completions stand-in. The handler maps a request body to a
// status and a message content.
class MockJudge {
 public:
  using Handler = std::function<std::pair<int, std::string>(const json& request)>;

  explicit MockJudge(Handler h) : handler_(std::move(h)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = json::parse(req.body);
      {
        std::lock_guard<std::mutex> lock(mutex_);
        requests_.push_back(body);
        auth_.push_back(req.get_header_value("Authorization"));
      }
      auto [status, content] = handler_(body);
      res.status = status;
      res.set_content(status == 200 ? completion(content).dump() : std::string("{}"),
                      "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockJudge() {
    server_.stop();
    thread_.join();
  }

  JudgeEndpoint endpoint() const {
    JudgeEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port_);
    ep.model = "mock-judge";
    ep.api_key_env = "JUDGEIRT_TEST_KEY";
    ep.backoff_base_seconds = 0.01;
    ep.timeout_seconds = 5;
    return ep;
  }
  std::vector<json> requests() {
    std::lock_guard<std::mutex> lock(mutex_);
    return requests_;
  }
  std::vector<std::string> auth_headers() {
    std::lock_guard<std::mutex> lock(mutex_);
    return auth_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  std::vector<json> requests_;
  std::vector<std::string> auth_;
};

std::string prompt_of(const json& request) {
  const auto& content = request["messages"][0]["content"];
  if (content.is_string()) return content.get<std::string>();
  return content[0]["text"].get<std::string>();
}

VariantSet simple_variants() {
  VariantSet v;
  v.original = "Rate {summary} from 1 to 5. Reply in JSON.";
  v.typo = "Rtae {summary} from 1 to 5. Reply in JSON.";
  v.newline = "Rate {summary}\n\nfrom 1 to 5. Reply in JSON.";
  v.paraphrase = "Grade {summary} from 1 to 5. Reply in JSON.";
  return v;
}

std::vector<Subject> subjects(int n) {
  std::vector<Subject> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({"s" + std::to_string(i), {{"summary", "text number " + std::to_string(i)}}, {}});
  }
  return out;
}

// Deterministic score from the prompt so reruns can be compared.
int score_for(const std::string& prompt) {
  return 1 + static_cast<int>(std::hash<std::string>{}(prompt) % 5);
}

}  // namespace

TEST_CASE("rating responses are parsed from the first JSON object") {
  auto schema = quality_schema();
  CHECK(parse_rating_response(R"({"quality": 4})", schema).at("quality") == 4);
  CHECK(parse_rating_response("Sure! Here it is: {\"quality\": 2} Hope that helps {x}", schema)
            .at("quality") == 2);
  CHECK(parse_rating_response("```json\n{\"note\": \"a } brace\", \"quality\": 5}\n```", schema)
            .at("quality") == 5);
  CHECK(parse_rating_response(R"({"quality": 4.0})", schema).at("quality") == 4);
  CHECK_THROWS_AS(parse_rating_response(R"({"quality": 3.5})", schema), ResponseParseError);
  CHECK_THROWS_AS(parse_rating_response(R"({"quality": 6})", schema), ResponseParseError);
  CHECK_THROWS_AS(parse_rating_response(R"({"fluency": 3})", schema), ResponseParseError);
  CHECK_THROWS_AS(parse_rating_response("no json here", schema), ResponseParseError);
  CHECK_THROWS_AS(parse_rating_response(R"({"quality": "4"})", schema), ResponseParseError);
}

TEST_CASE("JSON object extraction respects strings and nesting") {
  CHECK(extract_first_json_object(R"(pre {"a": {"b": 1}} post {"c": 2})") ==
        std::optional<std::string>(R"({"a": {"b": 1}})"));
  CHECK(extract_first_json_object(R"({"s": "}{"})") == std::optional<std::string>(R"({"s": "}{"})"));
  CHECK(extract_first_json_object("{not json} {\"q\": 1}") ==
        std::optional<std::string>("{\"q\": 1}"));
  CHECK_FALSE(extract_first_json_object("nothing").has_value());
}

TEST_CASE("prompts, requests and cache keys") {
  Subject s{"s1", {{"summary", "A short text."}}, {}};
  CHECK(render_prompt("Rate: {summary}", s) == "Rate: A short text.");
  CHECK_THROWS_AS(render_prompt("Rate: {article}", s), InputError);
  auto req = build_request("m", "hello");
  CHECK(req["temperature"] == 0);
  CHECK(req["model"] == "m");
  CHECK(req["messages"][0]["content"] == "hello");
  auto with_image = build_request("m", "hello", {"iVBORw0KGgo="});
  REQUIRE(with_image["messages"][0]["content"].is_array());
  CHECK(with_image["messages"][0]["content"][1]["image_url"]["url"] ==
        "data:image/png;base64,iVBORw0KGgo=");
  CHECK(cache_key("m", "p").size() == 64);
  CHECK(cache_key("m", "p") == cache_key("m", "p"));
  CHECK(cache_key("m", "p") != cache_key("m2", "p"));
  CHECK(cache_key("m", "p") != cache_key("m", "p", {"img"}));
  CHECK(cache_key("ab", "c") != cache_key("a", "bc"));
}

TEST_CASE("schema and endpoint validation") {
  CHECK_THROWS_AS(rating_schema_from_json(json::parse(R"({"criteria":[]})")), InputError);
  CHECK_THROWS_AS(rating_schema_from_json(json::parse(R"({"criteria":[{"key":"q","min":5,"max":1}]})")),
                  InputError);
  auto schema = quality_schema();
  CHECK(rating_schema_from_json(to_json(schema)).criteria.size() == 1);
  JudgeEndpoint ep;
  CHECK_THROWS_AS(ep.validate(), InputError);
  auto subs = subjects_from_json(json::parse(R"([{"subject_id":"a","fields":{"summary":"x"}}])"));
  CHECK(subs.at(0).fields.at("summary") == "x");
  CHECK_THROWS_AS(subjects_from_json(json::parse(R"([{"fields":{}}])")), InputError);
}

TEST_CASE("collection sends temperature 0 and the exact prompt, then caches") {
  setenv("JUDGEIRT_TEST_KEY", "secret-token", 1);
  MockJudge mock([](const json& req) {
    const auto p = prompt_of(req);
    return std::make_pair(200, "{\"quality\": " + std::to_string(score_for(p)) + "}");
  });
  testing::TempDir dir("cache");
  CollectOptions options;
  options.cache_dir = dir / "cache";
  auto variants = simple_variants();
  auto subs = subjects(3);
  auto first = collect_ratings(variants, subs, mock.endpoint(), quality_schema(), options);
  CHECK(first.network_calls == 12);
  CHECK(first.ratings.size() == 12);
  CHECK(first.missing.empty());
  auto reqs = mock.requests();
  REQUIRE(reqs.size() == 12);
  std::set<std::string> prompts;
  for (const auto& r : reqs) {
    CHECK(r["temperature"] == 0);
    CHECK(r["model"] == "mock-judge");
    prompts.insert(prompt_of(r));
  }
  CHECK(prompts.count(render_prompt(variants.paraphrase, subs[2])) == 1);
  for (const auto& h : mock.auth_headers()) CHECK(h == "Bearer secret-token");
  for (const auto& o : first.ratings.observations()) {
    CHECK(o.raw_score == score_for(render_prompt(variants.text(o.item_id),
                                             subs[std::stoi(o.subject_id.substr(1))])));
  }

  auto second = collect_ratings(variants, subs, mock.endpoint(), quality_schema(), options);
  CHECK(second.network_calls == 0);
  CHECK(second.ratings == first.ratings);
  CHECK(mock.requests().size() == 12);
  unsetenv("JUDGEIRT_TEST_KEY");
}

TEST_CASE("invalid responses get one nudged retry, then become missing cells") {
  MockJudge mock([](const json& req) {
    const auto p = prompt_of(req);
    if (p.find("s0-fixable") != std::string::npos) {
      const bool nudged = p.find(kJsonOnlyNudge) != std::string::npos;
      return std::make_pair(200, std::string(nudged ? "{\"quality\": 3}" : "I would say three."));
    }
    return std::make_pair(200, std::string("{\"quality\": 9}"));
  });
  auto variants = simple_variants();
  std::vector<Subject> subs = {{"a", {{"summary", "s0-fixable"}}, {}}, {"b", {{"summary", "broken"}}, {}}};
  auto result = collect_ratings(variants, subs, mock.endpoint(), quality_schema());
  CHECK(result.ratings.size() == 4);
  for (const auto& o : result.ratings.observations()) {
    CHECK(o.subject_id == "a");
    CHECK(o.raw_score == 3);
  }
  CHECK(result.missing.size() == 4);
  for (const auto& m : result.missing) CHECK(m.subject_id == "b");
  CHECK(result.network_calls == 16);
  CHECK_FALSE(result.warnings.empty());
}

TEST_CASE("server errors are retried with backoff") {
  std::atomic<int> count{0};
  MockJudge mock([&](const json&) {
    return ++count <= 2 ? std::make_pair(500, std::string()) : std::make_pair(200, std::string("{\"quality\": 2}"));
  });
  auto ep = mock.endpoint();
  ep.max_concurrency = 1;
  VariantSet v = simple_variants();
  auto result = collect_ratings(v, subjects(1), ep, quality_schema());
  CHECK(result.missing.empty());
  CHECK(result.network_calls == 6);

  MockJudge down([](const json&) { return std::make_pair(503, std::string()); });
  auto ep2 = down.endpoint();
  ep2.max_retries = 2;
  auto failed = collect_ratings(v, subjects(1), ep2, quality_schema());
  CHECK(failed.ratings.empty());
  CHECK(failed.missing.size() == 4);
  CHECK(failed.network_calls == 12);
}

TEST_CASE("client errors other than auth are not retried") {
  MockJudge mock([](const json&) { return std::make_pair(400, std::string()); });
  auto result = collect_ratings(simple_variants(), subjects(1), mock.endpoint(), quality_schema());
  CHECK(result.missing.size() == 4);
  CHECK(result.network_calls == 4);
}

TEST_CASE("rejected credentials abort the run") {
  MockJudge mock([](const json&) { return std::make_pair(401, std::string()); });
  CHECK_THROWS_AS(collect_ratings(simple_variants(), subjects(2), mock.endpoint(), quality_schema()),
                  AuthError);
}

TEST_CASE("images are sent as content parts") {
  MockJudge mock([](const json&) { return std::make_pair(200, std::string("{\"quality\": 1}")); });
  std::vector<Subject> subs = {{"img", {{"summary", "x"}}, {"QUJD"}}};
  auto ep = mock.endpoint();
  auto result = collect_ratings(simple_variants(), subs, ep, quality_schema());
  CHECK(result.missing.empty());
  for (const auto& r : mock.requests()) {
    const auto& content = r["messages"][0]["content"];
    REQUIRE(content.is_array());
    CHECK(content.size() == 2);
    CHECK(content[1]["type"] == "image_url");
  }
}
