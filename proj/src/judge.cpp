#include "judgeirt/judge.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

// Eigen must precede httplib: resolv.h defines a `_res` macro that collides
// with Eigen parameter names.
#include "judgeirt/nuts.hpp"

#include <httplib.h>
#include <openssl/evp.h>

namespace judgeirt {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Outcome of one HTTP exchange after retries.
struct FetchResult {
  std::optional<std::string> content;
  std::string error;
  bool from_cache = false;
};

class Fetcher {
 public:
  Fetcher(const JudgeEndpoint& ep, const ResponseCache& cache, std::atomic<int>& calls)
      : ep_(ep), cache_(cache), calls_(calls), api_key_(ep.api_key()) {}

  FetchResult fetch(const std::string& prompt, const std::vector<std::string>& images,
                    std::mt19937_64& rng) const {
    const auto key = cache_key(ep_.model, prompt, images);
    if (cache_.enabled()) {
      if (auto hit = cache_.load(key)) return {hit, {}, true};
    }
    const auto request = build_request(ep_.model, prompt, images);
    const auto body = request.dump();
    std::string last_error;
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    for (int attempt = 0; attempt <= ep_.max_retries; ++attempt) {
      if (attempt > 0) {
        const double delay = ep_.backoff_base_seconds * std::pow(2.0, attempt - 1) * jitter(rng);
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
      }
      httplib::Client client(ep_.base_url);
      const auto secs = static_cast<time_t>(ep_.timeout_seconds);
      const auto usecs = static_cast<time_t>((ep_.timeout_seconds - static_cast<double>(secs)) * 1e6);
      client.set_connection_timeout(secs, usecs);
      client.set_read_timeout(secs, usecs);
      client.set_write_timeout(secs, usecs);
      if (!api_key_.empty()) client.set_bearer_token_auth(api_key_);
      ++calls_;
      auto res = client.Post(ep_.path, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403) {
        throw AuthError("judge endpoint rejected the credentials (HTTP " +
                        std::to_string(res->status) + ")");
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        return {std::nullopt, "HTTP " + std::to_string(res->status), false};
      }
      std::string content;
      try {
        auto j = nlohmann::json::parse(res->body);
        content = j.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed completion body: ") + e.what();
        continue;
      }
      if (cache_.enabled()) cache_.store(key, request, content);
      return {content, {}, false};
    }
    return {std::nullopt, last_error + " after " + std::to_string(ep_.max_retries) + " retries",
            false};
  }

 private:
  const JudgeEndpoint& ep_;
  const ResponseCache& cache_;
  std::atomic<int>& calls_;
  std::string api_key_;
};

struct CellOutcome {
  std::optional<std::map<std::string, int>> scores;
  std::string reason;
  std::vector<std::string> warnings;
};

}  // namespace

std::string JudgeEndpoint::api_key() const {
  if (api_key_env.empty()) return {};
  const char* v = std::getenv(api_key_env.c_str());
  return v ? std::string(v) : std::string();
}

void JudgeEndpoint::validate() const {
  if (base_url.empty()) throw InputError("judge endpoint URL is empty");
  if (model.empty()) throw InputError("judge model name is empty");
  if (timeout_seconds <= 0) throw InputError("judge timeout must be positive");
  if (max_retries < 0) throw InputError("max_retries must be non-negative");
  if (max_concurrency < 1) throw InputError("max_concurrency must be at least 1");
  if (backoff_base_seconds < 0) throw InputError("backoff base must be non-negative");
}

void RatingSchema::validate() const {
  if (criteria.empty()) throw InputError("rating schema has no criteria");
  std::set<std::string> seen;
  for (const auto& c : criteria) {
    if (c.key.empty()) throw InputError("rating schema has an empty criterion key");
    if (!seen.insert(c.key).second) throw InputError("duplicate criterion key '" + c.key + "'");
    if (c.min >= c.max) {
      throw InputError("criterion '" + c.key + "' needs min < max");
    }
  }
}

std::map<std::string, ScaleBounds> RatingSchema::bounds() const {
  std::map<std::string, ScaleBounds> out;
  for (const auto& c : criteria) out[c.key] = {c.min, c.max};
  return out;
}

RatingSchema rating_schema_from_json(const nlohmann::json& j) {
  RatingSchema s;
  try {
    for (const auto& c : j.at("criteria")) {
      s.criteria.push_back(
          {c.at("key").get<std::string>(), c.at("min").get<int>(), c.at("max").get<int>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed rating schema: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const RatingSchema& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : s.criteria) arr.push_back({{"key", c.key}, {"min", c.min}, {"max", c.max}});
  return {{"criteria", arr}};
}

std::vector<Subject> subjects_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InputError("subjects file must hold a JSON array");
  std::vector<Subject> out;
  std::set<std::string> seen;
  try {
    for (const auto& e : j) {
      Subject s;
      s.subject_id = e.at("subject_id").get<std::string>();
      if (s.subject_id.empty()) throw InputError("subject with empty subject_id");
      if (!seen.insert(s.subject_id).second) {
        throw InputError("duplicate subject_id '" + s.subject_id + "'");
      }
      for (const auto& [k, v] : e.at("fields").items()) {
        s.fields[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
      if (e.contains("images")) s.images = e.at("images").get<std::vector<std::string>>();
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed subjects file: ") + e.what());
  }
  return out;
}

std::vector<Subject> load_subjects(const std::filesystem::path& path) {
  try {
    return subjects_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("cannot parse " + path.string() + ": " + e.what());
  }
}

std::string render_prompt(const std::string& template_text, const Subject& subject) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& tok : tokenize(template_text)) {
    if (tok.kind != Token::Kind::placeholder) continue;
    const auto name = tok.text.substr(1, tok.text.size() - 2);
    auto it = subject.fields.find(name);
    if (it == subject.fields.end()) {
      throw InputError("subject '" + subject.subject_id + "' has no field '" + name + "'");
    }
    out.append(template_text, cursor, tok.begin - cursor);
    out += it->second;
    cursor = tok.end;
  }
  out.append(template_text, cursor, std::string::npos);
  return out;
}

std::optional<std::string> extract_first_json_object(const std::string& text) {
  std::optional<std::string> first_balanced;
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        auto span = text.substr(start, i - start + 1);
        auto parsed = nlohmann::json::parse(span, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object()) return span;
        if (!first_balanced) first_balanced = span;
        break;
      }
    }
  }
  return first_balanced;
}

std::map<std::string, int> parse_rating_response(const std::string& text,
                                                 const RatingSchema& schema) {
  auto span = extract_first_json_object(text);
  if (!span) throw ResponseParseError("no JSON object found in judge response");
  auto j = nlohmann::json::parse(*span, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ResponseParseError("judge response contains malformed JSON: " + *span);
  }
  std::map<std::string, int> out;
  for (const auto& c : schema.criteria) {
    if (!j.contains(c.key)) throw ResponseParseError("missing criterion key '" + c.key + "'");
    const auto& v = j.at(c.key);
    long long score = 0;
    if (v.is_number_integer()) {
      score = v.get<long long>();
    } else if (v.is_number_float() && std::isfinite(v.get<double>()) &&
               v.get<double>() == std::floor(v.get<double>())) {
      score = static_cast<long long>(v.get<double>());
    } else {
      throw ResponseParseError("non-integer value for '" + c.key + "': " + v.dump());
    }
    if (score < c.min || score > c.max) {
      throw ResponseParseError("score " + std::to_string(score) + " for '" + c.key +
                               "' is outside [" + std::to_string(c.min) + ", " +
                               std::to_string(c.max) + "]");
    }
    out[c.key] = static_cast<int>(score);
  }
  return out;
}

nlohmann::json build_request(const std::string& model, const std::string& prompt,
                             const std::vector<std::string>& images) {
  nlohmann::json content;
  if (images.empty()) {
    content = prompt;
  } else {
    content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    for (const auto& img : images) {
      const auto url = img.rfind("data:", 0) == 0 ? img : "data:image/png;base64," + img;
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
  }
  return {{"model", model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
          {"temperature", 0}};
}

std::string cache_key(const std::string& model, const std::string& prompt,
                      const std::vector<std::string>& images) {
  // Length-prefixed fields keep the encoding unambiguous.
  std::string material;
  auto add = [&material](const std::string& s) {
    material += std::to_string(s.size());
    material += ':';
    material += s;
  };
  add(model);
  add(prompt);
  for (const auto& img : images) add(img);

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(material.data(), material.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / (key + ".json");
}

std::optional<std::string> ResponseCache::load(const std::string& key) const {
  const auto p = path_for(key);
  if (!std::filesystem::exists(p)) return std::nullopt;
  auto j = nlohmann::json::parse(read_file(p), nullptr, false);
  if (j.is_discarded() || !j.contains("response") || !j["response"].is_string()) {
    return std::nullopt;
  }
  return j["response"].get<std::string>();
}

void ResponseCache::store(const std::string& key, const nlohmann::json& request,
                          const std::string& response) const {
  nlohmann::json entry = {{"request", request}, {"response", response},
                          {"timestamp", utc_timestamp()}};
  const auto final_path = path_for(key);
  auto tmp = final_path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    out << entry.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, final_path);
}

CollectionResult collect_ratings(const VariantSet& variants, const std::vector<Subject>& subjects,
                                 const JudgeEndpoint& ep, const RatingSchema& schema,
                                 const CollectOptions& options) {
  ep.validate();
  schema.validate();
  if (subjects.empty()) throw InputError("no subjects to rate");

  struct Cell {
    const Subject* subject;
    std::string item;
    std::string prompt;
  };
  std::vector<Cell> cells;
  for (const auto& s : subjects) {
    for (const char* item : VariantSet::kItemNames) {
      cells.push_back({&s, item, render_prompt(variants.text(item), s)});
    }
  }

  ResponseCache cache(options.cache_dir);
  std::atomic<int> calls{0};
  Fetcher fetcher(ep, cache, calls);
  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto work = [&] {
    while (!abort) {
      const std::size_t i = next++;
      if (i >= cells.size()) return;
      const auto& cell = cells[i];
      std::mt19937_64 rng(nuts::derive_seed(options.seed, i));
      auto& out = outcomes[i];
      try {
        auto first = fetcher.fetch(cell.prompt, cell.subject->images, rng);
        if (!first.content) {
          out.reason = first.error;
          continue;
        }
        try {
          out.scores = parse_rating_response(*first.content, schema);
          continue;
        } catch (const ResponseParseError& e) {
          out.warnings.push_back("subject " + cell.subject->subject_id + ", item " + cell.item +
                                 ": " + e.what() + "; retrying with a JSON-only nudge");
        }
        auto second = fetcher.fetch(cell.prompt + kJsonOnlyNudge, cell.subject->images, rng);
        if (!second.content) {
          out.reason = second.error;
          continue;
        }
        try {
          out.scores = parse_rating_response(*second.content, schema);
        } catch (const ResponseParseError& e) {
          out.reason = e.what();
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
    }
  };

  const int workers =
      std::max(1, std::min<int>(ep.max_concurrency, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  CollectionResult result;
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    auto& out = outcomes[i];
    for (auto& w : out.warnings) result.warnings.push_back(std::move(w));
    if (!out.scores) {
      result.missing.push_back({cell.subject->subject_id, cell.item, out.reason});
      result.warnings.push_back("subject " + cell.subject->subject_id + ", item " + cell.item +
                                " recorded as missing: " + out.reason);
      continue;
    }
    for (const auto& c : schema.criteria) {
      obs.push_back({cell.subject->subject_id, cell.item, c.key, out.scores->at(c.key)});
    }
  }
  result.ratings = RatingDataset(std::move(obs), schema.bounds());
  result.network_calls = calls;
  return result;
}

}  // namespace judgeirt
