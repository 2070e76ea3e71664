#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "judgeirt/error.hpp"
#include "judgeirt/perturbation.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt {

// A judge response that could not be turned into a valid rating.
class ResponseParseError : public Error {
 public:
  using Error::Error;
};

/// Chat-completions endpoint. Every request is sent with temperature 0.
struct JudgeEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env = "JUDGE_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int max_concurrency = 4;
  double backoff_base_seconds = 1.0;

  // Empty when the variable is unset.
  std::string api_key() const;
  void validate() const;
};

struct CriterionScale {
  std::string key;
  int min = 1;
  int max = 5;
};

struct RatingSchema {
  std::vector<CriterionScale> criteria;

  void validate() const;
  std::map<std::string, ScaleBounds> bounds() const;
};

/// Accepts `{"criteria":[{"key","min","max"}, ...]}`.
RatingSchema rating_schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RatingSchema& s);

/// One evaluation sample: placeholder values plus optional base64 images.
struct Subject {
  std::string subject_id;
  std::map<std::string, std::string> fields;
  std::vector<std::string> images;  // data URLs or raw base64 (PNG assumed)
};

/// JSON array of `{"subject_id", "fields": {...}, "images": [...]}`.
std::vector<Subject> subjects_from_json(const nlohmann::json& j);
std::vector<Subject> load_subjects(const std::filesystem::path& path);

/// Substitutes every `{name}` placeholder with the subject's field.
std::string render_prompt(const std::string& template_text, const Subject& subject);

/// First balanced `{...}` span, ignoring braces inside JSON strings.
std::optional<std::string> extract_first_json_object(const std::string& text);

std::map<std::string, int> parse_rating_response(const std::string& text,
                                                 const RatingSchema& schema);

nlohmann::json build_request(const std::string& model, const std::string& prompt,
                             const std::vector<std::string>& images = {});

/// Hex SHA-256 over model, prompt and attachments.
std::string cache_key(const std::string& model, const std::string& prompt,
                      const std::vector<std::string>& images = {});

/// One JSON file per request hash: `{request, response, timestamp}`.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);

  bool enabled() const { return !dir_.empty(); }
  std::optional<std::string> load(const std::string& key) const;
  void store(const std::string& key, const nlohmann::json& request,
             const std::string& response) const;
  std::filesystem::path path_for(const std::string& key) const;

 private:
  std::filesystem::path dir_;
};

inline constexpr const char* kJsonOnlyNudge =
    "\n\nRespond with the JSON object only, without any other text.";

struct CollectOptions {
  std::filesystem::path cache_dir;  // empty disables caching
  std::uint64_t seed = 42;
};

struct MissingCell {
  std::string subject_id;
  std::string item_id;
  std::string reason;
};

struct CollectionResult {
  RatingDataset ratings;
  std::vector<MissingCell> missing;
  std::vector<std::string> warnings;
  int network_calls = 0;
};

/// Rates every (subject, variant) pair. Failed cells are reported as
/// missing and never filled in. Throws AuthError on 401/403.
CollectionResult collect_ratings(const VariantSet& variants, const std::vector<Subject>& subjects,
                                 const JudgeEndpoint& ep, const RatingSchema& schema,
                                 const CollectOptions& options = {});

}  // namespace judgeirt
