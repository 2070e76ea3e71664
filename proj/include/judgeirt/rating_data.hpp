#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "judgeirt/error.hpp"

namespace judgeirt {

struct Observation {
  std::string subject_id;
  std::string item_id;
  std::string criterion;
  int raw_score = 0;

  bool operator==(const Observation&) const = default;
};

struct ScaleBounds {
  int min = 0;
  int max = 0;
};

enum class RatingFormat { csv, json };

/// Long-form ordinal ratings. Immutable once constructed; the constructor
/// enforces uniqueness of (subject, item, criterion) and the declared
/// per-criterion scale bounds.
class RatingDataset {
 public:
  RatingDataset() = default;
  explicit RatingDataset(std::vector<Observation> observations,
                         std::map<std::string, ScaleBounds> bounds = {});

  const std::vector<Observation>& observations() const { return observations_; }
  // Sorted, distinct identifiers.
  const std::vector<std::string>& subjects() const { return subjects_; }
  const std::vector<std::string>& items() const { return items_; }
  std::vector<std::string> criteria() const;
  bool has_criterion(const std::string& criterion) const;

  // Observations for one criterion, in stored order.
  std::vector<Observation> for_criterion(const std::string& criterion) const;
  // Subset restricted to the listed items (all criteria kept).
  RatingDataset restrict_items(const std::vector<std::string>& items) const;

  std::size_t size() const { return observations_.size(); }
  bool empty() const { return observations_.empty(); }

  bool operator==(const RatingDataset& other) const {
    return observations_ == other.observations_;
  }

 private:
  std::vector<Observation> observations_;
  std::vector<std::string> subjects_;
  std::vector<std::string> items_;
};

RatingFormat format_from_path(const std::filesystem::path& path);

RatingDataset parse_ratings_csv(const std::string& text,
                                const std::map<std::string, ScaleBounds>& bounds = {});
RatingDataset parse_ratings_json(const std::string& text,
                                 const std::map<std::string, ScaleBounds>& bounds = {});
RatingDataset load_ratings(const std::filesystem::path& path, RatingFormat format,
                           const std::map<std::string, ScaleBounds>& bounds = {});
RatingDataset load_ratings(const std::filesystem::path& path);

std::string to_csv(const RatingDataset& d);
std::string to_json(const RatingDataset& d);
void save_ratings(const RatingDataset& d, const std::filesystem::path& path);

/// Per-item bijection between observed raw scores and contiguous
/// category indices 1..K_p.
class CategoryMap {
 public:
  void add_item(const std::string& item_id, std::vector<int> observed_scores);

  // K_p, the number of distinct observed raw scores.
  int num_categories(const std::string& item_id) const;
  int to_index(const std::string& item_id, int raw_score) const;
  int to_raw(const std::string& item_id, int index) const;
  const std::vector<int>& scores(const std::string& item_id) const;
  bool contains(const std::string& item_id) const { return scores_.count(item_id) > 0; }

 private:
  std::map<std::string, std::vector<int>> scores_;
};

struct IndexedObservation {
  int subject = 0;
  int item = 0;
  int category = 0;  // 1-based
};

/// Dense view of one criterion, ready for fitting. Only fittable items
/// (K_p >= 2) and the subjects they rate are present.
struct IndexedDataset {
  std::string criterion;
  std::vector<std::string> subject_ids;
  std::vector<std::string> item_ids;
  std::vector<int> num_categories;  // K_p per item
  std::vector<IndexedObservation> observations;
  CategoryMap categories;
  std::vector<std::string> excluded_items;
  std::vector<std::string> warnings;

  int num_subjects() const { return static_cast<int>(subject_ids.size()); }
  int num_items() const { return static_cast<int>(item_ids.size()); }
  int item_index(const std::string& item_id) const;
  bool all_binary() const;

  // Inverse of relabel_categories for the retained items.
  RatingDataset to_rating_dataset() const;
};

IndexedDataset relabel_categories(const RatingDataset& d, const std::string& criterion);

enum class Severity { info, warning };

struct Diagnostic {
  Severity severity = Severity::info;
  std::string code;
  std::string message;
};

/// Structured data-quality report; never mutates the dataset.
std::vector<Diagnostic> validate(const RatingDataset& d);

}  // namespace judgeirt
