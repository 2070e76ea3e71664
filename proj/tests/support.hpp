#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "judgeirt/grm.hpp"
#include "judgeirt/rating_data.hpp"

namespace judgeirt::testing {

// Dense random ratings: every subject rated by every item, each item using
// between 2 and max_categories distinct scores.
inline RatingDataset random_ratings(std::mt19937_64& rng, int subjects, int items,
                                    int max_categories, const std::string& criterion = "quality") {
  std::vector<Observation> obs;
  std::uniform_int_distribution<int> k_dist(2, max_categories);
  for (int p = 0; p < items; ++p) {
    const int k = k_dist(rng);
    std::uniform_int_distribution<int> score(1, k);
    for (int j = 0; j < subjects; ++j) {
      // The first two subjects pin the extremes so every item has >= 2 categories.
      const int s = j == 0 ? 1 : j == 1 ? k : score(rng);
      obs.push_back({"s" + std::to_string(100 + j), "item" + std::to_string(p), criterion, s});
    }
  }
  return RatingDataset(std::move(obs));
}

inline UnconstrainedParams random_unconstrained(std::mt19937_64& rng, const ParameterLayout& layout) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd x(layout.dimension());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = n(rng);
  return layout.unpack(x);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("judgeirt_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace judgeirt::testing
