#include "judgeirt/rating_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace judgeirt {

namespace {

using json = nlohmann::json;

bool is_plain_identifier(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.' || c == '-';
  });
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && cur.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw InputError("line " + std::to_string(line_no) + ": unterminated quoted field");
  }
  fields.push_back(std::move(cur));
  return fields;
}

int parse_int_strict(const std::string& s, std::size_t line_no) {
  int value = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc() || ptr != last) {
    throw InputError("line " + std::to_string(line_no) + ": score '" + s +
                     "' is not an integer");
  }
  return value;
}

std::string csv_field(const std::string& s) {
  if (is_plain_identifier(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RatingDataset::RatingDataset(std::vector<Observation> observations,
                             std::map<std::string, ScaleBounds> bounds)
    : observations_(std::move(observations)) {
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::set<std::string> subjects;
  std::set<std::string> items;
  for (const auto& o : observations_) {
    if (o.subject_id.empty() || o.item_id.empty() || o.criterion.empty()) {
      throw InputError("observation with an empty identifier");
    }
    if (!seen.emplace(o.subject_id, o.item_id, o.criterion).second) {
      throw InputError("duplicate observation (" + o.subject_id + ", " + o.item_id + ", " +
                       o.criterion + ")");
    }
    if (auto it = bounds.find(o.criterion); it != bounds.end()) {
      if (o.raw_score < it->second.min || o.raw_score > it->second.max) {
        throw InputError("score " + std::to_string(o.raw_score) + " outside [" +
                         std::to_string(it->second.min) + ", " +
                         std::to_string(it->second.max) + "] for criterion " + o.criterion);
      }
    }
    subjects.insert(o.subject_id);
    items.insert(o.item_id);
  }
  subjects_.assign(subjects.begin(), subjects.end());
  items_.assign(items.begin(), items.end());
}

std::vector<std::string> RatingDataset::criteria() const {
  std::set<std::string> c;
  for (const auto& o : observations_) c.insert(o.criterion);
  return {c.begin(), c.end()};
}

bool RatingDataset::has_criterion(const std::string& criterion) const {
  return std::any_of(observations_.begin(), observations_.end(),
                     [&](const Observation& o) { return o.criterion == criterion; });
}

std::vector<Observation> RatingDataset::for_criterion(const std::string& criterion) const {
  std::vector<Observation> out;
  std::copy_if(observations_.begin(), observations_.end(), std::back_inserter(out),
               [&](const Observation& o) { return o.criterion == criterion; });
  return out;
}

RatingDataset RatingDataset::restrict_items(const std::vector<std::string>& items) const {
  std::set<std::string> keep(items.begin(), items.end());
  std::vector<Observation> out;
  std::copy_if(observations_.begin(), observations_.end(), std::back_inserter(out),
               [&](const Observation& o) { return keep.count(o.item_id) > 0; });
  return RatingDataset(std::move(out));
}

RatingFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".csv") return RatingFormat::csv;
  if (ext == ".json") return RatingFormat::json;
  throw InputError("cannot infer rating format from extension of " + path.string());
}

RatingDataset parse_ratings_csv(const std::string& text,
                                const std::map<std::string, ScaleBounds>& bounds) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<Observation> obs;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
      }
      if (line != "subject_id,item_id,criterion,score") {
        throw InputError("expected header 'subject_id,item_id,criterion,score', got '" +
                         line + "'");
      }
      header_seen = true;
      continue;
    }
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != 4) {
      throw InputError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    for (int i = 0; i < 3; ++i) {
      if (fields[i].empty()) {
        throw InputError("line " + std::to_string(line_no) + ": missing field");
      }
    }
    obs.push_back({fields[0], fields[1], fields[2], parse_int_strict(fields[3], line_no)});
  }
  if (obs.empty()) throw InputError("rating file contains no observations");
  return RatingDataset(std::move(obs), bounds);
}

RatingDataset parse_ratings_json(const std::string& text,
                                 const std::map<std::string, ScaleBounds>& bounds) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed JSON ratings: ") + e.what());
  }
  if (!doc.is_array()) throw InputError("JSON ratings must be an array of objects");
  std::vector<Observation> obs;
  std::size_t idx = 0;
  for (const auto& row : doc) {
    auto where = "record " + std::to_string(idx++);
    if (!row.is_object()) throw InputError(where + ": not an object");
    Observation o;
    for (const char* key : {"subject_id", "item_id", "criterion"}) {
      if (!row.contains(key) || !row[key].is_string()) {
        throw InputError(where + ": missing string field '" + key + "'");
      }
    }
    o.subject_id = row["subject_id"].get<std::string>();
    o.item_id = row["item_id"].get<std::string>();
    o.criterion = row["criterion"].get<std::string>();
    if (!row.contains("score") || !row["score"].is_number_integer()) {
      throw InputError(where + ": 'score' must be an integer");
    }
    o.raw_score = row["score"].get<int>();
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw InputError("rating file contains no observations");
  return RatingDataset(std::move(obs), bounds);
}

RatingDataset load_ratings(const std::filesystem::path& path, RatingFormat format,
                           const std::map<std::string, ScaleBounds>& bounds) {
  auto text = read_file(path);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw InputError("rating file " + path.string() + " is empty");
  }
  return format == RatingFormat::csv ? parse_ratings_csv(text, bounds)
                                     : parse_ratings_json(text, bounds);
}

RatingDataset load_ratings(const std::filesystem::path& path) {
  return load_ratings(path, format_from_path(path));
}

std::string to_csv(const RatingDataset& d) {
  std::string out = "subject_id,item_id,criterion,score\n";
  for (const auto& o : d.observations()) {
    out += csv_field(o.subject_id) + ',' + csv_field(o.item_id) + ',' +
           csv_field(o.criterion) + ',' + std::to_string(o.raw_score) + '\n';
  }
  return out;
}

std::string to_json(const RatingDataset& d) {
  json arr = json::array();
  for (const auto& o : d.observations()) {
    arr.push_back({{"subject_id", o.subject_id},
                   {"item_id", o.item_id},
                   {"criterion", o.criterion},
                   {"score", o.raw_score}});
  }
  return arr.dump(2) + "\n";
}

void save_ratings(const RatingDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << (format_from_path(path) == RatingFormat::csv ? to_csv(d) : to_json(d));
}

void CategoryMap::add_item(const std::string& item_id, std::vector<int> observed_scores) {
  std::sort(observed_scores.begin(), observed_scores.end());
  observed_scores.erase(std::unique(observed_scores.begin(), observed_scores.end()),
                        observed_scores.end());
  scores_[item_id] = std::move(observed_scores);
}

const std::vector<int>& CategoryMap::scores(const std::string& item_id) const {
  auto it = scores_.find(item_id);
  if (it == scores_.end()) throw InputError("unknown item " + item_id);
  return it->second;
}

int CategoryMap::num_categories(const std::string& item_id) const {
  return static_cast<int>(scores(item_id).size());
}

int CategoryMap::to_index(const std::string& item_id, int raw_score) const {
  const auto& s = scores(item_id);
  auto it = std::lower_bound(s.begin(), s.end(), raw_score);
  if (it == s.end() || *it != raw_score) {
    throw InputError("score " + std::to_string(raw_score) + " never observed for item " +
                     item_id);
  }
  return static_cast<int>(it - s.begin()) + 1;
}

int CategoryMap::to_raw(const std::string& item_id, int index) const {
  const auto& s = scores(item_id);
  if (index < 1 || index > static_cast<int>(s.size())) {
    throw InputError("category index " + std::to_string(index) + " out of range for item " +
                     item_id);
  }
  return s[index - 1];
}

int IndexedDataset::item_index(const std::string& item_id) const {
  auto it = std::find(item_ids.begin(), item_ids.end(), item_id);
  if (it == item_ids.end()) throw InputError("item " + item_id + " not in indexed dataset");
  return static_cast<int>(it - item_ids.begin());
}

bool IndexedDataset::all_binary() const {
  return std::all_of(num_categories.begin(), num_categories.end(),
                     [](int k) { return k == 2; });
}

RatingDataset IndexedDataset::to_rating_dataset() const {
  std::vector<Observation> out;
  out.reserve(observations.size());
  for (const auto& o : observations) {
    const auto& item = item_ids[o.item];
    out.push_back({subject_ids[o.subject], item, criterion, categories.to_raw(item, o.category)});
  }
  return RatingDataset(std::move(out));
}

IndexedDataset relabel_categories(const RatingDataset& d, const std::string& criterion) {
  auto obs = d.for_criterion(criterion);
  if (obs.empty()) throw InputError("criterion '" + criterion + "' not present in dataset");

  std::map<std::string, std::vector<int>> scores_by_item;
  for (const auto& o : obs) scores_by_item[o.item_id].push_back(o.raw_score);

  IndexedDataset out;
  out.criterion = criterion;
  for (auto& [item, scores] : scores_by_item) {
    out.categories.add_item(item, scores);
    int k = out.categories.num_categories(item);
    if (k < 2) {
      out.excluded_items.push_back(item);
      out.warnings.push_back("item " + item + " uses a single category and is excluded from fitting");
      continue;
    }
    out.item_ids.push_back(item);
    out.num_categories.push_back(k);
  }
  if (out.item_ids.empty()) {
    throw InputError("all items are degenerate (single observed category) for criterion '" +
                     criterion + "'");
  }

  std::map<std::string, int> item_pos;
  for (int p = 0; p < out.num_items(); ++p) item_pos[out.item_ids[p]] = p;

  std::set<std::string> subjects;
  for (const auto& o : obs) {
    if (item_pos.count(o.item_id)) subjects.insert(o.subject_id);
  }
  out.subject_ids.assign(subjects.begin(), subjects.end());
  std::map<std::string, int> subject_pos;
  for (int j = 0; j < out.num_subjects(); ++j) subject_pos[out.subject_ids[j]] = j;

  for (const auto& o : obs) {
    auto it = item_pos.find(o.item_id);
    if (it == item_pos.end()) continue;
    out.observations.push_back({subject_pos.at(o.subject_id), it->second,
                                out.categories.to_index(o.item_id, o.raw_score)});
  }
  std::set<std::string> crit_subjects;
  for (const auto& o : obs) crit_subjects.insert(o.subject_id);
  auto dropped = crit_subjects.size() - out.subject_ids.size();
  if (dropped > 0) {
    out.warnings.push_back(std::to_string(dropped) +
                           " subject(s) rated only by excluded items were dropped");
  }
  return out;
}

std::vector<Diagnostic> validate(const RatingDataset& d) {
  std::vector<Diagnostic> out;
  for (const auto& criterion : d.criteria()) {
    auto obs = d.for_criterion(criterion);
    std::set<std::string> subjects;
    std::map<std::string, std::set<std::string>> subjects_per_item;
    std::map<std::string, std::set<std::string>> items_per_subject;
    std::map<std::pair<std::string, int>, int> category_counts;
    for (const auto& o : obs) {
      subjects.insert(o.subject_id);
      subjects_per_item[o.item_id].insert(o.subject_id);
      items_per_subject[o.subject_id].insert(o.item_id);
      ++category_counts[{o.item_id, o.raw_score}];
    }
    for (const auto& [item, subs] : subjects_per_item) {
      if (2 * subs.size() < subjects.size()) {
        out.push_back({Severity::warning, "sparse_item",
                       "item " + item + " rates " + std::to_string(subs.size()) + " of " +
                           std::to_string(subjects.size()) + " subjects (" + criterion + ")"});
      }
    }
    if (subjects_per_item.size() > 1) {
      for (const auto& [subject, items] : items_per_subject) {
        if (items.size() == 1) {
          out.push_back({Severity::info, "single_item_subject",
                         "subject " + subject + " is rated by only one item (" + criterion +
                             ")"});
        }
      }
    }
    for (const auto& [key, count] : category_counts) {
      if (count == 1) {
        out.push_back({Severity::warning, "singleton_category",
                       "singleton category (" + key.first + ", " + std::to_string(key.second) +
                           ") for criterion " + criterion});
      }
    }
  }
  return out;
}

}  // namespace judgeirt
