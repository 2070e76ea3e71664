#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "judgeirt/error.hpp"

namespace judgeirt {

/// Prompt text with `{name}` placeholder spans. Protected words are matched
/// case-insensitively and never perturbed.
struct PromptTemplate {
  std::string text;
  std::set<std::string> protected_words;

  static PromptTemplate with_default_protection(std::string text,
                                                const std::vector<std::string>& extra = {});
};

struct Token {
  enum class Kind { word, placeholder };
  Kind kind = Kind::word;
  std::size_t begin = 0;  // byte offset
  std::size_t end = 0;
  std::string text;
};

/// Words are maximal ASCII letter runs; `{identifier}` spans are placeholders.
std::vector<Token> tokenize(const std::string& text);
std::size_t count_words(const std::string& text);

enum class PosTag { verb, adjective, other };

struct PerturbationHooks {
  // Higher scores are perturbed first.
  std::function<double(const std::string& word, std::size_t word_index)> salience;
  // Index i such that characters i and i + 1 are swapped.
  std::function<std::size_t(const std::string& word, std::mt19937_64& rng)> swap_position;
  std::function<PosTag(const std::string& word)> pos_tagger;
  std::function<std::optional<std::string>(const std::string& word)> synonyms;

  /// Bundled offline defaults: length x inverse frequency salience, a
  /// seed-chosen adjacent swap, a suffix/lexicon tagger and a static
  /// synonym dictionary.
  static PerturbationHooks defaults();
};

double default_salience(const std::string& word);
PosTag default_pos_tag(const std::string& word);
std::optional<std::string> default_synonym(const std::string& word);

struct TypoChange {
  std::string original;
  std::string perturbed;
  std::size_t offset = 0;
  double salience = 0.0;
};

struct SynonymChange {
  std::string original;
  std::string replacement;
  std::size_t offset = 0;
};

struct GenerationLog {
  std::uint64_t seed = 42;
  std::vector<TypoChange> typo_tokens;
  std::vector<int> newline_positions;  // "extra newline after line k", 1-based
  std::vector<SynonymChange> paraphrase_pairs;

  bool operator==(const GenerationLog&) const;
};

inline constexpr int kTypoTokens = 5;
inline constexpr int kParaphraseTokens = 5;
inline constexpr int kMaxNewlineInsertions = 3;

struct PerturbationResult {
  PromptTemplate prompt;
  GenerationLog log;
};

PerturbationResult typo_variant(const PromptTemplate& t, const PerturbationHooks& hooks,
                                std::uint64_t seed);
PerturbationResult newline_variant(const PromptTemplate& t, std::uint64_t seed);
PerturbationResult paraphrase_variant(const PromptTemplate& t, const PerturbationHooks& hooks,
                                      std::uint64_t seed);

/// Undoes newline_variant given its logged insertion points.
std::string strip_inserted_newlines(const std::string& variant, const std::vector<int>& positions);

struct VariantSet {
  std::string original;
  std::string typo;
  std::string newline;
  std::string paraphrase;
  GenerationLog log;

  static constexpr const char* kItemNames[4] = {"original", "typo", "newline", "paraphrase"};
  const std::string& text(const std::string& item) const;
  bool operator==(const VariantSet&) const = default;
};

VariantSet generate_all(const PromptTemplate& t, const PerturbationHooks& hooks,
                        std::uint64_t seed = 42);

nlohmann::json to_json(const VariantSet& v);
VariantSet variant_set_from_json(const nlohmann::json& j);

}  // namespace judgeirt
