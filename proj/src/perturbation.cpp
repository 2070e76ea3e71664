#include "judgeirt/perturbation.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <unordered_map>

#include "judgeirt/error.hpp"
#include "judgeirt/nuts.hpp"

namespace judgeirt {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

bool is_identifier_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_protected(const PromptTemplate& t, const std::string& word) {
  return t.protected_words.count(lower(word)) > 0;
}

bool has_swappable_pair(const std::string& word) {
  for (std::size_t i = 0; i + 1 < word.size(); ++i) {
    if (word[i] != word[i + 1]) return true;
  }
  return false;
}

std::string match_case(const std::string& like, std::string word) {
  const bool all_upper = std::all_of(like.begin(), like.end(), [](unsigned char c) {
    return std::isupper(c);
  });
  if (all_upper && like.size() > 1) {
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return std::toupper(c); });
    return word;
  }
  word = lower(word);
  if (!like.empty() && std::isupper(static_cast<unsigned char>(like[0]))) {
    word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  }
  return word;
}

// Approximate occurrences per million words in general English text.
const std::unordered_map<std::string, double>& word_frequencies() {
  static const std::unordered_map<std::string, double> table = {
      {"the", 56271}, {"of", 29391}, {"and", 26817}, {"to", 25214}, {"a", 21626},
      {"in", 18214}, {"is", 9982}, {"that", 10475}, {"for", 8860}, {"it", 10875},
      {"you", 12110}, {"your", 1926}, {"on", 6620}, {"with", 6575}, {"as", 6706},
      {"be", 6425}, {"this", 5012}, {"are", 4486}, {"or", 3871}, {"by", 5095},
      {"not", 4627}, {"from", 4134}, {"at", 4790}, {"an", 3421}, {"if", 2369},
      {"will", 2922}, {"each", 842}, {"which", 3719}, {"all", 2994}, {"one", 3297},
      {"can", 2306}, {"should", 1212}, {"only", 1726}, {"please", 412}, {"then", 1538},
      {"based", 389}, {"score", 211}, {"scores", 93}, {"rate", 201}, {"rating", 95},
      {"given", 742}, {"following", 583}, {"provide", 274}, {"response", 214},
      {"task", 127}, {"evaluate", 41}, {"evaluation", 83}, {"summary", 57},
      {"document", 97}, {"article", 151}, {"text", 134}, {"answer", 266}, {"question", 348},
      {"user", 61}, {"output", 62}, {"input", 52}, {"quality", 160}, {"criteria", 44},
      {"read", 355}, {"carefully", 54}, {"good", 797}, {"very", 1012}, {"more", 2237},
      {"most", 1046}, {"how", 1355}, {"what", 2493}, {"well", 1099}, {"about", 1815},
      {"into", 1634}, {"do", 2571}, {"does", 612}, {"has", 2563}, {"have", 3942},
      {"should", 1212}, {"make", 1004}, {"sure", 336}, {"other", 1335}, {"any", 1054},
      {"these", 1254}, {"those", 532}, {"there", 2725}, {"their", 2608}, {"its", 1635},
      {"than", 1518}, {"also", 1249}, {"use", 527}, {"using", 230}, {"when", 1979},
      {"where", 923}, {"who", 2177}, {"whether", 329}, {"between", 650}, {"low", 224},
      {"high", 581}, {"lower", 104}, {"higher", 196}, {"indicate", 48}, {"indicates", 51},
      {"consider", 147}, {"expert", 53}, {"assess", 31}, {"instructions", 28},
      {"example", 236}, {"step", 142}, {"steps", 85}, {"json", 1}, {"format", 22},
  };
  return table;
}

// Lexicon entries override the suffix rules of the default tagger.
const std::unordered_map<std::string, PosTag>& pos_lexicon() {
  static const std::unordered_map<std::string, PosTag> table = {
      {"evaluate", PosTag::verb}, {"assess", PosTag::verb}, {"rate", PosTag::verb},
      {"read", PosTag::verb}, {"provide", PosTag::verb}, {"follow", PosTag::verb},
      {"consider", PosTag::verb}, {"determine", PosTag::verb}, {"write", PosTag::verb},
      {"written", PosTag::verb}, {"proposed", PosTag::verb}, {"given", PosTag::verb},
      {"make", PosTag::verb}, {"ensure", PosTag::verb}, {"check", PosTag::verb},
      {"use", PosTag::verb}, {"include", PosTag::verb}, {"describe", PosTag::verb},
      {"explain", PosTag::verb}, {"identify", PosTag::verb}, {"review", PosTag::verb},
      {"answer", PosTag::verb}, {"respond", PosTag::verb}, {"judge", PosTag::verb},
      {"indicate", PosTag::verb}, {"indicates", PosTag::verb}, {"contains", PosTag::verb},
      {"contain", PosTag::verb}, {"stays", PosTag::verb}, {"addresses", PosTag::verb},
      {"serves", PosTag::verb}, {"follows", PosTag::verb}, {"compare", PosTag::verb},
      {"focus", PosTag::verb}, {"understand", PosTag::verb}, {"summarize", PosTag::verb},
      {"generate", PosTag::verb}, {"produce", PosTag::verb}, {"return", PosTag::verb},
      {"assign", PosTag::verb}, {"remember", PosTag::verb}, {"keep", PosTag::verb},
      {"aware", PosTag::adjective}, {"expert", PosTag::adjective},
      {"consistent", PosTag::adjective}, {"sophisticated", PosTag::adjective},
      {"good", PosTag::adjective}, {"clear", PosTag::adjective}, {"main", PosTag::adjective},
      {"high", PosTag::adjective}, {"low", PosTag::adjective}, {"poor", PosTag::adjective},
      {"relevant", PosTag::adjective}, {"important", PosTag::adjective},
      {"accurate", PosTag::adjective}, {"complete", PosTag::adjective},
      {"correct", PosTag::adjective}, {"helpful", PosTag::adjective},
      {"coherent", PosTag::adjective}, {"fluent", PosTag::adjective},
      {"natural", PosTag::adjective}, {"overall", PosTag::adjective},
      {"specific", PosTag::adjective}, {"simple", PosTag::adjective},
      {"original", PosTag::adjective}, {"previous", PosTag::adjective},
      {"logical", PosTag::adjective}, {"appropriate", PosTag::adjective},
      {"detailed", PosTag::adjective}, {"excellent", PosTag::adjective},
      {"valid", PosTag::adjective}, {"careful", PosTag::adjective},
      {"engaging", PosTag::adjective}, {"interesting", PosTag::adjective},
      {"the", PosTag::other}, {"this", PosTag::other}, {"that", PosTag::other},
      {"and", PosTag::other}, {"for", PosTag::other}, {"with", PosTag::other},
      {"will", PosTag::other}, {"need", PosTag::other}, {"please", PosTag::other},
      {"following", PosTag::adjective}, {"being", PosTag::other}, {"thing", PosTag::other},
      {"nothing", PosTag::other}, {"anything", PosTag::other}, {"something", PosTag::other},
      {"everything", PosTag::other}, {"during", PosTag::other}, {"need", PosTag::other},
  };
  return table;
}

const std::unordered_map<std::string, std::string>& synonym_table() {
  static const std::unordered_map<std::string, std::string> table = {
      {"evaluate", "assess"},       {"assess", "evaluate"},       {"written", "composed"},
      {"follow", "adhere"},         {"aware", "cognizant"},       {"proposed", "suggested"},
      {"expert", "specialist"},     {"following", "subsequent"},  {"consistent", "coherent"},
      {"sophisticated", "complex"}, {"provide", "supply"},        {"rate", "grade"},
      {"read", "peruse"},           {"determine", "establish"},   {"consider", "regard"},
      {"relevant", "pertinent"},    {"important", "significant"}, {"clear", "lucid"},
      {"good", "fine"},             {"given", "provided"},        {"main", "primary"},
      {"careful", "attentive"},     {"accurate", "precise"},      {"complete", "thorough"},
      {"natural", "organic"},       {"make", "create"},           {"ensure", "guarantee"},
      {"check", "verify"},          {"use", "employ"},            {"include", "contain"},
      {"describe", "depict"},       {"explain", "clarify"},       {"identify", "recognize"},
      {"review", "examine"},        {"answer", "reply"},          {"respond", "reply"},
      {"detailed", "thorough"},     {"correct", "right"},         {"helpful", "useful"},
      {"coherent", "cohesive"},     {"fluent", "smooth"},         {"engaging", "captivating"},
      {"interesting", "intriguing"}, {"high", "elevated"},        {"low", "reduced"},
      {"poor", "weak"},             {"excellent", "outstanding"}, {"appropriate", "suitable"},
      {"previous", "prior"},        {"logical", "rational"},      {"overall", "general"},
      {"specific", "particular"},   {"simple", "plain"},          {"original", "initial"},
      {"valid", "sound"},           {"indicate", "signal"},       {"indicates", "signals"},
      {"contains", "includes"},     {"contain", "include"},       {"stays", "remains"},
      {"addresses", "tackles"},     {"serves", "functions"},      {"follows", "proceeds"},
      {"compare", "contrast"},      {"focus", "concentrate"},     {"understand", "comprehend"},
      {"summarize", "condense"},    {"generate", "produce"},      {"produce", "generate"},
      {"return", "give"},           {"assign", "allocate"},       {"remember", "recall"},
      {"keep", "retain"},           {"judge", "appraise"},        {"write", "compose"},
  };
  return table;
}

std::vector<Token> word_tokens(const std::string& text) {
  auto tokens = tokenize(text);
  std::erase_if(tokens, [](const Token& t) { return t.kind != Token::Kind::word; });
  return tokens;
}

}  // namespace

PromptTemplate PromptTemplate::with_default_protection(std::string text,
                                                       const std::vector<std::string>& extra) {
  PromptTemplate t;
  t.text = std::move(text);
  t.protected_words = {"json", "format"};
  for (const auto& w : extra) t.protected_words.insert(lower(w));
  return t;
}

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{' && i + 1 < text.size() &&
        (std::isalpha(static_cast<unsigned char>(text[i + 1])) || text[i + 1] == '_')) {
      std::size_t j = i + 1;
      while (j < text.size() && is_identifier_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}') {
        out.push_back({Token::Kind::placeholder, i, j + 1, text.substr(i, j + 1 - i)});
        i = j + 1;
        continue;
      }
    }
    if (is_letter(text[i])) {
      std::size_t j = i;
      while (j < text.size() && is_letter(text[j])) ++j;
      out.push_back({Token::Kind::word, i, j, text.substr(i, j - i)});
      i = j;
      continue;
    }
    ++i;
  }
  return out;
}

std::size_t count_words(const std::string& text) { return word_tokens(text).size(); }

double default_salience(const std::string& word) {
  const auto& freq = word_frequencies();
  auto it = freq.find(lower(word));
  const double per_million = it == freq.end() ? 10.0 : it->second;
  return static_cast<double>(word.size()) / per_million;
}

PosTag default_pos_tag(const std::string& word) {
  const auto w = lower(word);
  const auto& lex = pos_lexicon();
  if (auto it = lex.find(w); it != lex.end()) return it->second;
  auto ends_with = [&](const char* suffix) {
    const std::string s(suffix);
    return w.size() > s.size() + 2 && w.compare(w.size() - s.size(), s.size(), s) == 0;
  };
  for (const char* s : {"ous", "ful", "ive", "able", "ible", "less", "ical", "ent", "ant"}) {
    if (ends_with(s)) return PosTag::adjective;
  }
  for (const char* s : {"ate", "ize", "ise", "ify", "ed", "ing"}) {
    if (ends_with(s)) return PosTag::verb;
  }
  return PosTag::other;
}

std::optional<std::string> default_synonym(const std::string& word) {
  const auto& table = synonym_table();
  auto it = table.find(lower(word));
  if (it == table.end()) return std::nullopt;
  return it->second;
}

PerturbationHooks PerturbationHooks::defaults() {
  PerturbationHooks h;
  h.salience = [](const std::string& word, std::size_t) { return default_salience(word); };
  h.swap_position = [](const std::string& word, std::mt19937_64& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      if (word[i] != word[i + 1]) candidates.push_back(i);
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    return candidates[pick(rng)];
  };
  h.pos_tagger = default_pos_tag;
  h.synonyms = default_synonym;
  return h;
}

bool GenerationLog::operator==(const GenerationLog& o) const {
  auto typo_eq = [](const TypoChange& a, const TypoChange& b) {
    return a.original == b.original && a.perturbed == b.perturbed && a.offset == b.offset;
  };
  auto syn_eq = [](const SynonymChange& a, const SynonymChange& b) {
    return a.original == b.original && a.replacement == b.replacement && a.offset == b.offset;
  };
  return seed == o.seed && newline_positions == o.newline_positions &&
         std::equal(typo_tokens.begin(), typo_tokens.end(), o.typo_tokens.begin(),
                    o.typo_tokens.end(), typo_eq) &&
         std::equal(paraphrase_pairs.begin(), paraphrase_pairs.end(), o.paraphrase_pairs.begin(),
                    o.paraphrase_pairs.end(), syn_eq);
}

PerturbationResult typo_variant(const PromptTemplate& t, const PerturbationHooks& hooks,
                                std::uint64_t seed) {
  struct Candidate {
    Token token;
    double salience;
    std::size_t order;
  };
  std::vector<Candidate> candidates;
  std::set<std::string> seen;
  auto words = word_tokens(t.text);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (is_protected(t, w.text)) continue;
    candidates.push_back({w, hooks.salience(w.text, i), i});
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.salience > b.salience; });

  std::vector<Candidate> chosen;
  for (const auto& c : candidates) {
    if (static_cast<int>(chosen.size()) == kTypoTokens) break;
    // Short words are skipped and the next-ranked token is promoted.
    if (c.token.text.size() < 3 || !has_swappable_pair(c.token.text)) continue;
    if (!seen.insert(c.token.text).second) continue;
    chosen.push_back(c);
  }
  if (static_cast<int>(chosen.size()) < kTypoTokens) {
    throw InputError("insufficient typo candidates: need " + std::to_string(kTypoTokens) +
                     " eligible tokens, found " + std::to_string(chosen.size()));
  }

  std::mt19937_64 rng(nuts::derive_seed(seed, 1));
  PerturbationResult out;
  out.prompt = t;
  out.log.seed = seed;
  for (const auto& c : chosen) {
    std::string word = c.token.text;
    const std::size_t pos = hooks.swap_position(word, rng);
    if (pos + 1 >= word.size() || word[pos] == word[pos + 1]) {
      throw InputError("swap position hook returned an invalid index for '" + word + "'");
    }
    std::swap(word[pos], word[pos + 1]);
    out.prompt.text.replace(c.token.begin, word.size(), word);
    out.log.typo_tokens.push_back({c.token.text, word, c.token.begin, c.salience});
  }
  std::sort(out.log.typo_tokens.begin(), out.log.typo_tokens.end(),
            [](const TypoChange& a, const TypoChange& b) { return a.offset < b.offset; });
  return out;
}

PerturbationResult newline_variant(const PromptTemplate& t, std::uint64_t seed) {
  std::vector<std::size_t> newline_offsets;
  for (std::size_t i = 0; i < t.text.size(); ++i) {
    if (t.text[i] == '\n') newline_offsets.push_back(i);
  }
  if (newline_offsets.empty()) {
    throw InputError("newline variant needs a template with at least two lines");
  }
  // Boundary k sits after line k (1-based), at newline_offsets[k - 1].
  std::vector<int> boundaries(newline_offsets.size());
  std::iota(boundaries.begin(), boundaries.end(), 1);
  std::mt19937_64 rng(nuts::derive_seed(seed, 2));
  std::shuffle(boundaries.begin(), boundaries.end(), rng);
  boundaries.resize(std::min<std::size_t>(boundaries.size(), kMaxNewlineInsertions));
  std::sort(boundaries.begin(), boundaries.end());

  PerturbationResult out;
  out.prompt = t;
  out.log.seed = seed;
  out.log.newline_positions = boundaries;
  for (auto it = boundaries.rbegin(); it != boundaries.rend(); ++it) {
    out.prompt.text.insert(newline_offsets[*it - 1], 1, '\n');
  }
  return out;
}

std::string strip_inserted_newlines(const std::string& variant, const std::vector<int>& positions) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    auto nl = variant.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(variant.substr(start));
      break;
    }
    lines.push_back(variant.substr(start, nl - start));
    start = nl + 1;
  }
  std::set<int> inserted(positions.begin(), positions.end());
  std::vector<std::string> kept;
  int original_line = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    kept.push_back(lines[i]);
    ++original_line;
    if (inserted.count(original_line)) {
      if (i + 1 >= lines.size() || !lines[i + 1].empty()) {
        throw InputError("text does not contain an inserted newline after line " +
                         std::to_string(original_line));
      }
      ++i;
    }
  }
  std::string out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (i > 0) out += '\n';
    out += kept[i];
  }
  return out;
}

PerturbationResult paraphrase_variant(const PromptTemplate& t, const PerturbationHooks& hooks,
                                      std::uint64_t seed) {
  auto words = word_tokens(t.text);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (is_protected(t, words[i].text)) continue;
    const auto tag = hooks.pos_tagger(words[i].text);
    if (tag == PosTag::verb || tag == PosTag::adjective) candidates.push_back(i);
  }
  std::mt19937_64 rng(nuts::derive_seed(seed, 3));
  std::shuffle(candidates.begin(), candidates.end(), rng);

  struct Replacement {
    std::size_t word;
    std::string text;
  };
  std::vector<Replacement> chosen;
  std::set<std::string> seen;
  for (std::size_t idx : candidates) {
    if (static_cast<int>(chosen.size()) == kParaphraseTokens) break;
    const auto& w = words[idx];
    if (seen.count(lower(w.text))) continue;
    auto syn = hooks.synonyms ? hooks.synonyms(w.text) : std::nullopt;
    // Unknown words and multi-token synonyms are skipped; the next candidate is promoted.
    if (!syn || syn->empty() || count_words(*syn) != 1 ||
        !std::all_of(syn->begin(), syn->end(), is_letter) || lower(*syn) == lower(w.text)) {
      continue;
    }
    seen.insert(lower(w.text));
    chosen.push_back({idx, match_case(w.text, *syn)});
  }
  if (static_cast<int>(chosen.size()) < kParaphraseTokens) {
    throw InputError("insufficient paraphrase candidates: need " +
                     std::to_string(kParaphraseTokens) + ", found " +
                     std::to_string(chosen.size()));
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const Replacement& a, const Replacement& b) { return a.word < b.word; });

  PerturbationResult out;
  out.prompt = t;
  out.log.seed = seed;
  // Right to left so earlier offsets stay valid.
  for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) {
    const auto& w = words[it->word];
    out.prompt.text.replace(w.begin, w.end - w.begin, it->text);
  }
  for (const auto& c : chosen) {
    out.log.paraphrase_pairs.push_back({words[c.word].text, c.text, words[c.word].begin});
  }
  return out;
}

const std::string& VariantSet::text(const std::string& item) const {
  if (item == "original") return original;
  if (item == "typo") return typo;
  if (item == "newline") return newline;
  if (item == "paraphrase") return paraphrase;
  throw InputError("unknown variant '" + item + "'");
}

VariantSet generate_all(const PromptTemplate& t, const PerturbationHooks& hooks,
                        std::uint64_t seed) {
  auto typo = typo_variant(t, hooks, seed);
  auto newline = newline_variant(t, seed);
  auto paraphrase = paraphrase_variant(t, hooks, seed);
  VariantSet v;
  v.original = t.text;
  v.typo = typo.prompt.text;
  v.newline = newline.prompt.text;
  v.paraphrase = paraphrase.prompt.text;
  v.log.seed = seed;
  v.log.typo_tokens = std::move(typo.log.typo_tokens);
  v.log.newline_positions = std::move(newline.log.newline_positions);
  v.log.paraphrase_pairs = std::move(paraphrase.log.paraphrase_pairs);
  return v;
}

nlohmann::json to_json(const VariantSet& v) {
  nlohmann::json typo = nlohmann::json::array();
  for (const auto& c : v.log.typo_tokens) {
    typo.push_back({{"original", c.original}, {"perturbed", c.perturbed}, {"offset", c.offset},
                    {"salience", c.salience}});
  }
  nlohmann::json para = nlohmann::json::array();
  for (const auto& c : v.log.paraphrase_pairs) {
    para.push_back({{"original", c.original}, {"replacement", c.replacement}, {"offset", c.offset}});
  }
  nlohmann::json j;
  j["original"] = v.original;
  j["typo"] = v.typo;
  j["newline"] = v.newline;
  j["paraphrase"] = v.paraphrase;
  j["log"] = {{"seed", v.log.seed},
              {"typo_tokens", typo},
              {"newline_positions", v.log.newline_positions},
              {"paraphrase_pairs", para}};
  return j;
}

VariantSet variant_set_from_json(const nlohmann::json& j) {
  try {
    VariantSet v;
    v.original = j.at("original").get<std::string>();
    v.typo = j.at("typo").get<std::string>();
    v.newline = j.at("newline").get<std::string>();
    v.paraphrase = j.at("paraphrase").get<std::string>();
    const auto& log = j.at("log");
    v.log.seed = log.at("seed").get<std::uint64_t>();
    for (const auto& c : log.at("typo_tokens")) {
      v.log.typo_tokens.push_back({c.at("original").get<std::string>(),
                                   c.at("perturbed").get<std::string>(),
                                   c.at("offset").get<std::size_t>(),
                                   c.value("salience", 0.0)});
    }
    v.log.newline_positions = log.at("newline_positions").get<std::vector<int>>();
    for (const auto& c : log.at("paraphrase_pairs")) {
      v.log.paraphrase_pairs.push_back({c.at("original").get<std::string>(),
                                        c.at("replacement").get<std::string>(),
                                        c.at("offset").get<std::size_t>()});
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed variant set: ") + e.what());
  }
}

}  // namespace judgeirt
