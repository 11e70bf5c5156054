#pragma once

// Bug-report ingestion, vocabulary, labeled pair generation, splits, class
// weights, and the synthetic topic corpus used by the acceptance suite.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "log.hpp"
#include "numeric_core.hpp"
#include "random.hpp"
#include "stopwords.hpp"

namespace dupdist {

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

struct Report {
  std::string id;
  std::string title_text;
  std::vector<std::string> words;
  std::vector<TokenId> tokens;
  std::optional<std::string> feature_label;
};

struct PairExample {
  std::string p_id;
  std::string q_id;
  int label = 0;
  bool no_content_overlap = false;

  friend bool operator==(const PairExample&, const PairExample&) = default;
};

struct DuplicateGroups {
  std::vector<std::size_t> group_of;               // report index -> group index
  std::vector<std::vector<std::size_t>> members;   // group index -> report indices (ascending)
};

struct LoadStats {
  std::size_t rows_read = 0;
  std::size_t malformed_rows = 0;
  std::size_t empty_reports_dropped = 0;
  std::size_t dangling_links = 0;
};

struct Corpus {
  std::vector<Report> reports;
  DuplicateGroups groups;
  LoadStats stats;

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t require(std::string_view id) const {
    auto idx = find(id);
    if (!idx) throw Error("unknown report id '" + std::string(id) + "'");
    return *idx;
  }
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < reports.size(); ++i) index_.emplace(reports[i].id, i);
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Tokenizer: lowercase, split on whitespace and ASCII punctuation, keep digits.
// Bytes >= 0x80 are treated as word characters so UTF-8 words survive intact.

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word_char = (c >= 0x80) || std::isalnum(c);
    if (word_char) {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  Vocabulary() : words_{"<pad>", "<unk>"} {}

  explicit Vocabulary(std::vector<std::string> retained) : Vocabulary() {
    for (auto& w : retained) add(std::move(w));
  }

  std::size_t size() const noexcept { return words_.size(); }
  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const noexcept { return words_; }

  TokenId id(std::string_view word) const {
    auto it = ids_.find(std::string(word));
    return it == ids_.end() ? kUnkId : it->second;
  }
  bool contains(std::string_view word) const { return ids_.count(std::string(word)) > 0; }

  std::vector<TokenId> encode(std::span<const std::string> words) const {
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
  }

 private:
  void add(std::string w) {
    if (ids_.count(w)) throw Error("duplicate vocabulary word '" + w + "'");
    ids_.emplace(w, static_cast<TokenId>(words_.size()));
    words_.push_back(std::move(w));
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

inline Vocabulary build_vocab(std::span<const Report> reports, std::size_t min_freq = 1) {
  if (min_freq < 1) throw Error("build_vocab: min_freq must be >= 1");
  std::unordered_map<std::string, std::size_t> freq;
  std::size_t total = 0;
  for (const auto& r : reports) {
    for (const auto& w : r.words) {
      ++freq[w];
      ++total;
    }
  }
  if (total == 0) throw Error("build_vocab: empty corpus");
  std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> kept;
  for (auto& [w, n] : entries) {
    if (n >= min_freq) kept.push_back(w);
  }
  return Vocabulary(std::move(kept));
}

inline void assign_token_ids(Corpus& corpus, const Vocabulary& vocab) {
  for (auto& r : corpus.reports) r.tokens = vocab.encode(r.words);
}

// ---------------------------------------------------------------------------
// Loading

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_ids(std::string_view list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(';', start);
    if (end == std::string_view::npos) end = list.size();
    auto id = trim(list.substr(start, end - start));
    if (!id.empty()) out.push_back(std::move(id));
    start = end + 1;
  }
  return out;
}

// RFC 4180 reader: quoted fields may contain commas, doubled quotes and newlines.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  bool next(std::vector<std::string>& fields) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in_.get(c)) {
      any = true;
      if (in_quotes) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get(c);
            field.push_back('"');
          } else {
            in_quotes = false;
          }
        } else {
          field.push_back(c);
        }
        continue;
      }
      if (c == '"') {
        in_quotes = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
      } else if (c == '\n') {
        fields.push_back(std::move(field));
        return true;
      } else if (c != '\r') {
        field.push_back(c);
      }
    }
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
  }

 private:
  std::istream& in_;
};

struct RawReport {
  std::string id;
  std::string title;
  std::vector<std::string> duplicate_of;
  std::optional<std::string> feature_label;
};

inline std::vector<RawReport> read_bugrepo_csv(std::istream& in, LoadStats& stats) {
  CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header)) throw Error("bugrepo-csv: missing header row");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  auto column = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw Error("bugrepo-csv: missing required column '" + std::string(name) + "'");
  };
  const std::size_t id_col = column("Issue_id");
  const std::size_t title_col = column("Title");
  const std::size_t dup_col = column("Duplicated_issue");
  const std::size_t need = std::max({id_col, title_col, dup_col}) + 1;

  std::vector<RawReport> out;
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    ++stats.rows_read;
    if (row.size() < need || trim(row[id_col]).empty()) {
      ++stats.malformed_rows;
      continue;
    }
    RawReport r;
    r.id = trim(row[id_col]);
    r.title = row[title_col];
    r.duplicate_of = split_ids(row[dup_col]);
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<RawReport> read_jsonl(std::istream& in, LoadStats& stats) {
  std::vector<RawReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++stats.rows_read;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("id") || !j.contains("title")) {
        ++stats.malformed_rows;
        continue;
      }
      RawReport r;
      r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
      r.title = j["title"].get<std::string>();
      if (j.contains("duplicate_of") && !j["duplicate_of"].is_null()) {
        for (const auto& d : j["duplicate_of"]) {
          r.duplicate_of.push_back(d.is_string() ? d.get<std::string>() : d.dump());
        }
      }
      if (j.contains("feature_label") && j["feature_label"].is_string()) {
        r.feature_label = j["feature_label"].get<std::string>();
      }
      if (r.id.empty()) {
        ++stats.malformed_rows;
        continue;
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception&) {
      ++stats.malformed_rows;
    }
  }
  return out;
}

}  // namespace detail

enum class ReportFormat { bugrepo_csv, jsonl };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "bugrepo-csv") return ReportFormat::bugrepo_csv;
  if (s == "jsonl") return ReportFormat::jsonl;
  throw Error("unknown dataset format '" + std::string(s) + "' (expected bugrepo-csv|jsonl)");
}

// Tokenizes, drops empty reports, and closes duplicate_of links transitively.
inline Corpus build_corpus(std::vector<detail::RawReport> raw, LoadStats stats = {}) {
  Corpus corpus;
  std::vector<std::vector<std::string>> links;
  std::unordered_set<std::string> seen;
  for (auto& r : raw) {
    auto words = tokenize(r.title);
    if (words.empty()) {
      ++stats.empty_reports_dropped;
      continue;
    }
    if (!seen.insert(r.id).second) {
      ++stats.malformed_rows;
      continue;
    }
    Report rep;
    rep.id = std::move(r.id);
    rep.title_text = std::move(r.title);
    rep.words = std::move(words);
    rep.feature_label = std::move(r.feature_label);
    corpus.reports.push_back(std::move(rep));
    links.push_back(std::move(r.duplicate_of));
  }
  corpus.reindex();

  detail::UnionFind uf(corpus.reports.size());
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    for (const auto& target : links[i]) {
      auto j = corpus.find(target);
      if (!j) {
        ++stats.dangling_links;
        continue;
      }
      uf.unite(i, *j);
    }
  }
  std::unordered_map<std::size_t, std::size_t> root_to_group;
  corpus.groups.group_of.resize(corpus.reports.size());
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    const std::size_t root = uf.find(i);
    auto [it, inserted] = root_to_group.emplace(root, corpus.groups.members.size());
    if (inserted) corpus.groups.members.emplace_back();
    corpus.groups.group_of[i] = it->second;
    corpus.groups.members[it->second].push_back(i);
  }
  corpus.stats = stats;
  if (stats.empty_reports_dropped > 0) {
    log::info("dropped " + std::to_string(stats.empty_reports_dropped) + " reports with empty titles");
  }
  if (stats.malformed_rows > 0) {
    log::info("skipped " + std::to_string(stats.malformed_rows) + " malformed rows");
  }
  return corpus;
}

inline Corpus load_reports(std::istream& in, ReportFormat format) {
  LoadStats stats;
  auto raw = format == ReportFormat::bugrepo_csv ? detail::read_bugrepo_csv(in, stats)
                                                 : detail::read_jsonl(in, stats);
  return build_corpus(std::move(raw), stats);
}

inline Corpus load_reports(const std::string& path, ReportFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return load_reports(in, format);
}

// Normalized jsonl: every non-root group member lists its group's first report.
inline void write_reports_jsonl(std::ostream& out, const Corpus& corpus, std::string_view manifest_hash = {}) {
  for (std::size_t i = 0; i < corpus.reports.size(); ++i) {
    const auto& r = corpus.reports[i];
    nlohmann::json j;
    j["id"] = r.id;
    j["title"] = r.title_text;
    const auto& members = corpus.groups.members[corpus.groups.group_of[i]];
    if (members.front() != i) j["duplicate_of"] = {corpus.reports[members.front()].id};
    if (r.feature_label) j["feature_label"] = *r.feature_label;
    if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Pairs

inline bool no_content_overlap(const Report& p, const Report& q) {
  std::unordered_set<std::string_view> content;
  for (const auto& w : p.words) {
    if (!is_stopword(w)) content.insert(w);
  }
  for (const auto& w : q.words) {
    if (!is_stopword(w) && content.count(w)) return false;
  }
  return true;
}

inline PairExample make_pair_example(const Corpus& corpus, std::size_t p, std::size_t q, int label) {
  return PairExample{corpus.reports[p].id, corpus.reports[q].id, label,
                     no_content_overlap(corpus.reports[p], corpus.reports[q])};
}

inline std::vector<PairExample> generate_pairs(const Corpus& corpus, double target_dup_fraction,
                                               std::uint64_t seed) {
  if (!(target_dup_fraction > 0.0 && target_dup_fraction < 1.0)) {
    throw Error("generate_pairs: target_dup_fraction must lie in (0, 1)");
  }
  std::vector<std::pair<std::size_t, std::size_t>> positives;
  for (const auto& members : corpus.groups.members) {
    for (std::size_t a = 0; a < members.size(); ++a) {
      for (std::size_t b = a + 1; b < members.size(); ++b) positives.emplace_back(members[a], members[b]);
    }
  }
  if (positives.empty()) throw Error("generate_pairs: no duplicate group of size >= 2");

  const std::size_t n = corpus.reports.size();
  std::uint64_t all_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t cross_pairs = all_pairs - positives.size();
  const auto needed = static_cast<std::uint64_t>(
      std::llround(static_cast<double>(positives.size()) * (1.0 - target_dup_fraction) / target_dup_fraction));
  if (needed > cross_pairs) {
    const double achievable =
        static_cast<double>(positives.size()) / static_cast<double>(positives.size() + cross_pairs);
    throw Error("generate_pairs: unreachable duplicate fraction " + std::to_string(target_dup_fraction) +
                "; smallest achievable is " + std::to_string(achievable));
  }

  Rng rng(derive_seed(seed, {0x7061697273ULL}));
  std::vector<std::pair<std::size_t, std::size_t>> negatives;
  negatives.reserve(needed);
  if (needed * 2 > cross_pairs) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (corpus.groups.group_of[a] != corpus.groups.group_of[b]) all.emplace_back(a, b);
      }
    }
    shuffle(all, rng);
    all.resize(needed);
    negatives = std::move(all);
  } else {
    std::unordered_set<std::uint64_t> chosen;
    while (negatives.size() < needed) {
      std::size_t a = uniform_index(rng, n);
      std::size_t b = uniform_index(rng, n);
      if (a == b || corpus.groups.group_of[a] == corpus.groups.group_of[b]) continue;
      if (b < a) std::swap(a, b);
      if (!chosen.insert(static_cast<std::uint64_t>(a) * n + b).second) continue;
      negatives.emplace_back(a, b);
    }
  }

  std::vector<PairExample> pairs;
  pairs.reserve(positives.size() + negatives.size());
  for (auto [a, b] : positives) pairs.push_back(make_pair_example(corpus, a, b, 1));
  for (auto [a, b] : negatives) pairs.push_back(make_pair_example(corpus, a, b, 0));
  shuffle(pairs, rng);
  return pairs;
}

struct Splits {
  std::vector<PairExample> train;
  std::vector<PairExample> val;
  std::vector<PairExample> test;
};

// Stratified: split sizes follow the ratios over the whole set, positives are
// apportioned with the same ratios and negatives fill the remainder.
inline Splits split(std::span<const PairExample> pairs, std::uint64_t seed,
                    std::array<double, 3> ratios = {0.8, 0.1, 0.1}) {
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw Error("split: ratios must sum to 1");
  if (pairs.size() < 10) throw Error("split: fewer than 10 pairs");
  std::vector<PairExample> pos;
  std::vector<PairExample> neg;
  for (const auto& p : pairs) (p.label == 1 ? pos : neg).push_back(p);
  Rng rng(derive_seed(seed, {0x73706c6974ULL}));
  shuffle(pos, rng);
  shuffle(neg, rng);

  const std::size_t n = pairs.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  const std::size_t n_test = n - n_train - n_val;
  const std::size_t sizes[3] = {n_train, n_val, n_test};
  std::size_t pos_share[3];
  pos_share[0] = std::min(n_train, static_cast<std::size_t>(std::llround(ratios[0] * pos.size())));
  pos_share[1] = std::min(n_val, static_cast<std::size_t>(std::llround(ratios[1] * pos.size())));
  pos_share[1] = std::min(pos_share[1], pos.size() - pos_share[0]);
  pos_share[2] = pos.size() - pos_share[0] - pos_share[1];
  if (pos_share[2] > n_test) {
    // Degenerate tiny inputs: push the surplus back into train.
    const std::size_t surplus = pos_share[2] - n_test;
    pos_share[2] = n_test;
    pos_share[0] += surplus;
  }

  Splits out;
  std::vector<PairExample>* targets[3] = {&out.train, &out.val, &out.test};
  std::size_t pi = 0;
  std::size_t ni = 0;
  for (int s = 0; s < 3; ++s) {
    auto& t = *targets[s];
    for (std::size_t i = 0; i < pos_share[s]; ++i) t.push_back(pos[pi++]);
    while (t.size() < sizes[s] && ni < neg.size()) t.push_back(neg[ni++]);
    while (t.size() < sizes[s] && pi < pos.size()) t.push_back(pos[pi++]);
    shuffle(t, rng);
  }
  return out;
}

struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
};

inline ClassWeights class_weights(std::span<const PairExample> train_pairs) {
  std::size_t n_pos = 0;
  for (const auto& p : train_pairs) n_pos += p.label == 1 ? 1 : 0;
  const std::size_t n = train_pairs.size();
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("class_weights: both classes must be present");
  return {static_cast<double>(n) / (2.0 * static_cast<double>(n_pos)),
          static_cast<double>(n) / (2.0 * static_cast<double>(n_neg))};
}

// Pairs file: tab-separated p_id, q_id, label, no_content_overlap(0/1).
// Lines starting with '#' are comments (used for the manifest hash).
inline void write_pairs(std::ostream& out, std::span<const PairExample> pairs,
                        std::string_view manifest_hash = {}) {
  if (!manifest_hash.empty()) out << "# manifest " << manifest_hash << '\n';
  for (const auto& p : pairs) {
    out << p.p_id << '\t' << p.q_id << '\t' << p.label << '\t' << (p.no_content_overlap ? 1 : 0) << '\n';
  }
}

inline std::vector<PairExample> read_pairs(std::istream& in) {
  std::vector<PairExample> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 4 || (cols[2] != "0" && cols[2] != "1") || (cols[3] != "0" && cols[3] != "1")) {
      throw Error("pairs file: malformed line " + std::to_string(line_no));
    }
    pairs.push_back({cols[0], cols[1], cols[2] == "1" ? 1 : 0, cols[3] == "1"});
  }
  return pairs;
}

inline std::vector<PairExample> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pairs file '" + path + "'");
  return read_pairs(in);
}

// ---------------------------------------------------------------------------
// Synthetic corpus with known topics.
//
// Every topic owns a keyword set and a pool of issue words; pools are disjoint
// while there are enough issue words to go around. A report is two distinct
// keywords of its topic around a three-word issue template from the same topic.
// Members of a duplicate group share topic, keyword pair and template, but each
// non-root member swaps one issue word for another from the topic pool, so the
// keyword pair is the part a group always has in common. Groups of one topic
// never share a template and singletons never use a group's template.

struct SyntheticSpec {
  std::size_t num_topics = 5;
  std::size_t reports_per_topic = 200;
  double dup_rate = 0.1;  // fraction of reports that belong to a duplicate group
  std::size_t vocab_per_topic = 8;
  std::uint64_t seed = 1;
  std::size_t templates_per_topic = 16;
  std::size_t min_group = 3;
  std::size_t max_group = 6;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::vector<std::string>> topic_keywords;  // topic -> keyword set
  std::vector<std::vector<std::string>> issue_pools;     // topic -> issue words
  std::vector<std::vector<std::vector<std::string>>> templates;  // topic -> template -> issue words
};

inline const std::vector<std::string>& synthetic_issue_words() {
  static const std::vector<std::string> words = {
      "crash",   "freeze",   "blank",    "slow",     "missing",  "error",   "fails",     "broken",
      "stuck",   "flicker",  "lag",      "wrong",    "duplicated", "hang",  "timeout",   "corrupt",
      "black",   "blurry",   "vanish",   "reset",    "delay",    "glitch",  "overlap",   "cut",
      "mute",    "loop",     "spinner",  "offline",  "invalid",  "empty",   "unresponsive", "garbled",
      "truncated", "misaligned", "stale", "drops",   "leaks",    "rejected", "jumps",    "closes"};
  return words;
}

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_topics < 2) throw Error("generate_synthetic: need at least 2 topics");
  if (!(spec.dup_rate > 0.0 && spec.dup_rate < 1.0)) throw Error("generate_synthetic: dup_rate must lie in (0, 1)");
  if (spec.vocab_per_topic < 2) throw Error("generate_synthetic: vocab_per_topic must be >= 2");
  if (spec.min_group < 2 || spec.max_group < spec.min_group) throw Error("generate_synthetic: bad group sizes");
  if (spec.templates_per_topic < 2) throw Error("generate_synthetic: templates_per_topic must be >= 2");

  Rng rng(derive_seed(spec.seed, {0x73796e7468ULL}));
  const auto& issue = synthetic_issue_words();

  // Pronounceable pseudo-words for topic keywords, unique across topics.
  static const char* const onsets[] = {"b", "c", "d", "f", "g", "k", "l", "m", "n", "p",
                                       "r", "s", "t", "v", "z", "br", "cl", "dr", "gr", "pl", "st", "tr"};
  static const char* const vowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  static const char* const codas[] = {"", "n", "r", "s", "x", "l", "m"};
  std::unordered_set<std::string> used(issue.begin(), issue.end());
  SyntheticCorpus out;
  out.topic_keywords.resize(spec.num_topics);
  for (auto& kw : out.topic_keywords) {
    while (kw.size() < spec.vocab_per_topic) {
      std::string w;
      const std::size_t syllables = 2 + uniform_index(rng, 2);
      for (std::size_t s = 0; s < syllables; ++s) {
        w += onsets[uniform_index(rng, std::size(onsets))];
        w += vowels[uniform_index(rng, std::size(vowels))];
      }
      w += codas[uniform_index(rng, std::size(codas))];
      if (is_stopword(w) || !used.insert(w).second) continue;
      kw.push_back(std::move(w));
    }
  }

  // Issue pools: consecutive slices of a shuffled word list, at least 6 words,
  // wrapping around (and so overlapping) once topics outnumber the slices.
  std::vector<std::string> shuffled = issue;
  shuffle(shuffled, rng);
  const std::size_t pool_size = std::max<std::size_t>(6, issue.size() / spec.num_topics);
  out.issue_pools.resize(spec.num_topics);
  for (std::size_t t = 0; t < spec.num_topics; ++t) {
    for (std::size_t i = 0; i < pool_size; ++i) {
      out.issue_pools[t].push_back(shuffled[(t * pool_size + i) % shuffled.size()]);
    }
  }

  static const char* const connectors[] = {"when", "after", "while", "during", "on", "in"};
  std::vector<std::vector<std::string>> connector_of(spec.num_topics);
  out.templates.resize(spec.num_topics);
  for (std::size_t t = 0; t < spec.num_topics; ++t) {
    const auto& pool = out.issue_pools[t];
    std::set<std::vector<std::size_t>> seen;
    std::size_t attempts = 0;
    while (out.templates[t].size() < spec.templates_per_topic) {
      if (++attempts > 100000) throw Error("generate_synthetic: cannot draw enough distinct templates");
      std::vector<std::size_t> idx;
      while (idx.size() < 3) {
        const std::size_t w = uniform_index(rng, pool.size());
        if (std::find(idx.begin(), idx.end(), w) == idx.end()) idx.push_back(w);
      }
      if (!seen.insert(idx).second) continue;
      std::vector<std::string> words;
      for (std::size_t w : idx) words.push_back(pool[w]);
      out.templates[t].push_back(std::move(words));
      connector_of[t].emplace_back(connectors[uniform_index(rng, std::size(connectors))]);
    }
  }

  std::vector<detail::RawReport> raw;
  std::size_t next_id = 0;
  auto emit = [&](std::size_t topic, std::size_t a, std::size_t b, std::vector<std::string> t,
                  const std::string& connector, const std::string& dup_of) {
    const auto& kw = out.topic_keywords[topic];
    detail::RawReport r;
    char buf[32];
    std::snprintf(buf, sizeof buf, "syn-%05zu", next_id++);
    r.id = buf;
    r.title = kw[a] + " " + t[0] + " " + t[1] + " " + connector + " " + kw[b] + " " + t[2];
    if (!dup_of.empty()) r.duplicate_of.push_back(dup_of);
    r.feature_label = "topic_" + std::to_string(topic);
    raw.push_back(std::move(r));
    return raw.back().id;
  };
  auto keyword_pair = [&](std::size_t topic) {
    const std::size_t n = out.topic_keywords[topic].size();
    const std::size_t a = uniform_index(rng, n);
    std::size_t b = uniform_index(rng, n - 1);
    if (b >= a) ++b;
    return std::pair{a, b};
  };

  for (std::size_t topic = 0; topic < spec.num_topics; ++topic) {
    const auto grouped_target =
        static_cast<std::size_t>(std::llround(spec.dup_rate * static_cast<double>(spec.reports_per_topic)));
    std::vector<std::size_t> group_sizes;
    std::size_t grouped = 0;
    while (grouped_target >= spec.min_group && grouped + spec.min_group <= grouped_target) {
      std::size_t size = spec.min_group + uniform_index(rng, spec.max_group - spec.min_group + 1);
      size = std::min(size, grouped_target - grouped);
      if (grouped_target - grouped - size < spec.min_group) size = grouped_target - grouped;
      group_sizes.push_back(size);
      grouped += size;
    }
    const auto& templates = out.templates[topic];
    const auto& pool = out.issue_pools[topic];
    std::vector<std::size_t> order(templates.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    if (group_sizes.size() >= order.size()) throw Error("generate_synthetic: not enough templates for groups");
    for (std::size_t g = 0; g < group_sizes.size(); ++g) {
      const std::size_t tmpl = order[g];
      const auto [a, b] = keyword_pair(topic);
      const std::string root = emit(topic, a, b, templates[tmpl], connector_of[topic][tmpl], {});
      for (std::size_t m = 1; m < group_sizes[g]; ++m) {
        auto words = templates[tmpl];
        std::string repl;
        do {
          repl = pool[uniform_index(rng, pool.size())];
        } while (std::find(words.begin(), words.end(), repl) != words.end());
        words[uniform_index(rng, 3)] = repl;
        emit(topic, a, b, std::move(words), connector_of[topic][tmpl], root);
      }
    }
    const std::size_t free_templates = order.size() - group_sizes.size();
    for (std::size_t s = grouped; s < spec.reports_per_topic; ++s) {
      const std::size_t tmpl = order[group_sizes.size() + uniform_index(rng, free_templates)];
      const auto [a, b] = keyword_pair(topic);
      emit(topic, a, b, templates[tmpl], connector_of[topic][tmpl], {});
    }
  }
  out.corpus = build_corpus(std::move(raw));
  return out;
}

}  // namespace dupdist
