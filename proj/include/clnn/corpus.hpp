#pragma once

// Bakeoff corpus ingestion, the joint character/word vocabulary, and the
// encoding of gold sentences into per-character word labels.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "clnn/error.hpp"
#include "clnn/io.hpp"
#include "clnn/utf8.hpp"

namespace clnn {

using TokenId = std::uint32_t;
using Sentence = std::vector<std::string>;  // gold words, in order

// ---------------------------------------------------------------------------
// Loading

/// Parses bakeoff text: one sentence per line, words separated by any run of
/// Unicode whitespace. Blank lines are skipped. Invalid UTF-8 is reported with
/// its 1-based line number.
inline std::vector<Sentence> parse_bakeoff(std::string_view text) {
  std::vector<Sentence> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    ++line_no;
    pos = eol + 1;
    if (!utf8::is_valid(line)) {
      throw CorpusError("invalid UTF-8 byte sequence on line " + std::to_string(line_no));
    }
    auto words = utf8::split_words(line);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

inline std::vector<Sentence> load_bakeoff_corpus(const std::filesystem::path& path) {
  try {
    return parse_bakeoff(io::read_file(path));
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Symbol classes: opt-in mapping of whole words to a shared symbol ("<year>").

class SymbolClasses {
 public:
  void add(std::string pattern, std::string symbol) {
    rules_.push_back({std::regex(pattern, std::regex::ECMAScript), pattern, std::move(symbol)});
  }

  bool empty() const { return rules_.empty(); }
  std::size_t size() const { return rules_.size(); }

  // First full-match rule wins; no match returns the word unchanged.
  std::string apply(const std::string& word) const {
    for (const auto& r : rules_) {
      if (std::regex_match(word, r.re)) return r.symbol;
    }
    return word;
  }

  std::vector<std::pair<std::string, std::string>> rules() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& r : rules_) out.emplace_back(r.pattern, r.symbol);
    return out;
  }

  /// A run of ASCII, fullwidth, or Chinese numeral digits followed by 年.
  static SymbolClasses builtin() {
    SymbolClasses c;
    c.add("(?:[0-9]|０|１|２|３|４|５|６|７|８|９|〇|零|一|二|三|四|五|六|七|八|九)+年", "<year>");
    return c;
  }

 private:
  struct Rule {
    std::regex re;
    std::string pattern;
    std::string symbol;
  };
  std::vector<Rule> rules_;
};

inline Sentence apply_symbol_classes(const Sentence& words, const SymbolClasses& classes) {
  if (classes.empty()) return words;
  Sentence out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(classes.apply(w));
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

struct VocabEntry {
  std::string surface;
  bool is_char = false;
  bool is_word = false;
  // Occurrences as a word token for word entries, as a character otherwise.
  std::uint64_t frequency = 0;

  bool reserved() const { return !is_char && !is_word; }
};

/// Dense id space shared by characters and words. A one-character word and the
/// character itself are the same entry with both kind flags set.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnkChar = 1;

  Vocabulary() {
    push({"<pad>", false, false, 0});
    push({"<unk>", false, false, 0});
  }

  std::size_t size() const { return entries_.size(); }
  const VocabEntry& entry(TokenId id) const { return entries_.at(id); }
  const std::vector<VocabEntry>& entries() const { return entries_; }

  std::optional<TokenId> find(std::string_view surface) const {
    auto it = index_.find(std::string(surface));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  TokenId char_id(std::string_view ch) const {
    auto id = find(ch);
    return id && entries_[*id].is_char ? *id : kUnkChar;
  }

  std::optional<TokenId> word_id(std::string_view w) const {
    auto id = find(w);
    if (id && entries_[*id].is_word) return id;
    return std::nullopt;
  }

  bool is_word(std::string_view w) const { return word_id(w).has_value(); }

  /// Word membership after symbol-class normalization (used for IV/OOV).
  bool is_known_word(const std::string& w) const {
    return is_word(w) || (!symbols_.empty() && is_word(symbols_.apply(w)));
  }

  std::vector<TokenId> word_ids() const {
    std::vector<TokenId> ids;
    for (TokenId i = 0; i < entries_.size(); ++i)
      if (entries_[i].is_word) ids.push_back(i);
    return ids;
  }

  const SymbolClasses& symbol_classes() const { return symbols_; }
  void set_symbol_classes(SymbolClasses c) { symbols_ = std::move(c); }

  // Adds or merges an entry; returns its id.
  TokenId upsert(const std::string& surface, bool as_char, bool as_word, std::uint64_t freq) {
    auto it = index_.find(surface);
    if (it == index_.end()) return push({surface, as_char, as_word, freq});
    auto& e = entries_[it->second];
    if (as_word && !e.is_word) e.frequency = freq;
    e.is_char |= as_char;
    e.is_word |= as_word;
    return it->second;
  }

  /// `id<TAB>surface<TAB>kind<TAB>frequency`, one line per entry, by id.
  std::string serialize() const {
    std::string out;
    for (TokenId i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      out += std::to_string(i);
      out += '\t';
      out += e.surface;
      out += '\t';
      out += kind_name(e);
      out += '\t';
      out += std::to_string(e.frequency);
      out += '\n';
    }
    return out;
  }

  static Vocabulary parse(std::string_view text) {
    Vocabulary v;
    v.entries_.clear();
    v.index_.clear();
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::size_t start = 0;
      for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1)
        f.push_back(line.substr(start, tab - start));
      f.push_back(line.substr(start));
      if (f.size() != 4) throw CorpusError("vocabulary line " + std::to_string(line_no) + ": expected 4 fields");
      if (std::stoul(f[0]) != v.entries_.size())
        throw CorpusError("vocabulary line " + std::to_string(line_no) + ": ids must be dense and sorted");
      VocabEntry e{f[1], false, false, std::stoull(f[3])};
      if (f[2] == "character") e.is_char = true;
      else if (f[2] == "word") e.is_word = true;
      else if (f[2] == "character+word") e.is_char = e.is_word = true;
      else if (f[2] != "reserved") throw CorpusError("vocabulary line " + std::to_string(line_no) + ": unknown kind '" + f[2] + "'");
      if (v.index_.count(e.surface)) throw CorpusError("vocabulary line " + std::to_string(line_no) + ": duplicate surface");
      v.push(std::move(e));
    }
    if (v.entries_.size() < 2 || !v.entries_[kPad].reserved() || !v.entries_[kUnkChar].reserved())
      throw CorpusError("vocabulary must start with the PAD and UNK_CHAR entries");
    return v;
  }

  std::uint64_t hash() const { return io::fnv1a(serialize()); }

  static Vocabulary load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

 private:
  static const char* kind_name(const VocabEntry& e) {
    if (e.is_char && e.is_word) return "character+word";
    if (e.is_char) return "character";
    if (e.is_word) return "word";
    return "reserved";
  }

  TokenId push(VocabEntry e) {
    auto id = static_cast<TokenId>(entries_.size());
    index_.emplace(e.surface, id);
    entries_.push_back(std::move(e));
    return id;
  }

  std::vector<VocabEntry> entries_;
  std::unordered_map<std::string, TokenId> index_;
  SymbolClasses symbols_;
};

/// Ids are assigned in first-appearance order: each word's characters, then the
/// word itself. Words under `min_word_freq` are left out as words; their
/// characters become word entries so the per-character fallback label exists.
inline Vocabulary build_vocabulary(const std::vector<Sentence>& corpus, std::uint64_t min_word_freq = 1,
                                   const SymbolClasses& classes = {}) {
  if (corpus.empty()) throw CorpusError("cannot build a vocabulary from an empty corpus");
  std::unordered_map<std::string, std::uint64_t> word_count, char_count;
  for (const auto& s : corpus) {
    for (const auto& w : s) {
      ++word_count[classes.apply(w)];
      for (auto& c : utf8::chars(w)) ++char_count[c];
    }
  }
  Vocabulary v;
  v.set_symbol_classes(classes);
  for (const auto& s : corpus) {
    for (const auto& raw : s) {
      auto chars = utf8::chars(raw);
      for (auto& c : chars) v.upsert(c, true, false, char_count[c]);
      auto w = classes.apply(raw);
      auto n = word_count[w];
      if (n >= min_word_freq) {
        v.upsert(w, false, true, n);
      } else {
        for (auto& c : chars) v.upsert(c, false, true, word_count.count(c) ? word_count[c] : char_count[c]);
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Examples and batches

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

struct SentenceExample {
  std::vector<TokenId> chars;
  std::vector<TokenId> labels;
  std::vector<Span> gold_spans;
  std::string raw;

  std::size_t size() const { return chars.size(); }
};

/// Label of every character is the id of the word containing it. Gold words
/// missing from the vocabulary fall back to one label per character.
inline SentenceExample encode_sentence(const Vocabulary& vocab, const Sentence& gold) {
  SentenceExample ex;
  for (const auto& w : gold) {
    auto chars = utf8::chars(w);
    if (chars.empty()) continue;
    const auto begin = ex.chars.size();
    auto wid = vocab.word_id(vocab.symbol_classes().apply(w));
    for (auto& c : chars) {
      auto cid = vocab.char_id(c);
      ex.chars.push_back(cid);
      ex.labels.push_back(wid ? *wid : cid);
    }
    ex.gold_spans.push_back({begin, ex.chars.size()});
    ex.raw += w;
  }
  if (ex.chars.empty()) throw CorpusError("cannot encode an empty sentence");
  return ex;
}

/// Words recovered from gold spans and the raw text.
inline Sentence reconstruct_words(const SentenceExample& ex) {
  auto chars = utf8::chars(ex.raw);
  Sentence out;
  for (const auto& s : ex.gold_spans) {
    std::string w;
    for (auto i = s.begin; i < s.end; ++i) w += chars[i];
    out.push_back(std::move(w));
  }
  return out;
}

/// Splits into consecutive pieces of at most max_len characters.
inline std::vector<SentenceExample> split_example(const SentenceExample& ex, std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  if (ex.size() <= max_len) return {ex};
  auto chars = utf8::chars(ex.raw);
  std::vector<SentenceExample> pieces;
  for (std::size_t lo = 0; lo < ex.size(); lo += max_len) {
    auto hi = std::min(ex.size(), lo + max_len);
    SentenceExample p;
    p.chars.assign(ex.chars.begin() + static_cast<std::ptrdiff_t>(lo), ex.chars.begin() + static_cast<std::ptrdiff_t>(hi));
    p.labels.assign(ex.labels.begin() + static_cast<std::ptrdiff_t>(lo), ex.labels.begin() + static_cast<std::ptrdiff_t>(hi));
    for (auto i = lo; i < hi; ++i) p.raw += chars[i];
    for (const auto& s : ex.gold_spans) {
      auto b = std::max(s.begin, lo), e = std::min(s.end, hi);
      if (b < e) p.gold_spans.push_back({b - lo, e - lo});
    }
    pieces.push_back(std::move(p));
  }
  return pieces;
}

struct Batch {
  std::size_t rows = 0;  // B
  std::size_t width = 0; // T, the longest length in the batch
  std::vector<TokenId> ids;     // B*T row-major, PAD beyond each length
  std::vector<TokenId> labels;  // B*T, PAD beyond each length
  std::vector<std::uint8_t> mask;
  std::vector<std::size_t> lengths;

  std::size_t at(std::size_t b, std::size_t t) const { return b * width + t; }
  std::size_t valid_count() const { return std::accumulate(lengths.begin(), lengths.end(), std::size_t{0}); }
};

inline Batch make_batch(const std::vector<const SentenceExample*>& members) {
  Batch b;
  b.rows = members.size();
  for (auto* m : members) b.width = std::max(b.width, m->size());
  b.ids.assign(b.rows * b.width, Vocabulary::kPad);
  b.labels.assign(b.rows * b.width, Vocabulary::kPad);
  b.mask.assign(b.rows * b.width, 0);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& m = *members[r];
    b.lengths.push_back(m.size());
    for (std::size_t t = 0; t < m.size(); ++t) {
      b.ids[b.at(r, t)] = m.chars[t];
      b.labels[b.at(r, t)] = m.labels[t];
      b.mask[b.at(r, t)] = 1;
    }
  }
  return b;
}

/// Splits long examples, shuffles deterministically under `seed`, and groups
/// into batches of `batch_size` (the last one may be short).
inline std::vector<Batch> make_batches(const std::vector<SentenceExample>& examples, std::size_t batch_size,
                                       std::size_t max_len, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<SentenceExample> pieces;
  for (const auto& ex : examples)
    for (auto& p : split_example(ex, max_len)) pieces.push_back(std::move(p));
  std::vector<std::size_t> order(pieces.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> batches;
  for (std::size_t lo = 0; lo < order.size(); lo += batch_size) {
    std::vector<const SentenceExample*> members;
    for (auto i = lo; i < std::min(order.size(), lo + batch_size); ++i) members.push_back(&pieces[order[i]]);
    batches.push_back(make_batch(members));
  }
  return batches;
}

}  // namespace clnn
