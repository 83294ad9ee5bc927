#pragma once

// train / segment / eval / inspect workflows behind the `clnn` binary.

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "clnn/checkpoint.hpp"
#include "clnn/corpus.hpp"
#include "clnn/decoder.hpp"
#include "clnn/eval.hpp"
#include "clnn/train.hpp"

namespace clnn::cli {

inline constexpr std::uint64_t kDefaultSeed = 42;

struct RunConfig {
  std::string command;
  std::string train_file, input, gold, ckpt, vocab, out, json, text;
  CLNNConfig model;
  DecodeConfig decode;
  std::string engine = "gmm";
  std::uint64_t seed = kDefaultSeed;
  std::size_t min_word_freq = 1;
  bool no_oov = false;
  bool symbol_classes = false;
};

/// Exit status for an error escaping a command.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const AlignmentError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const IoError*>(&e) || dynamic_cast<const CheckpointError*>(&e))
    return 2;
  return 1;
}

/// Keys follow the long flag names ("train-file", "k-top", ...). Unknown keys
/// are rejected.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "train-file") c.train_file = v.get<std::string>();
      else if (key == "input") c.input = v.get<std::string>();
      else if (key == "gold") c.gold = v.get<std::string>();
      else if (key == "ckpt") c.ckpt = v.get<std::string>();
      else if (key == "vocab") c.vocab = v.get<std::string>();
      else if (key == "out") c.out = v.get<std::string>();
      else if (key == "json") c.json = v.get<std::string>();
      else if (key == "text") c.text = v.get<std::string>();
      else if (key == "d") c.model.d = v.get<std::size_t>();
      else if (key == "layers") c.model.layers = v.get<std::size_t>();
      else if (key == "expand") c.model.expand = v.get<std::size_t>();
      else if (key == "lstm-hidden") c.model.lstm_hidden = v.get<std::size_t>();
      else if (key == "dropout") c.model.dropout = v.get<double>();
      else if (key == "lr") c.model.lr = v.get<double>();
      else if (key == "batch") c.model.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.model.epochs = v.get<std::size_t>();
      else if (key == "max-len") c.model.max_len = v.get<std::size_t>();
      else if (key == "k-top") c.decode.k_top = v.get<std::size_t>();
      else if (key == "lambda") c.decode.lambda = v.get<double>();
      else if (key == "engine") c.engine = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "min-word-freq") c.min_word_freq = v.get<std::size_t>();
      else if (key == "no-oov") c.no_oov = v.get<bool>();
      else if (key == "symbol-classes") c.symbol_classes = v.get<bool>();
      else throw ConfigError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type");
    }
  }
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
  RunConfig c;
  try {
    apply_json(c, nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse config '" + path.string() + "': " + e.what());
  }
  return c;
}

namespace detail {

inline void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

inline void require_readable(const std::string& value, const char* flag) {
  require_path(value, flag);
  if (!std::filesystem::is_regular_file(value)) throw IoError("input path does not exist: " + value);
}

// Seeds, engine and K flow from the top-level fields into the sub-configs.
inline void finalize(RunConfig& c) {
  c.model.seed = c.seed;
  c.decode.seed = c.seed;
  c.decode.engine = parse_engine(c.engine);
  c.decode.max_len = c.model.max_len;
  if (c.decode.k_top < 1) throw ConfigError("--k-top must be at least 1");
  if (!(c.decode.lambda >= 0.0)) throw ConfigError("--lambda must be non-negative");
  if (c.min_word_freq < 1) throw ConfigError("--min-word-freq must be at least 1");
  c.model.k_top = c.decode.k_top;
  c.model.validate();
}

inline std::vector<std::string> read_lines(const std::string& path) {
  const auto text = io::read_file(path);
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    auto line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!utf8::is_valid(line))
      throw CorpusError(path + ": invalid UTF-8 byte sequence on line " + std::to_string(lines.size() + 1));
    lines.push_back(std::move(line));
    pos = eol + 1;
  }
  return lines;
}

inline std::size_t thread_cap() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CLNN_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return n;
}

struct LoadedModel {
  Vocabulary vocab;
  CLNNModel<float> model;
};

inline LoadedModel load_model(const RunConfig& c) {
  LoadedModel lm;
  lm.vocab = Vocabulary::load(c.vocab);
  if (c.symbol_classes) lm.vocab.set_symbol_classes(SymbolClasses::builtin());
  ArchitectureExpectation ex;
  ex.vocab_size = lm.vocab.size();
  ex.vocab_hash = lm.vocab.hash();
  lm.model = load_checkpoint<float>(c.ckpt, ex);
  return lm;
}

}  // namespace detail

struct TrainSummary {
  std::size_t sentences = 0;
  std::size_t vocab_size = 0;
  std::size_t parameters = 0;
  TrainingTrace trace;
};

inline TrainSummary cmd_train(RunConfig c, std::ostream& log) {
  detail::require_readable(c.train_file, "--train-file");
  detail::require_path(c.ckpt, "--ckpt");
  detail::require_path(c.vocab, "--vocab");
  detail::finalize(c);

  auto corpus = load_bakeoff_corpus(c.train_file);
  if (corpus.empty()) throw CorpusError("training file holds no sentences: " + c.train_file);
  const auto classes = c.symbol_classes ? SymbolClasses::builtin() : SymbolClasses{};
  auto vocab = build_vocabulary(corpus, c.min_word_freq, classes);
  std::vector<SentenceExample> examples;
  examples.reserve(corpus.size());
  for (const auto& s : corpus) examples.push_back(encode_sentence(vocab, s));

  auto model = init_model<float>(c.model, vocab);
  TrainSummary sum;
  sum.sentences = corpus.size();
  sum.vocab_size = vocab.size();
  sum.parameters = model.parameter_count();
  log << "sentences " << sum.sentences << ", vocabulary " << sum.vocab_size << ", parameters " << sum.parameters << "\n";
  sum.trace = train(model, examples, [&](const EpochRecord& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %zu  loss %.6f  (%.2fs)\n", e.epoch, e.mean_loss, e.seconds);
    log << buf << std::flush;
  });

  save_checkpoint(model, c.ckpt);
  io::write_file_atomic(c.vocab, vocab.serialize());
  nlohmann::json meta = {{"format", "CLNN-CKPT v1"},
                         {"config", c.model},
                         {"vocab_hash", io::hex64(vocab.hash())},
                         {"vocab_size", vocab.size()},
                         {"parameters", sum.parameters},
                         {"min_word_freq", c.min_word_freq},
                         {"symbol_classes", c.symbol_classes},
                         {"trace", sum.trace}};
  io::write_file_atomic(meta_path(c.ckpt), meta.dump(2) + "\n");
  return sum;
}

/// Decodes every input line (blank lines stay blank) and writes plain output,
/// plus JSON Lines when --json is given.
inline std::vector<DecodeResult> cmd_segment(RunConfig c, std::ostream& log) {
  detail::require_readable(c.input, "--input");
  detail::require_readable(c.ckpt, "--ckpt");
  detail::require_readable(c.vocab, "--vocab");
  detail::require_path(c.out, "--out");
  detail::finalize(c);

  const auto lm = detail::load_model(c);
  const auto lines = detail::read_lines(c.input);
  std::vector<DecodeResult> results(lines.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < lines.size();) {
      try {
        results[i] = segment_sentence(lm.model, lm.vocab, lines[i], c.decode, i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min(detail::thread_cap(), std::max<std::size_t>(lines.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::string plain, rich;
  for (const auto& r : results) {
    plain += plain_line(r) + "\n";
    rich += rich_json(r).dump() + "\n";
  }
  io::write_file_atomic(c.out, plain);
  if (!c.json.empty()) io::write_file_atomic(c.json, rich);
  log << "segmented " << lines.size() << " lines with " << engine_name(c.decode.engine) << "\n";
  return results;
}

struct EvalOutcome {
  EvalReport full;
  std::optional<EvalReport> no_oov;
};

inline EvalOutcome cmd_eval(RunConfig c, std::ostream& out) {
  detail::require_readable(c.input, "--input");
  detail::require_readable(c.gold, "--gold");
  detail::require_readable(c.vocab, "--vocab");
  detail::finalize(c);

  auto vocab = Vocabulary::load(c.vocab);
  if (c.symbol_classes) vocab.set_symbol_classes(SymbolClasses::builtin());
  const auto pred = load_bakeoff_corpus(c.input);
  const auto gold = load_bakeoff_corpus(c.gold);

  EvalOutcome res;
  res.full = score(pred, gold, vocab);
  out << render_report(res.full);
  nlohmann::json j = {{"full", report_json(res.full)}};
  if (c.no_oov) {
    std::optional<std::string> warning;
    res.no_oov = score_no_oov(pred, gold, vocab, &warning);
    if (warning) out << "warning: " << *warning << "\n";
    out << render_report(*res.no_oov);
    j["no_oov"] = report_json(*res.no_oov);
  }
  if (!c.json.empty()) io::write_file_atomic(c.json, j.dump(2) + "\n");
  return res;
}

inline void print_trace(const DecodeResult& r, const Vocabulary& vocab, std::ostream& out) {
  const auto chars = utf8::chars(r.raw);
  out << "sentence: " << r.raw << "\n";
  for (const auto& ch : r.chunks) {
    if (r.chunks.size() > 1) out << "-- window at offset " << ch.offset << "\n";
    for (std::size_t i = 0; i < ch.imagination.size(); ++i) {
      const auto pos = ch.offset + i;
      out << "[" << pos << "] " << chars[pos] << "  imagination:";
      for (const auto& cand : ch.imagination[i]) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.4f", cand.prob);
        out << " " << vocab.entry(cand.id).surface << "(" << buf << ")";
      }
      char sc[48];
      std::snprintf(sc, sizeof sc, "%.4f", ch.chosen.scores[i]);
      out << "\n      chosen: " << vocab.entry(ch.chosen.ids[i]).surface << "  score " << sc
          << "  match " << (ch.chosen.matched[i] ? "yes" : "no") << "  cluster " << ch.assignment.labels[i] << "\n";
    }
    out << "estimated k: " << ch.estimated_k << ", clusters: " << ch.assignment.k << "\n";
  }
  out << "engine: " << engine_name(r.engine) << "\n";
  for (std::size_t g = 0; g < r.segmentation.groups.size(); ++g) {
    const auto& grp = r.segmentation.groups[g];
    out << "group " << g << ":";
    std::size_t prev = SIZE_MAX;
    std::string run;
    std::vector<std::string> runs;
    for (auto p : grp) {
      if (prev != SIZE_MAX && p != prev + 1) runs.push_back(std::move(run)), run.clear();
      run += chars[p];
      prev = p;
    }
    runs.push_back(run);
    for (std::size_t i = 0; i < runs.size(); ++i) out << (i ? " ... " : " ") << runs[i];
    out << " {";
    for (std::size_t i = 0; i < grp.size(); ++i) out << (i ? "," : "") << grp[i];
    out << "}";
    if (runs.size() > 1) out << "  [jump]";
    out << "\n";
  }
  out << "words: " << plain_line(r) << "\n";
}

inline std::vector<DecodeResult> cmd_inspect(RunConfig c, std::ostream& out) {
  detail::require_readable(c.ckpt, "--ckpt");
  detail::require_readable(c.vocab, "--vocab");
  if (c.text.empty()) detail::require_readable(c.input, "--input or --text");
  detail::finalize(c);

  const auto lm = detail::load_model(c);
  std::vector<std::string> lines;
  if (!c.text.empty()) {
    if (!utf8::is_valid(c.text)) throw CorpusError("--text is not valid UTF-8");
    lines.push_back(c.text);
  } else {
    lines = detail::read_lines(c.input);
  }
  std::vector<DecodeResult> results;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (utf8::strip_spaces(lines[i]).empty()) continue;
    results.push_back(segment_sentence(lm.model, lm.vocab, lines[i], c.decode, i));
    print_trace(results.back(), lm.vocab, out);
    out << "\n";
  }
  return results;
}

}  // namespace clnn::cli
