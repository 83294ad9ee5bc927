// Command-line front end: clnn {train,segment,eval,inspect} [options]

#include <cstring>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "clnn/cli.hpp"

namespace {

// --config is applied before flag parsing so explicit flags win over it.
clnn::cli::RunConfig initial_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return clnn::cli::load_config_file(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return clnn::cli::load_config_file(a.substr(std::strlen("--config=")));
  }
  return {};
}

void add_model_flags(CLI::App* app, clnn::cli::RunConfig& c) {
  app->add_option("--d", c.model.d, "embedding dimension (even)");
  app->add_option("--layers", c.model.layers, "number of LSTM-attention layers");
  app->add_option("--expand", c.model.expand, "feed-forward expand ratio");
  app->add_option("--lstm-hidden", c.model.lstm_hidden, "LSTM hidden size (0 = d)");
  app->add_option("--dropout", c.model.dropout, "dropout rate in [0,1)");
  app->add_option("--lr", c.model.lr, "Adam learning rate");
  app->add_option("--batch", c.model.batch_size, "sentences per batch");
  app->add_option("--epochs", c.model.epochs, "training epochs");
  app->add_option("--max-len", c.model.max_len, "longest encoder window in characters");
  app->add_option("--min-word-freq", c.min_word_freq, "minimum count for a word to enter the vocabulary");
}

void add_decode_flags(CLI::App* app, clnn::cli::RunConfig& c) {
  app->add_option("--k-top", c.decode.k_top, "candidate labels per position (K)");
  app->add_option("--lambda", c.decode.lambda, "word-match bonus in rectification");
  app->add_option("--engine", c.engine, "clustering engine")->check(CLI::IsMember({"gmm", "kmeans"}));
  app->add_option("--max-len", c.model.max_len, "longest encoder window in characters");
}

}  // namespace

int main(int argc, char** argv) {
  clnn::cli::RunConfig cfg;
  try {
    cfg = initial_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "clnn: " << e.what() << "\n";
    return clnn::cli::exit_code_for(e);
  }

  CLI::App app{"CLNN: Chinese word segmentation by clustering"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file (flags override it)");
  app.add_option("--seed", cfg.seed, "random seed (default 42)");
  app.add_flag("--symbol-classes", cfg.symbol_classes, "map year expressions to the <year> symbol");

  auto* train = app.add_subcommand("train", "train a model on a bakeoff-format file");
  train->add_option("--train-file", cfg.train_file, "segmented training text");
  train->add_option("--ckpt", cfg.ckpt, "checkpoint to write");
  train->add_option("--vocab", cfg.vocab, "vocabulary file to write");
  add_model_flags(train, cfg);

  auto* segment = app.add_subcommand("segment", "segment raw text");
  segment->add_option("--input", cfg.input, "raw text, one sentence per line");
  segment->add_option("--ckpt", cfg.ckpt, "checkpoint");
  segment->add_option("--vocab", cfg.vocab, "vocabulary file");
  segment->add_option("--out", cfg.out, "segmented output (bakeoff format)");
  segment->add_option("--json", cfg.json, "also write one JSON object per line here");
  add_decode_flags(segment, cfg);

  auto* eval = app.add_subcommand("eval", "score a segmentation against gold");
  eval->add_option("--input", cfg.input, "predicted segmentation");
  eval->add_option("--gold", cfg.gold, "gold segmentation");
  eval->add_option("--vocab", cfg.vocab, "training vocabulary (decides IV/OOV)");
  eval->add_flag("--no-oov", cfg.no_oov, "also score sentences free of OOV words");
  eval->add_option("--json", cfg.json, "write the JSON report here");

  auto* inspect = app.add_subcommand("inspect", "print the decode trace of sentences");
  inspect->add_option("--ckpt", cfg.ckpt, "checkpoint");
  inspect->add_option("--vocab", cfg.vocab, "vocabulary file");
  inspect->add_option("--input", cfg.input, "raw text file");
  inspect->add_option("--text", cfg.text, "a single raw sentence");
  add_decode_flags(inspect, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      clnn::cli::cmd_train(cfg, std::cout);
    } else if (*segment) {
      clnn::cli::cmd_segment(cfg, std::cerr);
    } else if (*eval) {
      clnn::cli::cmd_eval(cfg, std::cout);
    } else if (*inspect) {
      clnn::cli::cmd_inspect(cfg, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "clnn: " << e.what() << "\n";
    return clnn::cli::exit_code_for(e);
  }
  return 0;
}
