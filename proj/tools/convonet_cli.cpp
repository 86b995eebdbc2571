// Command-line front end: train / evaluate / gridsearch / fewshot / mstudy /
// stats / compare / gradcheck. Exit codes: 0 ok, 1 internal error, 2 bad
// user input.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "convonet/convonet.hpp"

namespace {

using convonet::Averaging;
using convonet::InputError;
using convonet::RunConfig;

struct CliOptions {
  RunConfig run;
  std::string config_path;
  std::string checkpoint;
  std::string dataset_csv;
  std::string results_a, results_b;
  std::string version_filter;
  std::string averaging = "macro";
  std::optional<std::uint64_t> seed_flag;
  // gradcheck knobs
  std::size_t gc_m = 2, gc_n = 4, gc_z = 3, gc_filters = 2, gc_dense = 8;
  double gc_tolerance = 1e-6;
};

// Precedence: flag > config file > CONVONET_SEED (seed only) > default.
void apply_config_file(CliOptions& opt, const CLI::App& cmd) {
  if (opt.config_path.empty()) return;
  std::ifstream in(opt.config_path);
  if (!in) throw InputError("cannot open config file: " + opt.config_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(opt.config_path + ": " + e.what());
  }
  auto given = [&](const std::string& flag) {
    auto* o = cmd.get_option_no_throw("--" + flag);
    return o != nullptr && o->count() > 0;
  };
  auto str = [&](const char* key, std::string& into) {
    if (j.contains(key) && !given(key)) into = j.at(key).get<std::string>();
  };
  str("train-csv", opt.run.train_csv);
  str("test-csv", opt.run.test_csv);
  str("embeddings", opt.run.embeddings);
  str("model", opt.run.model);
  str("out-dir", opt.run.out_dir);
  str("averaging", opt.averaging);
  if (j.contains("seed") && !given("seed") && !opt.seed_flag)
    opt.seed_flag = j.at("seed").get<std::uint64_t>();
  if (j.contains("lr") && !given("lr")) opt.run.lr = j.at("lr").get<double>();
  if (j.contains("batch-size") && !given("batch-size"))
    opt.run.batch_size = j.at("batch-size").get<std::size_t>();
  if (j.contains("epochs") && !given("epochs"))
    opt.run.epochs = j.at("epochs").get<std::size_t>();
  if (j.contains("patience") && !given("patience"))
    opt.run.patience = j.at("patience").get<std::size_t>();
  if (j.contains("m") && !given("m")) opt.run.m = j.at("m").get<std::size_t>();
  if (j.contains("n") && !given("n")) opt.run.n = j.at("n").get<std::size_t>();
  if (j.contains("alpha") && !given("alpha"))
    opt.run.alpha = j.at("alpha").get<double>();
  if (j.contains("fractions") && !given("fractions"))
    opt.run.fractions = j.at("fractions").get<std::vector<double>>();
}

void finish_options(CliOptions& opt, const CLI::App& cmd) {
  apply_config_file(opt, cmd);
  if (opt.seed_flag) {
    opt.run.seed = *opt.seed_flag;
  } else if (const char* env = std::getenv("CONVONET_SEED")) {
    opt.run.seed = std::strtoull(env, nullptr, 10);
  }
  if (opt.averaging == "macro") opt.run.averaging = Averaging::macro;
  else if (opt.averaging == "micro") opt.run.averaging = Averaging::micro;
  else throw InputError("averaging must be 'macro' or 'micro'");
}

void add_common(CLI::App* cmd, CliOptions& opt, bool data_flags = true) {
  if (data_flags) {
    cmd->add_option("--train-csv", opt.run.train_csv, "training data CSV");
    cmd->add_option("--test-csv", opt.run.test_csv, "test data CSV");
    cmd->add_option("--embeddings", opt.run.embeddings,
                    "GloVe-format embeddings file");
    cmd->add_option("--model", opt.run.model, "catalog model name");
    cmd->add_option("--lr", opt.run.lr, "learning rate");
    cmd->add_option("--batch-size", opt.run.batch_size, "mini-batch size");
    cmd->add_option("--epochs", opt.run.epochs, "max training epochs");
    cmd->add_option("--patience", opt.run.patience,
                    "early-stop patience (>= epochs disables)");
    cmd->add_option("--m", opt.run.m, "sentences per paragraph (0 = infer)");
    cmd->add_option("--n", opt.run.n, "tokens per sentence (0 = infer)");
  }
  cmd->add_option("--seed", opt.seed_flag, "RNG seed");
  cmd->add_option("--out-dir", opt.run.out_dir, "output directory");
  cmd->add_option("--config", opt.config_path, "JSON config file");
  cmd->add_option("--averaging", opt.averaging,
                  "multiclass averaging: macro|micro");
  cmd->add_option("--alpha", opt.run.alpha, "significance level");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TextConvoNet text-classification toolkit"};
  app.require_subcommand(1);
  CliOptions opt;

  auto* train = app.add_subcommand("train", "train a model, write checkpoint");
  add_common(train, opt);

  auto* evaluate =
      app.add_subcommand("evaluate", "evaluate a checkpoint on a test CSV");
  evaluate->add_option("--checkpoint", opt.checkpoint, "checkpoint file")
      ->required();
  add_common(evaluate, opt);

  auto* grid = app.add_subcommand("gridsearch",
                                  "train/evaluate catalog versions");
  grid->add_option("--versions", opt.version_filter,
                   "version filter, e.g. V1.* (default: all 24)");
  add_common(grid, opt);

  auto* fewshot =
      app.add_subcommand("fewshot", "training-fraction sweep, fixed test set");
  fewshot->add_option("--fractions", opt.run.fractions,
                      "training fractions in (0,1]")
      ->delimiter(',');
  add_common(fewshot, opt);

  auto* mstudy = app.add_subcommand("mstudy", "sentence-count (m) study");
  mstudy->add_option("--fractions", opt.run.fractions,
                     "fractions of the full m in (0,1]")
      ->delimiter(',');
  add_common(mstudy, opt);

  auto* stats = app.add_subcommand("stats", "dataset statistics");
  stats->add_option("--dataset", opt.dataset_csv, "dataset CSV")->required();

  auto* compare =
      app.add_subcommand("compare", "Wilcoxon test over two results tables");
  compare->add_option("--results-a", opt.results_a, "results CSV A")
      ->required();
  compare->add_option("--results-b", opt.results_b, "results CSV B")
      ->required();
  add_common(compare, opt, /*data_flags=*/false);

  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--model", opt.run.model, "catalog model name");
  gradcheck->add_option("--m", opt.gc_m, "sentences");
  gradcheck->add_option("--n", opt.gc_n, "tokens per sentence");
  gradcheck->add_option("--emb-dim", opt.gc_z, "embedding dimension");
  gradcheck->add_option("--filters", opt.gc_filters, "filters per pathway");
  gradcheck->add_option("--dense-units", opt.gc_dense, "dense layer units");
  gradcheck->add_option("--tolerance", opt.gc_tolerance,
                        "max relative error allowed");
  gradcheck->add_option("--seed", opt.seed_flag, "RNG seed");
  gradcheck->add_option("--config", opt.config_path, "JSON config file");

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* cmd = app.get_subcommands().front();
    finish_options(opt, *cmd);

    if (cmd == train) {
      auto out = convonet::cmd_train(opt.run);
      std::cout << "trained " << opt.run.model << " (" << out.params
                << " parameters), stopped at epoch "
                << out.report.stopped_epoch << ", best epoch "
                << out.report.best_epoch << "\n";
      std::cout << "checkpoint: " << out.checkpoint.string() << "\n";
      std::cout << "report:     " << out.report_csv.string() << "\n";
      std::cout << "manifest:   " << out.manifest.string() << "\n";
    } else if (cmd == evaluate) {
      auto out = convonet::cmd_evaluate(opt.checkpoint, opt.run);
      const auto values = out.result.report.values();
      for (std::size_t i = 0; i < convonet::kMetricOrder.size(); ++i)
        std::cout << convonet::kMetricOrder[i] << ": "
                  << convonet::format_real(values[i]) << "\n";
      std::cout << "metrics:     " << out.metrics_csv.string() << "\n";
      std::cout << "predictions: " << out.predictions_csv.string() << "\n";
    } else if (cmd == grid) {
      auto out = convonet::cmd_gridsearch(opt.run, opt.version_filter);
      std::cout << "evaluated " << out.versions.size() << " versions -> "
                << out.results_csv.string() << "\n";
    } else if (cmd == fewshot) {
      auto out = convonet::cmd_fewshot(opt.run);
      for (const auto& row : out.rows)
        std::cout << "fraction " << row.fraction
                  << ": error rate " << convonet::format_real(row.error_rate)
                  << "\n";
      std::cout << "csv: " << out.csv.string() << "\n";
    } else if (cmd == mstudy) {
      auto out = convonet::cmd_mstudy(opt.run);
      for (const auto& row : out.rows)
        std::cout << "m=" << row.m_value << ": accuracy "
                  << convonet::format_real(row.report.accuracy) << " ("
                  << convonet::format_real(row.train_seconds) << "s)\n";
      std::cout << "csv: " << out.metrics_csv.string() << "\n";
    } else if (cmd == stats) {
      std::cout << convonet::render_stats(convonet::cmd_stats(opt.dataset_csv));
    } else if (cmd == compare) {
      auto out = convonet::cmd_compare(opt.results_a, opt.results_b, opt.run);
      std::cout << out.text;
      std::cout << "csv: " << out.csv.string() << "\n";
    } else if (cmd == gradcheck) {
      auto out = convonet::cmd_gradcheck(opt.run.model, opt.gc_m, opt.gc_n,
                                         opt.gc_z, opt.gc_filters,
                                         opt.gc_dense, opt.run.seed,
                                         opt.gc_tolerance);
      std::cout << "checked " << out.report.checked << " parameters ("
                << out.report.skipped_kinks << " skipped at kinks)\n";
      std::cout << "max relative error: " << out.report.max_rel_error << "\n";
      std::cout << (out.passed ? "PASS" : "FAIL") << " (tolerance "
                << out.tolerance << ")\n";
      return out.passed ? 0 : 1;
    }
    return 0;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
