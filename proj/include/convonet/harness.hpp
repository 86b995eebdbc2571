#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "convonet/metrics.hpp"
#include "convonet/model.hpp"
#include "convonet/stats.hpp"
#include "convonet/train.hpp"

namespace convonet {

namespace fs = std::filesystem;

// Everything a subcommand needs; populated from flags, config file and
// defaults by the CLI, or directly by tests.
struct RunConfig {
  std::string train_csv;
  std::string test_csv;
  std::string embeddings;
  std::string model = "TextConvoNet_4";
  std::uint64_t seed = 0;
  double lr = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  std::size_t patience = 2;
  std::size_t m = 0;  // 0 = infer from the training corpus
  std::size_t n = 0;
  std::vector<double> fractions;
  double alpha = 0.05;
  Averaging averaging = Averaging::macro;
  std::string out_dir = ".";
};

namespace detail {

inline void require_file(const std::string& path, const char* what) {
  if (path.empty())
    throw InputError(std::string("missing required ") + what + " path");
  if (!fs::exists(path))
    throw InputError(std::string(what) + " file not found: " + path);
}

inline fs::path ensure_out_dir(const RunConfig& cfg) {
  fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string dataset_label(const RunConfig& cfg) {
  const std::string& src = cfg.test_csv.empty() ? cfg.train_csv : cfg.test_csv;
  return fs::path(src).stem().string();
}

inline nlohmann::json config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["train-csv"] = cfg.train_csv;
  j["test-csv"] = cfg.test_csv;
  j["embeddings"] = cfg.embeddings;
  j["model"] = cfg.model;
  j["seed"] = cfg.seed;
  j["lr"] = cfg.lr;
  j["batch-size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["patience"] = cfg.patience;
  j["m"] = cfg.m;
  j["n"] = cfg.n;
  j["fractions"] = cfg.fractions;
  j["alpha"] = cfg.alpha;
  j["averaging"] = to_string(cfg.averaging);
  j["out-dir"] = cfg.out_dir;
  return j;
}

inline TrainConfig train_config(const RunConfig& cfg,
                                const ArchitectureConfig& arch) {
  TrainConfig tc;
  tc.learning_rate = cfg.lr;
  tc.batch_size = cfg.batch_size;
  tc.max_epochs = cfg.epochs;
  tc.patience = cfg.patience;
  tc.seed = cfg.seed;
  tc.optimizer = arch.optimizer;
  return tc;
}

}  // namespace detail

// Append-only results rows with unique (dataset, model, seed, metric) keys.
class ResultsTable {
 public:
  void append(const std::string& dataset, const std::string& model,
              std::uint64_t seed, const std::string& metric, double value) {
    std::string key = dataset + "\x1f" + model + "\x1f" +
                      std::to_string(seed) + "\x1f" + metric;
    if (!keys_.insert(key).second)
      throw std::logic_error("results table: duplicate key " + dataset + "/" +
                             model + "/" + metric);
    rows_.push_back({dataset, model, seed, metric, value});
  }

  void append_report(const std::string& dataset, const std::string& model,
                     std::uint64_t seed, const MetricsReport& report) {
    const auto values = report.values();
    for (std::size_t i = 0; i < kMetricOrder.size(); ++i)
      append(dataset, model, seed, kMetricOrder[i], values[i]);
  }

  void write(const fs::path& path) const {
    std::ofstream out(path);
    out << "dataset,model,seed,metric,value\n";
    for (const auto& r : rows_)
      out << csv_quote(r.dataset) << "," << csv_quote(r.model) << ","
          << r.seed << "," << r.metric << "," << format_real(r.value)
          << "\n";
  }

  std::size_t size() const { return rows_.size(); }

 private:
  struct Row {
    std::string dataset, model;
    std::uint64_t seed;
    std::string metric;
    double value;
  };
  std::vector<Row> rows_;
  std::set<std::string> keys_;
};

// Shared load path: embeddings + CSVs + dims + built architecture.
struct PreparedRun {
  EmbeddingTable embeddings;
  DatasetSplit split;
  ArchitectureConfig arch;
  PipelineContext ctx;
};

inline PreparedRun prepare_run(const RunConfig& cfg, bool need_test) {
  detail::require_file(cfg.train_csv, "training CSV");
  detail::require_file(cfg.embeddings, "embeddings");
  if (need_test || !cfg.test_csv.empty())
    detail::require_file(cfg.test_csv, "test CSV");

  PreparedRun run;
  run.embeddings = load_embeddings(cfg.embeddings);
  LoadedDataset train = load_dataset(cfg.train_csv);
  LoadedDataset test;
  if (!cfg.test_csv.empty()) test = load_dataset(cfg.test_csv);
  run.split = make_split(train, test);

  run.arch = catalog_lookup(cfg.model);
  run.arch.num_classes = run.split.class_names.size();
  run.arch.task =
      run.split.class_names.size() == 2 ? Task::binary : Task::multiclass;

  // The 1-D baseline (no inter-sentence kernels) reads the whole text as a
  // single row.
  run.ctx.single_sequence = run.arch.inter_kernels.empty();
  auto [m, n] = infer_dims(run.split.train, run.ctx.single_sequence);
  run.ctx.m = cfg.m > 0 ? cfg.m : m;
  run.ctx.n = cfg.n > 0 ? cfg.n : n;
  run.ctx.embeddings = &run.embeddings;
  return run;
}

struct TrainedRun {
  Model<float> model;
  TrainReport report;
  double wall_seconds = 0.0;
};

inline TrainedRun run_training(const PreparedRun& run,
                               const ArchitectureConfig& arch,
                               const RunConfig& cfg) {
  TrainedRun out;
  out.model = build<float>(arch, run.ctx.m, run.ctx.n,
                           run.embeddings.dimension, cfg.seed);
  out.model.class_names = run.split.class_names;
  const auto t0 = std::chrono::steady_clock::now();
  out.report = train(out.model, run.split, run.ctx,
                     detail::train_config(cfg, arch));
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

// ---------------------------------------------------------------------------
// train: checkpoint + per-epoch CSV + manifest
// ---------------------------------------------------------------------------

struct TrainOutputs {
  fs::path checkpoint;
  fs::path report_csv;
  fs::path manifest;
  TrainReport report;
  std::size_t params = 0;
};

inline TrainOutputs cmd_train(const RunConfig& cfg) {
  PreparedRun run = prepare_run(cfg, /*need_test=*/false);
  TrainedRun trained = run_training(run, run.arch, cfg);

  fs::path dir = detail::ensure_out_dir(cfg);
  TrainOutputs out;
  out.report = trained.report;
  out.params = param_count(trained.model);

  out.checkpoint = dir / "checkpoint.tcvn";
  save(trained.model, out.checkpoint.string());

  out.report_csv = dir / "train_report.csv";
  {
    std::ofstream f(out.report_csv);
    f << "epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& e : trained.report.epochs)
      f << e.epoch << "," << format_real(e.train_loss) << ","
        << format_real(e.val_loss) << "," << format_real(e.val_accuracy)
        << "\n";
  }

  out.manifest = dir / "manifest.json";
  {
    nlohmann::json j;
    j["config"] = detail::config_json(cfg);
    j["dims"] = {{"m", run.ctx.m}, {"n", run.ctx.n},
                 {"z", run.embeddings.dimension}};
    j["classes"] = run.split.class_names;
    j["param_count"] = out.params;
    j["stopped_epoch"] = trained.report.stopped_epoch;
    j["best_epoch"] = trained.report.best_epoch;
    j["wall_time_seconds"] = trained.wall_seconds;
    std::ofstream f(out.manifest);
    f << j.dump(2) << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// evaluate: metrics CSV + per-example predictions + compare-ready table
// ---------------------------------------------------------------------------

struct EvaluateOutputs {
  fs::path metrics_csv;
  fs::path predictions_csv;
  fs::path results_table_csv;
  EvaluationResult result;
};

inline EvaluateOutputs cmd_evaluate(const std::string& checkpoint_path,
                                    const RunConfig& cfg) {
  detail::require_file(checkpoint_path, "checkpoint");
  detail::require_file(cfg.test_csv, "test CSV");
  detail::require_file(cfg.embeddings, "embeddings");

  Model<float> model = load(checkpoint_path);
  EmbeddingTable emb = load_embeddings(cfg.embeddings);
  if (emb.dimension != model.z)
    throw InputError("embedding dimension " + std::to_string(emb.dimension) +
                     " does not match checkpoint z=" + std::to_string(model.z));
  LoadedDataset test = load_dataset(cfg.test_csv);

  // remap test labels onto the checkpoint's training-time class order
  std::vector<LabeledExample> examples = test.examples;
  if (!model.class_names.empty()) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < model.class_names.size(); ++i)
      index[model.class_names[i]] = i;
    for (auto& ex : examples) {
      auto it = index.find(test.class_names[ex.label]);
      if (it == index.end())
        throw InputError("test label \"" + test.class_names[ex.label] +
                         "\" unknown to the checkpoint (classes: " +
                         std::to_string(model.class_names.size()) + ")");
      ex.label = it->second;
    }
  } else if (test.class_names.size() != model.config.num_classes) {
    throw InputError("test class count " +
                     std::to_string(test.class_names.size()) +
                     " does not match checkpoint class count " +
                     std::to_string(model.config.num_classes));
  }

  PipelineContext ctx;
  ctx.embeddings = &emb;
  ctx.m = model.m;
  ctx.n = model.n;
  ctx.single_sequence = model.config.inter_kernels.empty();

  EvaluateOutputs out;
  out.result = evaluate(model, examples, ctx, cfg.averaging,
                        model.class_names);

  fs::path dir = detail::ensure_out_dir(cfg);
  const std::string dataset = detail::dataset_label(cfg);
  const auto values = out.result.report.values();

  out.metrics_csv = dir / "metrics.csv";
  {
    std::ofstream f(out.metrics_csv);
    f << "dataset,model,seed";
    for (const char* name : kMetricOrder) f << "," << name;
    f << "\n" << csv_quote(dataset) << "," << csv_quote(model.config.name)
      << "," << cfg.seed;
    for (double v : values) f << "," << format_real(v);
    f << "\n";
  }

  out.predictions_csv = dir / "predictions.csv";
  {
    const auto& names =
        model.class_names.empty() ? test.class_names : model.class_names;
    std::ofstream f(out.predictions_csv);
    f << "index,predicted,actual\n";
    for (std::size_t i = 0; i < examples.size(); ++i)
      f << i << "," << csv_quote(names[out.result.predictions[i]]) << ","
        << csv_quote(names[examples[i].label]) << "\n";
  }

  out.results_table_csv = dir / "results_table.csv";
  {
    std::ofstream f(out.results_table_csv);
    f << "dataset,metric,value\n";
    for (std::size_t i = 0; i < kMetricOrder.size(); ++i)
      f << csv_quote(dataset) << "," << kMetricOrder[i] << ","
        << format_real(values[i]) << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// gridsearch over the ablation catalog
// ---------------------------------------------------------------------------

namespace detail {

// '*' matches any run of characters; everything else is literal.
inline bool glob_match(const std::string& pattern, const std::string& name) {
  std::size_t p = 0, s = 0;
  std::size_t star = std::string::npos, mark = 0;
  while (s < name.size()) {
    if (p < pattern.size() && pattern[p] == name[s]) {
      ++p;
      ++s;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = s;
    } else if (star != std::string::npos) {
      p = star + 1;
      s = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace detail

struct GridOutputs {
  fs::path results_csv;
  std::vector<std::string> versions;
  ResultsTable table;
};

inline GridOutputs cmd_gridsearch(const RunConfig& cfg,
                                  const std::string& version_filter) {
  const std::string pattern = version_filter.empty() ? "V*" : version_filter;
  std::vector<ArchitectureConfig> selected;
  std::vector<std::string> known;
  for (const auto& entry : catalog()) {
    known.push_back(entry.name);
    if (detail::glob_match(pattern, entry.name)) selected.push_back(entry);
  }
  if (selected.empty()) {
    std::string names;
    for (const auto& n : known) names += (names.empty() ? "" : ", ") + n;
    throw InputError("version filter '" + pattern +
                     "' matches nothing; valid names: " + names);
  }

  PreparedRun run = prepare_run(cfg, /*need_test=*/true);
  const std::string dataset = detail::dataset_label(cfg);

  GridOutputs out;
  for (auto arch : selected) {
    arch.num_classes = run.arch.num_classes;
    arch.task = run.arch.task;
    TrainedRun trained = run_training(run, arch, cfg);
    EvaluationResult eval = evaluate(trained.model, run.split.test, run.ctx,
                                     cfg.averaging, run.split.class_names);
    out.table.append_report(dataset, arch.name, cfg.seed, eval.report);
    out.versions.push_back(arch.name);
  }

  fs::path dir = detail::ensure_out_dir(cfg);
  out.results_csv = dir / "gridsearch_results.csv";
  out.table.write(out.results_csv);
  return out;
}

// ---------------------------------------------------------------------------
// fewshot: stratified training fractions against the fixed test set
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<LabeledExample> stratified_subsample(
    const std::vector<LabeledExample>& train, double fraction,
    const std::vector<std::string>& class_names, std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train.size(); ++i)
    by_class[train[i].label].push_back(i);

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed ^ 0x9e3779b9));
  std::vector<std::size_t> chosen;
  for (auto& [label, indices] : by_class) {
    const std::size_t keep = static_cast<std::size_t>(
        fraction * static_cast<double>(indices.size()));
    if (keep == 0)
      throw InputError("fraction " + std::to_string(fraction) +
                       " leaves class \"" + class_names[label] +
                       "\" with no training examples");
    std::shuffle(indices.begin(), indices.end(), rng);
    chosen.insert(chosen.end(), indices.begin(),
                  indices.begin() + static_cast<long>(keep));
  }
  // original order, so fraction 1.0 replays the plain run exactly
  std::sort(chosen.begin(), chosen.end());
  std::vector<LabeledExample> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(train[i]);
  return out;
}

inline void check_fractions(const std::vector<double>& fractions) {
  if (fractions.empty())
    throw InputError("no fractions given (use --fractions)");
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0))
      throw InputError("fractions must lie in (0, 1], got " +
                       std::to_string(f));
}

}  // namespace detail

struct FewshotRow {
  double fraction;
  std::string model;
  double error_rate;
};

struct FewshotOutputs {
  fs::path csv;
  std::vector<FewshotRow> rows;
};

inline FewshotOutputs cmd_fewshot(const RunConfig& cfg) {
  detail::check_fractions(cfg.fractions);
  PreparedRun run = prepare_run(cfg, /*need_test=*/true);

  FewshotOutputs out;
  for (double fraction : cfg.fractions) {
    DatasetSplit sub = run.split;
    sub.train = detail::stratified_subsample(run.split.train, fraction,
                                             run.split.class_names, cfg.seed);
    PreparedRun frun = run;  // shared dims and embeddings, reduced train set
    frun.split = std::move(sub);
    frun.ctx.embeddings = &frun.embeddings;
    TrainedRun trained = run_training(frun, frun.arch, cfg);
    EvaluationResult eval = evaluate(trained.model, frun.split.test, frun.ctx,
                                     cfg.averaging, frun.split.class_names);
    out.rows.push_back({fraction, cfg.model, 1.0 - eval.report.accuracy});
  }

  fs::path dir = detail::ensure_out_dir(cfg);
  out.csv = dir / "fewshot.csv";
  std::ofstream f(out.csv);
  f << "fraction,model,error_rate\n";
  for (const auto& r : out.rows)
    f << format_real(r.fraction) << "," << csv_quote(r.model) << ","
      << format_real(r.error_rate) << "\n";
  return out;
}

// ---------------------------------------------------------------------------
// mstudy: metrics and training time as m shrinks
// ---------------------------------------------------------------------------

struct MStudyRow {
  double fraction;
  std::size_t m_value;
  double train_seconds;
  MetricsReport report;
};

struct MStudyOutputs {
  fs::path metrics_csv;
  fs::path timing_csv;
  std::vector<MStudyRow> rows;
};

inline MStudyOutputs cmd_mstudy(const RunConfig& cfg) {
  detail::check_fractions(cfg.fractions);
  PreparedRun run = prepare_run(cfg, /*need_test=*/true);

  std::size_t tallest = 1;
  for (const auto& k : run.arch.all_kernels())
    tallest = std::max(tallest, k.h);

  MStudyOutputs out;
  ResultsTable table;
  const std::string dataset = detail::dataset_label(cfg);
  for (double fraction : cfg.fractions) {
    const std::size_t m_scaled = scaled_m(run.ctx.m, fraction);
    if (m_scaled < tallest)
      throw InputError("m' = " + std::to_string(m_scaled) + " at fraction " +
                       std::to_string(fraction) +
                       " is smaller than the tallest kernel (" +
                       std::to_string(tallest) +
                       "); use a larger fraction");
    PreparedRun mrun = run;
    mrun.ctx.embeddings = &mrun.embeddings;
    mrun.ctx.m = m_scaled;
    TrainedRun trained = run_training(mrun, mrun.arch, cfg);
    EvaluationResult eval = evaluate(trained.model, mrun.split.test, mrun.ctx,
                                     cfg.averaging, mrun.split.class_names);
    table.append_report(dataset + "@m=" + std::to_string(m_scaled),
                        cfg.model, cfg.seed, eval.report);
    out.rows.push_back({fraction, m_scaled, trained.wall_seconds,
                        eval.report});
  }

  fs::path dir = detail::ensure_out_dir(cfg);
  out.metrics_csv = dir / "mstudy_metrics.csv";
  {
    std::ofstream f(out.metrics_csv);
    f << "fraction,m,model,seed,metric,value\n";
    for (const auto& r : out.rows) {
      const auto values = r.report.values();
      for (std::size_t i = 0; i < kMetricOrder.size(); ++i)
        f << format_real(r.fraction) << "," << r.m_value << ","
          << csv_quote(cfg.model) << "," << cfg.seed << "," << kMetricOrder[i]
          << "," << format_real(values[i]) << "\n";
    }
  }
  // wall time varies run to run; kept apart so the metrics CSV stays
  // byte-identical under a fixed seed
  out.timing_csv = dir / "mstudy_timing.csv";
  {
    std::ofstream f(out.timing_csv);
    f << "fraction,m,train_seconds\n";
    for (const auto& r : out.rows)
      f << format_real(r.fraction) << "," << r.m_value << ","
        << format_real(r.train_seconds) << "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// stats: dataset description
// ---------------------------------------------------------------------------

inline std::string render_stats(const DatasetStats& st) {
  std::ostringstream os;
  os << "examples:                  " << st.example_count << "\n";
  os << "classes:\n";
  for (const auto& [name, count] : st.class_histogram)
    os << "  " << name << ": " << count << "\n";
  os << "vocabulary size:           " << st.vocabulary_size << "\n";
  os << "exceeding ratio:           " << format_real(st.exceeding) << "\n";
  os << "sentences/example (max):   " << st.max_sentences << "\n";
  os << "sentences/example (mean):  " << format_real(st.mean_sentences)
     << "\n";
  os << "tokens/sentence (max):     " << st.max_sentence_tokens << "\n";
  os << "tokens/example (max):      " << st.max_tokens << "\n";
  os << "tokens/example (mean):     " << format_real(st.mean_tokens) << "\n";
  return os.str();
}

inline DatasetStats cmd_stats(const std::string& dataset_csv) {
  detail::require_file(dataset_csv, "dataset CSV");
  return compute_stats(load_dataset(dataset_csv));
}

// ---------------------------------------------------------------------------
// compare: Wilcoxon over two results tables
// ---------------------------------------------------------------------------

struct CompareOutputs {
  fs::path csv;
  TableComparison comparison;
  std::string text;
};

inline CompareOutputs cmd_compare(const std::string& results_a,
                                  const std::string& results_b,
                                  const RunConfig& cfg) {
  detail::require_file(results_a, "results CSV A");
  detail::require_file(results_b, "results CSV B");

  CompareOutputs out;
  out.comparison = compare_tables(results_a, results_b, cfg.alpha);
  out.text = render_comparison(out.comparison, cfg.alpha);

  fs::path dir = detail::ensure_out_dir(cfg);
  out.csv = dir / "comparison.csv";
  std::ofstream f(out.csv);
  const auto& r = out.comparison.result;
  f << "n_total,n_nonzero,method,w_statistic,z_score,p_two_tailed,effect_r,"
       "cohen,significant\n";
  f << r.n_total << "," << r.n_nonzero << ","
    << (r.method == WilcoxonMethod::exact ? "exact" : "normal") << ","
    << format_real(r.w_statistic) << "," << format_real(r.z_score) << ","
    << format_real(r.p_two_tailed) << "," << format_real(r.effect_r) << ","
    << to_string(r.cohen_label) << "," << (r.significant ? "yes" : "no")
    << "\n";
  return out;
}

// ---------------------------------------------------------------------------
// gradcheck: finite differences on a small double-precision model
// ---------------------------------------------------------------------------

struct GradCheckRun {
  GradCheckReport report;
  bool passed = false;
  double tolerance = 1e-6;
};

inline GradCheckRun cmd_gradcheck(const std::string& model_name,
                                  std::size_t m, std::size_t n, std::size_t z,
                                  std::size_t filters,
                                  std::size_t dense_units,
                                  std::uint64_t seed, double tolerance) {
  ArchitectureConfig arch = catalog_lookup(model_name);
  arch.filters = filters;
  arch.dense_units = dense_units;
  arch.num_classes = 2;
  arch.task = Task::binary;

  Model<double> model = build<double>(arch, m, n, z, seed);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed + 1));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  ParagraphTensorT<double> input;
  input.data = TensorT<double>({m, n, z}, 0.0);
  for (double& v : input.data.vec()) v = dist(rng);
  input.real_sentence_count = m;
  input.real_word_counts.assign(m, n);

  GradCheckRun out;
  out.tolerance = tolerance;
  out.report = gradient_check(model, input, /*label=*/1,
                              /*sample_target=*/200, seed);
  out.passed = out.report.max_rel_error < tolerance;
  return out;
}

}  // namespace convonet
