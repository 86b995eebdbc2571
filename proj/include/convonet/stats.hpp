#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "convonet/csv.hpp"
#include "convonet/metrics.hpp"

namespace convonet {

struct PairedSamples {
  std::vector<double> a;
  std::vector<double> b;
};

enum class CohenLabel { negligible, low, medium, large };

inline const char* to_string(CohenLabel l) {
  switch (l) {
    case CohenLabel::negligible: return "negligible";
    case CohenLabel::low: return "low";
    case CohenLabel::medium: return "medium";
    default: return "large";
  }
}

enum class WilcoxonMethod { exact, normal };

struct WilcoxonResult {
  double w_statistic = 0.0;  // U = min(W+, W-)
  double z_score = 0.0;
  double p_two_tailed = 1.0;
  double effect_r = 0.0;
  bool significant = false;
  CohenLabel cohen_label = CohenLabel::negligible;
  std::size_t n_nonzero = 0;
  std::size_t n_total = 0;
  WilcoxonMethod method = WilcoxonMethod::normal;
};

// r = |z| / sqrt(2n), n counting every pair including zero differences.
// Band edges sit between Cohen's 0.1 / 0.3 / 0.5 anchors.
inline std::pair<double, CohenLabel> effect_r(double z, std::size_t n_total) {
  if (n_total == 0)
    throw std::invalid_argument("effect_r: n_total must be >= 1");
  const double r =
      std::abs(z) / std::sqrt(2.0 * static_cast<double>(n_total));
  CohenLabel label = CohenLabel::large;
  if (r < 0.05) label = CohenLabel::negligible;
  else if (r < 0.2) label = CohenLabel::low;
  else if (r < 0.4) label = CohenLabel::medium;
  return {r, label};
}

// Two-tailed signed-rank test. Zero differences drop out of the ranking;
// tied magnitudes share average ranks (with the usual variance correction).
// Small tie-free inputs (n <= 12) get the exact 2^n enumeration instead of
// the normal approximation.
inline WilcoxonResult wilcoxon(const PairedSamples& samples, double alpha) {
  if (samples.a.size() != samples.b.size())
    throw std::invalid_argument("wilcoxon: sample length mismatch");
  if (samples.a.empty())
    throw std::invalid_argument("wilcoxon: empty samples");

  WilcoxonResult res;
  res.n_total = samples.a.size();

  std::vector<double> diffs;
  for (std::size_t i = 0; i < samples.a.size(); ++i) {
    const double d = samples.a[i] - samples.b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  res.n_nonzero = diffs.size();
  if (diffs.empty()) {
    // a == b elementwise: nothing to rank
    auto [r, label] = effect_r(0.0, res.n_total);
    res.effect_r = r;
    res.cohen_label = label;
    return res;
  }

  const std::size_t n = diffs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(diffs[x]) < std::abs(diffs[y]);
  });

  std::vector<double> ranks(n, 0.0);
  double tie_correction = 0.0;
  bool has_ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n &&
           std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]]))
      ++j;
    const double avg_rank = (static_cast<double>(i) +
                             static_cast<double>(j)) / 2.0 + 1.0;
    const double t = static_cast<double>(j - i + 1);
    if (t > 1.0) {
      has_ties = true;
      tie_correction += (t * t * t - t) / 48.0;
    }
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg_rank;
    i = j + 1;
  }

  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0.0) w_plus += ranks[i];
    else w_minus += ranks[i];
  }
  const double u = std::min(w_plus, w_minus);
  res.w_statistic = u;

  const double dn = static_cast<double>(n);
  const double mu = dn * (dn + 1.0) / 4.0;
  const double sigma =
      std::sqrt(dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_correction);
  res.z_score = (std::abs(u - mu) - 0.5) / sigma;
  const double p_normal =
      std::min(1.0, std::erfc(res.z_score / std::sqrt(2.0)));

  if (n <= 12 && !has_ties) {
    // exact null distribution over all sign assignments of ranks 1..n
    res.method = WilcoxonMethod::exact;
    const std::size_t patterns = std::size_t{1} << n;
    std::size_t at_most = 0;
    for (std::size_t mask = 0; mask < patterns; ++mask) {
      double wp = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (std::size_t{1} << i)) wp += ranks[i];
      const double wm = dn * (dn + 1.0) / 2.0 - wp;
      if (std::min(wp, wm) <= u + 1e-12) ++at_most;
    }
    res.p_two_tailed =
        std::min(1.0, static_cast<double>(at_most) /
                          static_cast<double>(patterns));
  } else {
    res.method = WilcoxonMethod::normal;
    res.p_two_tailed = p_normal;
  }

  auto [r, label] = effect_r(res.z_score, res.n_total);
  res.effect_r = r;
  res.cohen_label = label;
  res.significant = res.p_two_tailed < alpha;
  return res;
}

inline WilcoxonResult wilcoxon(const std::vector<double>& a,
                               const std::vector<double>& b, double alpha) {
  return wilcoxon(PairedSamples{a, b}, alpha);
}

// ---------------------------------------------------------------------------
// Results-table comparison ("dataset,metric,value" CSVs).
// ---------------------------------------------------------------------------

using ResultsKey = std::pair<std::string, std::string>;  // (dataset, metric)

inline std::map<ResultsKey, double> load_results_table(
    const std::string& path) {
  CsvReader reader(path);
  std::vector<std::string> row;
  if (!reader.next(row) || row.size() < 3 || row[0] != "dataset" ||
      row[1] != "metric" || row[2] != "value")
    throw InputError(path + ": expected header \"dataset,metric,value\"");
  std::map<ResultsKey, double> out;
  std::size_t row_no = 1;
  while (reader.next(row)) {
    ++row_no;
    if (row.size() < 3)
      throw InputError(path + ": row " + std::to_string(row_no) +
                       " has too few fields");
    ResultsKey key{row[0], row[1]};
    if (out.count(key))
      throw InputError(path + ": duplicate key (" + row[0] + "," + row[1] +
                       ")");
    try {
      out[key] = std::stod(row[2]);
    } catch (const std::exception&) {
      throw InputError(path + ": bad value \"" + row[2] + "\" at row " +
                       std::to_string(row_no));
    }
  }
  if (out.empty()) throw InputError(path + ": no data rows");
  return out;
}

namespace detail {
inline int metric_rank(const std::string& metric) {
  for (std::size_t i = 0; i < kMetricOrder.size(); ++i)
    if (metric == kMetricOrder[i]) return static_cast<int>(i);
  return static_cast<int>(kMetricOrder.size());
}
}  // namespace detail

struct TableComparison {
  WilcoxonResult result;
  std::vector<ResultsKey> keys;  // canonical pairing order
  PairedSamples samples;
};

// Pairs the two tables over their shared key set (which must be identical),
// datasets alphabetical and metrics in Table order, then runs the test.
inline TableComparison compare_tables(const std::string& path_a,
                                      const std::string& path_b,
                                      double alpha) {
  auto table_a = load_results_table(path_a);
  auto table_b = load_results_table(path_b);

  std::string missing;
  for (const auto& [key, _] : table_a)
    if (!table_b.count(key))
      missing += " (" + key.first + "," + key.second + ") missing from B;";
  for (const auto& [key, _] : table_b)
    if (!table_a.count(key))
      missing += " (" + key.first + "," + key.second + ") missing from A;";
  if (!missing.empty())
    throw InputError("compare_tables: key sets differ:" + missing);

  TableComparison cmp;
  for (const auto& [key, _] : table_a) cmp.keys.push_back(key);
  std::sort(cmp.keys.begin(), cmp.keys.end(),
            [](const ResultsKey& x, const ResultsKey& y) {
              if (x.first != y.first) return x.first < y.first;
              const int rx = detail::metric_rank(x.second);
              const int ry = detail::metric_rank(y.second);
              if (rx != ry) return rx < ry;
              return x.second < y.second;
            });
  for (const auto& key : cmp.keys) {
    cmp.samples.a.push_back(table_a.at(key));
    cmp.samples.b.push_back(table_b.at(key));
  }
  cmp.result = wilcoxon(cmp.samples, alpha);
  return cmp;
}

inline std::string render_comparison(const TableComparison& cmp,
                                     double alpha) {
  std::ostringstream os;
  const auto& r = cmp.result;
  os << "pairs:      " << r.n_total << " (" << r.n_nonzero
     << " nonzero differences)\n";
  os << "method:     "
     << (r.method == WilcoxonMethod::exact ? "exact" : "normal") << "\n";
  os << "W:          " << r.w_statistic << "\n";
  os << "z:          " << r.z_score << "\n";
  os << "p (2-tail): " << r.p_two_tailed << "\n";
  os << "effect r:   " << r.effect_r << " (" << to_string(r.cohen_label)
     << ")\n";
  os << "alpha:      " << alpha << "\n";
  os << "Sig. Diff.: " << (r.significant ? "Yes" : "No") << "\n";
  return os.str();
}

}  // namespace convonet
