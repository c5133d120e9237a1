#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "skewnet/dataset.hpp"
#include "skewnet/metrics.hpp"
#include "skewnet/nn/loss.hpp"

namespace skewnet {

/// Mean F1 over the named classes.
inline double objective_score(const MetricsReport& report, const std::vector<std::string>& target_classes) {
  if (target_classes.empty()) throw ConfigError("objective needs at least one target class");
  double s = 0.0;
  for (const auto& name : target_classes) s += report.f1[report.index_of(name)];
  return s / static_cast<double>(target_classes.size());
}

struct WeightSearchConfig {
  double initial = 10.0;   // a
  double decrease = 2.0;   // alpha
  double increase = 5.0;   // beta
  std::size_t patience = 3;
  std::size_t max_iterations = 30;
  // Non-minority mean F1 this far below baseline counts as overfitting.
  double overfit_tolerance = 0.01;
  double min_improvement = 1e-3;

  void validate() const {
    if (!(initial > 1.0) || initial != std::floor(initial)) throw ConfigError("initial weight must be an integer > 1");
    if (!(decrease > 0.0) || !(increase > 0.0)) throw ConfigError("weight search steps must be positive");
    if (decrease == increase) throw ConfigError("weight search steps must differ (alpha != beta)");
    if (max_iterations == 0) throw ConfigError("max_iterations must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
  }
};

struct SearchStep {
  ClassWeights weights;
  std::string searched_class;  // empty for the baseline
  double objective = 0.0;
  double other_f1 = 0.0;  // mean F1 of the non-minority classes
};

struct SearchResult {
  ClassWeights weights;
  double objective = 0.0;
  double baseline_objective = 0.0;
  std::vector<SearchStep> trace;
  bool truncated = false;
};

/// Train on a candidate weighting and report validation metrics. Must be
/// deterministic for the search to be reproducible.
using WeightTrainer = std::function<MetricsReport(const ClassWeights&)>;

/// Per-class search: minority classes are visited in ascending frequency.
/// Each starts at `initial`; when the other classes' mean F1 falls more
/// than `overfit_tolerance` below baseline the weight drops by `decrease`
/// (never below 1), otherwise it rises by `increase`. A class is done after
/// `patience` candidates without a `min_improvement` gain in the objective,
/// or when the rule revisits a weight. Iteration 0 is the all-unit
/// baseline, so the result never scores below it.
inline SearchResult search_class_weights(const std::vector<std::string>& class_names,
                                         const std::vector<std::size_t>& class_counts,
                                         const std::vector<std::string>& minority, const WeightSearchConfig& config,
                                         const WeightTrainer& trainer) {
  config.validate();
  if (class_counts.size() != class_names.size()) throw ConfigError("class count list does not match class names");
  if (minority.empty()) throw ConfigError("weight search needs at least one minority class");
  std::set<std::string> unique(minority.begin(), minority.end());
  if (unique.size() != minority.size()) throw ConfigError("minority classes must be distinct");
  std::vector<std::size_t> minority_idx;
  for (const auto& name : minority) {
    const auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw ConfigError("unknown minority class '" + name + "'");
    minority_idx.push_back(static_cast<std::size_t>(it - class_names.begin()));
  }
  if (minority_idx.size() >= class_names.size()) throw ConfigError("minority classes must be a strict subset");
  std::vector<std::string> others;
  for (const auto& name : class_names)
    if (!unique.contains(name)) others.push_back(name);

  SearchResult result;
  const auto evaluate = [&](const ClassWeights& w, const std::string& cls) -> const SearchStep& {
    const MetricsReport r = trainer(w);
    result.trace.push_back({w, cls, objective_score(r, minority), objective_score(r, others)});
    return result.trace.back();
  };

  std::vector<double> current(class_names.size(), 1.0);
  const SearchStep baseline = evaluate(ClassWeights(current), "");
  result.weights = baseline.weights;
  result.objective = result.baseline_objective = baseline.objective;

  std::vector<std::size_t> order = minority_idx;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return class_counts[a] < class_counts[b]; });

  std::size_t used = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t c = order[k];
    double a = config.initial;
    std::set<double> visited;
    std::size_t stale = 0;
    while (stale < config.patience && !visited.contains(a)) {
      if (used == config.max_iterations) {
        result.truncated = true;
        break;
      }
      visited.insert(a);
      std::vector<double> cand = current;
      cand[c] = a;
      const SearchStep step = evaluate(ClassWeights(cand), class_names[c]);
      ++used;
      if (step.objective > result.objective + config.min_improvement) {
        result.objective = step.objective;
        result.weights = step.weights;
        stale = 0;
      } else {
        ++stale;
      }
      const bool overfit = step.other_f1 < baseline.other_f1 - config.overfit_tolerance;
      a = overfit ? std::max(1.0, a - config.decrease) : a + config.increase;
    }
    if (result.truncated) break;
    // later classes build on the best weighting found so far
    current = result.weights.values();
  }
  return result;
}

/// Dataset form: the trainer sees the training and validation sets.
inline SearchResult search_class_weights(
    const Dataset& train, const Dataset& validation, const std::vector<std::string>& minority,
    const WeightSearchConfig& config,
    const std::function<MetricsReport(const Dataset&, const Dataset&, const ClassWeights&)>& trainer) {
  if (train.class_names != validation.class_names) throw DataError("train and validation class registries differ");
  return search_class_weights(train.class_names, train.class_counts(), minority, config,
                              [&](const ClassWeights& w) { return trainer(train, validation, w); });
}

inline void write_search_trace(std::ostream& out, const SearchResult& r, const std::vector<std::string>& class_names) {
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const auto& s = r.trace[i];
    out << "search.trace." << i << ".class=" << (s.searched_class.empty() ? "baseline" : s.searched_class) << '\n';
    for (std::size_t c = 0; c < class_names.size(); ++c)
      out << "search.trace." << i << ".weight." << class_names[c] << '=' << detail::format_double(s.weights[c]) << '\n';
    out << "search.trace." << i << ".objective=" << detail::format_double(s.objective) << '\n';
    out << "search.trace." << i << ".other_f1=" << detail::format_double(s.other_f1) << '\n';
  }
  for (std::size_t c = 0; c < class_names.size(); ++c)
    out << "search.best.weight." << class_names[c] << '=' << detail::format_double(r.weights[c]) << '\n';
  out << "search.best.objective=" << detail::format_double(r.objective) << '\n';
  out << "search.baseline.objective=" << detail::format_double(r.baseline_objective) << '\n';
  out << "search.truncated=" << (r.truncated ? 1 : 0) << '\n';
}

}  // namespace skewnet
