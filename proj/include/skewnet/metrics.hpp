#pragma once

#include <cstdint>
#include <algorithm>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skewnet/error.hpp"
#include "skewnet/text.hpp"

namespace skewnet {

/// Rows are true classes, columns are predicted classes.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

  std::size_t n_classes() const noexcept { return n_; }
  std::uint64_t& at(std::size_t t, std::size_t p) { return counts_.at(t * n_ + p); }
  std::uint64_t at(std::size_t t, std::size_t p) const { return counts_.at(t * n_ + p); }

  std::uint64_t row_sum(std::size_t t) const {
    std::uint64_t s = 0;
    for (std::size_t p = 0; p < n_; ++p) s += at(t, p);
    return s;
  }
  std::uint64_t column_sum(std::size_t p) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < n_; ++t) s += at(t, p);
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t c = 0; c < n_; ++c) s += at(c, c);
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto v : counts_) s += v;
    return s;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size()) {
    throw DataError("confusion: " + std::to_string(y_true.size()) + " labels vs " +
                    std::to_string(y_pred.size()) + " predictions");
  }
  ConfusionMatrix cm(n_classes);
  const auto in_range = [&](int v) { return v >= 0 && static_cast<std::size_t>(v) < n_classes; };
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (!in_range(y_true[i]) || !in_range(y_pred[i])) {
      throw IndexError("confusion: class index out of range at position " + std::to_string(i));
    }
    ++cm.at(static_cast<std::size_t>(y_true[i]), static_cast<std::size_t>(y_pred[i]));
  }
  return cm;
}

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<double> precision, recall, f1;
  double accuracy = 0.0;
  ConfusionMatrix matrix;

  std::size_t n_classes() const noexcept { return class_names.size(); }
  std::size_t index_of(std::string_view name) const {
    for (std::size_t c = 0; c < class_names.size(); ++c)
      if (class_names[c] == name) return c;
    throw ConfigError("class '" + std::string(name) + "' is not in the report");
  }

  bool operator==(const MetricsReport&) const = default;
};

namespace detail {
// 0/0 counts as 0 so degenerate runs still produce a report.
inline double safe_ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace detail

inline MetricsReport per_class_metrics(const ConfusionMatrix& cm, std::vector<std::string> names = {}) {
  const std::size_t n = cm.n_classes();
  if (n == 0 || cm.total() == 0) throw DataError("per_class_metrics: empty confusion matrix");
  if (names.empty()) {
    for (std::size_t c = 0; c < n; ++c) names.push_back("class" + std::to_string(c));
  }
  if (names.size() != n) throw DimensionError("per_class_metrics: class name count does not match matrix");
  MetricsReport r;
  r.class_names = std::move(names);
  r.matrix = cm;
  r.precision.resize(n);
  r.recall.resize(n);
  r.f1.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    const double p = detail::safe_ratio(cm.at(c, c), cm.column_sum(c));
    const double q = detail::safe_ratio(cm.at(c, c), cm.row_sum(c));
    r.precision[c] = p;
    r.recall[c] = q;
    r.f1[c] = p + q == 0.0 ? 0.0 : 2.0 * p * q / (p + q);
  }
  r.accuracy = detail::safe_ratio(cm.trace(), cm.total());
  return r;
}

inline MetricsReport evaluate_predictions(std::span<const int> y_true, std::span<const int> y_pred,
                                          const std::vector<std::string>& names) {
  return per_class_metrics(confusion(y_true, y_pred, names.size()), names);
}

/// Micro-averaged precision and recall: pooled TP over pooled predicted/true counts.
inline double micro_precision(const ConfusionMatrix& cm) {
  std::uint64_t tp = 0, pred = 0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    tp += cm.at(c, c);
    pred += cm.column_sum(c);
  }
  return detail::safe_ratio(tp, pred);
}

inline double micro_recall(const ConfusionMatrix& cm) {
  std::uint64_t tp = 0, actual = 0;
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    tp += cm.at(c, c);
    actual += cm.row_sum(c);
  }
  return detail::safe_ratio(tp, actual);
}

inline double mean_f1(const MetricsReport& r, std::span<const std::size_t> classes) {
  if (classes.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t c : classes) s += r.f1.at(c);
  return s / static_cast<double>(classes.size());
}

// ------------------------------------------------------------------ output

enum class ReportFormat { table, machine };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "table") return ReportFormat::table;
  if (s == "machine") return ReportFormat::machine;
  throw ConfigError("unknown report format '" + std::string(s) + "' (expected table or machine)");
}

/// Machine format, one `key=value` per line:
///   <prefix>classes=C
///   <prefix>class.<i>.name / .precision / .recall / .f1
///   <prefix>accuracy
///   <prefix>confusion.<t>=<space separated counts for true class t>
/// Reals use the shortest representation that parses back to the same double.
inline void write_machine_report(std::ostream& out, const MetricsReport& r, std::string_view prefix = "") {
  const auto key = [&](const std::string& k) -> std::ostream& { return out << prefix << k << '='; };
  key("classes") << r.n_classes() << '\n';
  for (std::size_t c = 0; c < r.n_classes(); ++c) {
    const std::string base = "class." + std::to_string(c) + ".";
    key(base + "name") << r.class_names[c] << '\n';
    key(base + "precision") << detail::format_double(r.precision[c]) << '\n';
    key(base + "recall") << detail::format_double(r.recall[c]) << '\n';
    key(base + "f1") << detail::format_double(r.f1[c]) << '\n';
  }
  key("accuracy") << detail::format_double(r.accuracy) << '\n';
  for (std::size_t t = 0; t < r.matrix.n_classes(); ++t) {
    key("confusion." + std::to_string(t));
    for (std::size_t p = 0; p < r.matrix.n_classes(); ++p) out << (p ? " " : "") << r.matrix.at(t, p);
    out << '\n';
  }
}

/// Aligned table with 2-decimal metrics, one row per class.
inline void write_table_report(std::ostream& out, const MetricsReport& r) {
  std::size_t w = 5;
  for (const auto& n : r.class_names) w = std::max(w, n.size());
  const auto pad = [](std::string s, std::size_t width) {
    s.resize(std::max(width, s.size()), ' ');
    return s;
  };
  out << pad("class", w) << "  Prc    Recall  F1     Support\n";
  for (std::size_t c = 0; c < r.n_classes(); ++c) {
    out << pad(r.class_names[c], w) << "  " << pad(detail::format_fixed(r.precision[c], 2), 7)
        << pad(detail::format_fixed(r.recall[c], 2), 8) << pad(detail::format_fixed(r.f1[c], 2), 7)
        << r.matrix.row_sum(c) << '\n';
  }
  out << pad("accuracy", w) << "  " << detail::format_fixed(r.accuracy, 2) << '\n';
}

inline std::string emit_report(const MetricsReport& r, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::machine) write_machine_report(out, r);
  else write_table_report(out, r);
  return out.str();
}

/// Reads `key=value` lines; blank lines and lines starting with '#' are skipped.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    const std::string_view line = detail::trim(text.substr(pos, nl - pos));
    ++line_no;
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw DataError("line " + std::to_string(line_no) + ": expected key=value");
    kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
  }
  return kv;
}

inline MetricsReport parse_machine_report(const std::map<std::string, std::string>& kv, std::string_view prefix = "") {
  const auto get = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(std::string(prefix) + k);
    if (it == kv.end()) throw DataError("report is missing key '" + std::string(prefix) + k + "'");
    return it->second;
  };
  const auto real = [&](const std::string& k) {
    const auto v = detail::parse_double(get(k));
    if (!v) throw DataError("report key '" + k + "' is not a number");
    return *v;
  };
  const auto n = detail::parse_integer<std::size_t>(get("classes"));
  if (!n) throw DataError("report key 'classes' is not an integer");
  MetricsReport r;
  r.matrix = ConfusionMatrix(*n);
  for (std::size_t c = 0; c < *n; ++c) {
    const std::string base = "class." + std::to_string(c) + ".";
    r.class_names.push_back(get(base + "name"));
    r.precision.push_back(real(base + "precision"));
    r.recall.push_back(real(base + "recall"));
    r.f1.push_back(real(base + "f1"));
    std::istringstream row(get("confusion." + std::to_string(c)));
    for (std::size_t p = 0; p < *n; ++p) {
      if (!(row >> r.matrix.at(c, p))) throw DataError("report confusion row " + std::to_string(c) + " is short");
    }
  }
  r.accuracy = real("accuracy");
  return r;
}

inline MetricsReport parse_machine_report(std::string_view text) {
  return parse_machine_report(parse_key_values(text));
}

}  // namespace skewnet
