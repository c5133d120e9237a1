#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skewnet/error.hpp"
#include "skewnet/random.hpp"
#include "skewnet/tensor.hpp"
#include "skewnet/text.hpp"

namespace skewnet {

// ------------------------------------------------------------------ types

/// Column layout of a flow-record CSV.
///
/// An empty `features` list means "every column except the label and the
/// drop list". `class_order`, when non-empty, pins the label registry;
/// otherwise classes are numbered in first-seen order.
struct DatasetSchema {
  std::vector<std::string> features;
  std::string label = "label";
  std::vector<std::string> drop;
  std::vector<std::string> class_order;

  void validate() const {
    if (label.empty()) throw ConfigError("schema needs a label column");
    if (std::find(features.begin(), features.end(), label) != features.end()) {
      throw ConfigError("label column '" + label + "' is also listed as a feature");
    }
    for (const auto& d : drop) {
      if (d == label) throw ConfigError("label column '" + label + "' is in the drop list");
      if (std::find(features.begin(), features.end(), d) != features.end()) {
        throw ConfigError("column '" + d + "' is both a feature and dropped");
      }
    }
  }
};

/// Feature matrix + label indices + class-name registry.
struct Dataset {
  Tensor features;  // [N x d]
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::string> feature_names;

  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return feature_names.size(); }
  std::size_t n_classes() const noexcept { return class_names.size(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  std::size_t count_of(std::string_view name) const { return class_counts()[class_index(name)]; }

  std::size_t class_index(std::string_view name) const {
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end()) throw ConfigError("unknown class '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - class_names.begin());
  }

  /// Registry/row-count consistency; throws DataError on violation.
  void validate() const {
    if (features.rank() != 2 || features.dim(0) != labels.size() || features.dim(1) != feature_names.size()) {
      throw DataError("dataset feature matrix " + shape_string(features.shape()) + " does not match " +
                      std::to_string(labels.size()) + " labels and " + std::to_string(feature_names.size()) +
                      " feature names");
    }
    for (int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= class_names.size()) {
        throw DataError("label index " + std::to_string(y) + " outside the class registry");
      }
    }
  }

  /// Rows at `indices`, in that order, with the same registry.
  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.class_names = class_names;
    out.feature_names = feature_names;
    const std::size_t d = width();
    out.features = Tensor({indices.size(), d});
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto src = features.row(indices[k]);
      std::copy(src.begin(), src.end(), out.features.row(k).begin());
      out.labels.push_back(labels[indices[k]]);
    }
    return out;
  }

  /// Same registry and rows, different feature matrix (e.g. after encoding).
  Dataset with_features(Tensor new_features, std::vector<std::string> names = {}) const {
    Dataset out;
    out.class_names = class_names;
    out.labels = labels;
    if (names.empty()) {
      for (std::size_t j = 0; j < new_features.dim(1); ++j) names.push_back("z" + std::to_string(j));
    }
    out.feature_names = std::move(names);
    out.features = std::move(new_features);
    out.validate();
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Stable identity of a row: hash of its label and feature bit patterns.
inline std::uint64_t row_hash(const Dataset& d, std::size_t i) {
  const auto r = d.features.row(i);
  std::uint64_t h = fnv1a(r.data(), r.size() * sizeof(double));
  const int y = d.labels[i];
  return fnv1a(&y, sizeof y, h);
}

inline std::vector<std::uint64_t> row_hashes(const Dataset& d) {
  std::vector<std::uint64_t> out(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) out[i] = row_hash(d, i);
  return out;
}

// ------------------------------------------------------------------ csv

struct RejectedRow {
  std::size_t line;  // 1-based, header is line 1
  std::string reason;
};

struct LoadResult {
  Dataset dataset;
  std::vector<RejectedRow> rejects;
};

namespace detail {

/// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

/// Parses CSV flow records. Rows with the wrong field count, an unparseable
/// retained numeric cell, an empty label, or (with a pinned class order)
/// an unknown label are rejected and reported, never loaded. Cells of
/// drop-listed columns are read leniently (non-numeric becomes NaN) because
/// clean() removes those columns before the finiteness filter runs.
inline LoadResult read_csv(std::istream& in, const DatasetSchema& schema) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty CSV input: no header row");
  const auto header = detail::split_csv_line(line);

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  const auto label_col = find_col(schema.label);
  if (!label_col) throw SchemaError("CSV header lacks label column '" + schema.label + "'");
  for (const auto& f : schema.features) {
    if (!find_col(f)) throw SchemaError("CSV header lacks feature column '" + f + "'");
  }

  std::vector<std::size_t> cols;
  std::vector<bool> lenient;
  LoadResult result;
  Dataset& ds = result.dataset;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == *label_col) continue;
    const bool dropped = std::find(schema.drop.begin(), schema.drop.end(), header[c]) != schema.drop.end();
    const bool wanted = schema.features.empty() ||
                        std::find(schema.features.begin(), schema.features.end(), header[c]) != schema.features.end();
    if (!dropped && !wanted) continue;
    cols.push_back(c);
    lenient.push_back(dropped);
    ds.feature_names.push_back(header[c]);
  }
  if (cols.empty()) throw SchemaError("CSV has no feature columns");
  ds.class_names = schema.class_order;

  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      result.rejects.push_back({line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                             std::to_string(fields.size())});
      continue;
    }
    const std::string& label = fields[*label_col];
    if (label.empty()) {
      result.rejects.push_back({line_no, "empty label"});
      continue;
    }
    std::string bad;
    std::vector<double> row(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto v = detail::parse_double(fields[cols[k]]);
      if (v) {
        row[k] = *v;
      } else if (lenient[k]) {
        row[k] = std::nan("");
      } else {
        bad = "unparseable value '" + fields[cols[k]] + "' in column '" + header[cols[k]] + "'";
        break;
      }
    }
    if (!bad.empty()) {
      result.rejects.push_back({line_no, bad});
      continue;
    }
    auto it = std::find(ds.class_names.begin(), ds.class_names.end(), label);
    if (it == ds.class_names.end()) {
      if (!schema.class_order.empty()) {
        result.rejects.push_back({line_no, "unknown class '" + label + "'"});
        continue;
      }
      ds.class_names.push_back(label);
      it = ds.class_names.end() - 1;
    }
    ds.labels.push_back(static_cast<int>(it - ds.class_names.begin()));
    values.insert(values.end(), row.begin(), row.end());
  }
  ds.features = Tensor({ds.labels.size(), cols.size()}, std::move(values));
  return result;
}

inline LoadResult load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return read_csv(in, schema);
}

/// Same dialect as the input: header, numeric features, label column last.
/// Values use the shortest round-trip representation.
inline void write_csv(std::ostream& out, const Dataset& ds, std::string_view label_column = "label") {
  for (const auto& f : ds.feature_names) out << detail::csv_field(f) << ',';
  out << detail::csv_field(label_column) << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (double v : ds.features.row(i)) out << detail::format_double(v) << ',';
    out << detail::csv_field(ds.class_names[static_cast<std::size_t>(ds.labels[i])]) << '\n';
  }
}

inline void save_csv(const std::filesystem::path& path, const Dataset& ds, std::string_view label_column = "label") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  write_csv(out, ds, label_column);
}

inline void write_reject_log(std::ostream& out, const std::vector<RejectedRow>& rejects) {
  for (const auto& r : rejects) out << "line " << r.line << ": " << r.reason << '\n';
}

// ------------------------------------------------------------------ cleaning

/// Removes drop-listed columns, then every row holding a non-finite value.
inline Dataset clean(const Dataset& ds, const DatasetSchema& schema) {
  std::vector<std::size_t> keep_cols;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < ds.width(); ++c) {
    if (std::find(schema.drop.begin(), schema.drop.end(), ds.feature_names[c]) != schema.drop.end()) continue;
    keep_cols.push_back(c);
    names.push_back(ds.feature_names[c]);
  }
  if (keep_cols.empty()) throw SchemaError("no feature columns left after dropping");

  Dataset out;
  out.class_names = ds.class_names;
  out.feature_names = std::move(names);
  std::vector<double> values;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto r = ds.features.row(i);
    const bool finite = std::all_of(keep_cols.begin(), keep_cols.end(), [&](std::size_t c) { return std::isfinite(r[c]); });
    if (!finite) continue;
    for (std::size_t c : keep_cols) values.push_back(r[c]);
    out.labels.push_back(ds.labels[i]);
  }
  out.features = Tensor({out.labels.size(), keep_cols.size()}, std::move(values));
  return out;
}

// ------------------------------------------------------------------ sampling

namespace detail {

/// Total order on rows (label, then feature bit patterns) that makes
/// sampling independent of the incoming row order.
inline bool canonical_less(const Dataset& ds, std::size_t a, std::size_t b) {
  if (ds.labels[a] != ds.labels[b]) return ds.labels[a] < ds.labels[b];
  const auto ra = ds.features.row(a), rb = ds.features.row(b);
  for (std::size_t j = 0; j < ra.size(); ++j) {
    const auto ba = std::bit_cast<std::uint64_t>(ra[j]), bb = std::bit_cast<std::uint64_t>(rb[j]);
    if (ba != bb) return ba < bb;
  }
  return false;
}

inline std::vector<std::vector<std::size_t>> canonical_class_rows(const Dataset& ds) {
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return canonical_less(ds, a, b); });
  std::vector<std::vector<std::size_t>> per_class(ds.n_classes());
  for (std::size_t i : order) per_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  return per_class;
}

inline void seeded_shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  Rng rng(seed);
  std::shuffle(v.begin(), v.end(), rng.engine());
}

inline void sort_canonical(const Dataset& ds, std::vector<std::size_t>& idx) {
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (canonical_less(ds, a, b)) return true;
    if (canonical_less(ds, b, a)) return false;
    return a < b;
  });
}

inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

}  // namespace detail

/// Keeps min(cap, available) rows per capped class, drawn uniformly without
/// replacement; classes absent from `caps` are kept whole. Output rows are
/// in canonical order.
inline Dataset sample_per_class(const Dataset& ds, const std::map<std::string, std::size_t>& caps,
                                std::uint64_t seed) {
  for (const auto& [name, cap] : caps) {
    ds.class_index(name);
    if (cap == 0) throw ConfigError("sampling cap for '" + name + "' must be positive");
  }
  auto per_class = detail::canonical_class_rows(ds);
  std::vector<std::size_t> selected;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& rows = per_class[c];
    auto it = caps.find(ds.class_names[c]);
    if (it != caps.end() && it->second < rows.size()) {
      detail::seeded_shuffle(rows, derive_seed(seed, "sample/" + ds.class_names[c]));
      rows.resize(it->second);
    }
    selected.insert(selected.end(), rows.begin(), rows.end());
  }
  detail::sort_canonical(ds, selected);
  return ds.subset(selected);
}

/// Per class: round-half-up(fraction * count) rows to train, clamped so both
/// sides keep at least one row; the remainder goes to test.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
  auto per_class = detail::canonical_class_rows(ds);
  std::vector<std::size_t> train, test;
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& rows = per_class[c];
    if (rows.empty()) continue;
    if (rows.size() < 2) {
      throw DataError("class '" + ds.class_names[c] + "' has a single row and cannot be split");
    }
    detail::seeded_shuffle(rows, derive_seed(seed, "split/" + ds.class_names[c]));
    std::size_t k = detail::round_half_up(train_fraction * static_cast<double>(rows.size()));
    k = std::clamp<std::size_t>(k, 1, rows.size() - 1);
    train.insert(train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(k), rows.end());
  }
  detail::sort_canonical(ds, train);
  detail::sort_canonical(ds, test);
  return {ds.subset(train), ds.subset(test)};
}

/// Rows of `a` followed by rows of `b`; registries and feature names must agree.
inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.class_names != b.class_names || a.feature_names != b.feature_names) {
    throw DataError("cannot concatenate datasets with different schemas");
  }
  Dataset out;
  out.class_names = a.class_names;
  out.feature_names = a.feature_names;
  std::vector<double> values(a.features.storage());
  values.insert(values.end(), b.features.storage().begin(), b.features.storage().end());
  out.features = Tensor({a.rows() + b.rows(), a.width()}, std::move(values));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

// ------------------------------------------------------------------ scaling

/// Per-feature min-max scaler fitted on training rows only.
struct Scaler {
  std::vector<double> min;
  std::vector<double> max;

  std::size_t width() const noexcept { return min.size(); }

  /// (x - min) / (max - min); constant columns map to 0. No clipping, so
  /// unseen values may land outside [0, 1].
  Tensor apply(const Tensor& x) const {
    check(x);
    Tensor out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto r = out.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double range = max[j] - min[j];
        r[j] = range > 0.0 ? (r[j] - min[j]) / range : 0.0;
      }
    }
    return out;
  }

  /// Inverse of apply() for non-constant columns; constant columns return min.
  Tensor invert(const Tensor& x) const {
    check(x);
    Tensor out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto r = out.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = min[j] + r[j] * (max[j] - min[j]);
    }
    return out;
  }

  Dataset apply(const Dataset& ds) const { return ds.with_features(apply(ds.features), ds.feature_names); }

  friend bool operator==(const Scaler&, const Scaler&) = default;

 private:
  void check(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != width()) {
      throw DimensionError("scaler fitted on " + std::to_string(width()) + " features, got " + shape_string(x.shape()));
    }
  }
};

inline Scaler fit_scaler(const Tensor& train) {
  if (train.rank() != 2 || train.dim(0) == 0) throw DataError("cannot fit a scaler on an empty matrix");
  Scaler s;
  const std::size_t d = train.dim(1);
  s.min.assign(d, 0.0);
  s.max.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) s.min[j] = s.max[j] = train.at(0, j);
  for (std::size_t i = 1; i < train.dim(0); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      s.min[j] = std::min(s.min[j], train.at(i, j));
      s.max[j] = std::max(s.max[j], train.at(i, j));
    }
  }
  return s;
}

inline Tensor apply_scaler(const Scaler& s, const Tensor& x) { return s.apply(x); }

// ------------------------------------------------------------------ synthetic benchmark

struct SynthClass {
  std::string name;
  std::size_t count = 0;
  std::size_t clusters = 1;
  /// Scatter of the class's cluster centers around the class center.
  double spread = 0.5;
  /// When set, the class center sits `offset` away (random direction) from
  /// this other class's center instead of being drawn independently.
  std::string near;
  double offset = 0.0;
  /// Explicit cluster centers (each of length n_features); overrides the above.
  std::vector<std::vector<double>> centers;
};

/// Gaussian-cluster stand-in for a flow dataset. A row of class c is
/// separability * center + noise * N(0, I), so separability 0 makes every
/// class share one distribution.
struct SynthSpec {
  std::vector<SynthClass> classes;
  std::size_t n_features = 28;
  double separability = 1.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> random_direction(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace detail

inline Dataset generate_synthetic_benchmark(const SynthSpec& spec) {
  if (spec.classes.size() < 2) throw ConfigError("a synthetic benchmark needs at least two classes");
  if (spec.n_features == 0) throw ConfigError("a synthetic benchmark needs at least one feature");
  const std::size_t d = spec.n_features;

  std::map<std::string, std::vector<double>> class_center;
  std::vector<std::vector<std::vector<double>>> cluster_centers(spec.classes.size());
  // Independent classes first so `near` may refer to any of them.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t c = 0; c < spec.classes.size(); ++c) {
      const SynthClass& k = spec.classes[c];
      if (k.count == 0) throw ConfigError("class '" + k.name + "' has a zero count");
      if (k.clusters == 0) throw ConfigError("class '" + k.name + "' needs at least one cluster");
      if ((pass == 0) != k.near.empty()) continue;
      if (!k.centers.empty()) {
        for (const auto& ctr : k.centers) {
          if (ctr.size() != d) throw ConfigError("center width mismatch for class '" + k.name + "'");
        }
        cluster_centers[c] = k.centers;
        class_center[k.name] = k.centers.front();
        continue;
      }
      Rng rng(derive_seed(spec.seed, "center/" + k.name));
      std::vector<double> center(d);
      if (k.near.empty()) {
        for (double& x : center) x = rng.normal();
      } else {
        auto it = class_center.find(k.near);
        if (it == class_center.end()) throw ConfigError("class '" + k.name + "' is near unknown class '" + k.near + "'");
        const auto dir = detail::random_direction(d, rng);
        for (std::size_t j = 0; j < d; ++j) center[j] = it->second[j] + k.offset * dir[j];
      }
      class_center[k.name] = center;
      for (std::size_t q = 0; q < k.clusters; ++q) {
        std::vector<double> ctr = center;
        if (k.clusters > 1) {
          for (double& x : ctr) x += k.spread * rng.normal();
        }
        cluster_centers[c].push_back(std::move(ctr));
      }
    }
  }

  Dataset ds;
  std::size_t total = 0;
  for (const auto& k : spec.classes) {
    ds.class_names.push_back(k.name);
    total += k.count;
  }
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("f" + std::to_string(j));
  ds.features = Tensor({total, d});
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const SynthClass& k = spec.classes[c];
    Rng rng(derive_seed(spec.seed, "rows/" + k.name));
    for (std::size_t i = 0; i < k.count; ++i, ++row) {
      const auto& ctr = cluster_centers[c][cluster_centers[c].size() == 1 ? 0 : rng.index(cluster_centers[c].size())];
      auto r = ds.features.row(row);
      for (std::size_t j = 0; j < d; ++j) r[j] = spec.separability * ctr[j] + spec.noise * rng.normal();
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

/// 60,000-row desk benchmark with a Bot-IoT-like skew: two large attack
/// classes, a 1% class and two minority classes at 0.1% and 0.05% whose
/// centers sit close to a majority class.
inline SynthSpec botiot_mini_spec(std::uint64_t seed = 0) {
  SynthSpec s;
  s.n_features = 28;
  s.separability = 2.0;
  s.noise = 1.0;
  s.seed = seed;
  s.classes = {
      {"c0", 31950, 3, 0.6, "", 0.0, {}},
      {"c1", 27360, 3, 0.6, "", 0.0, {}},
      {"c2", 600, 2, 0.5, "", 0.0, {}},
      {"c3", 60, 1, 0.0, "c0", 1.5, {}},
      {"c4", 30, 1, 0.0, "c1", 1.5, {}},
  };
  return s;
}

}  // namespace skewnet
