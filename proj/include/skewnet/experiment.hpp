#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "skewnet/autoencoder.hpp"
#include "skewnet/classifier.hpp"
#include "skewnet/dataset.hpp"
#include "skewnet/metrics.hpp"
#include "skewnet/synthesizer.hpp"
#include "skewnet/weight_search.hpp"

namespace skewnet {

inline constexpr int kConfigVersion = 1;
inline constexpr int kResultVersion = 1;

enum class Variant { e1, e2, e3 };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::e1: return "E1";
    case Variant::e2: return "E2";
    case Variant::e3: return "E3";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "E1") return Variant::e1;
  if (s == "E2") return Variant::e2;
  if (s == "E3") return Variant::e3;
  throw ConfigError("unknown experiment variant '" + std::string(s) + "' (expected E1, E2 or E3)");
}

// Standard order augments scaled features and then encodes. The other order
// trains the VAEs in latent space and marks every report non-standard.
enum class StageOrder { augment_then_encode, encode_then_augment };

inline std::string to_string(StageOrder o) {
  return o == StageOrder::augment_then_encode ? "augment-then-encode" : "encode-then-augment";
}

inline StageOrder parse_stage_order(std::string_view s) {
  if (s == "augment-then-encode") return StageOrder::augment_then_encode;
  if (s == "encode-then-augment") return StageOrder::encode_then_augment;
  throw ConfigError("unknown stage order '" + std::string(s) + "'");
}

/// Synthetic rows for one class, as a fraction of the class's training
/// count or as an absolute count.
struct PlanSpec {
  std::string class_name;
  std::optional<double> fraction;
  std::optional<std::size_t> count;

  std::size_t resolve(std::size_t train_count) const {
    if (fraction) return plan_from_fraction(train_count, *fraction);
    check_cap(class_name, train_count, *count);
    return *count;
  }
};

struct SearchSpec {
  WeightSearchConfig search;
  // Share of the real training rows held out to score candidates.
  double holdout_fraction = 0.25;
  // Training epochs per candidate; 0 means the main training epochs.
  std::size_t epochs = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::optional<std::filesystem::path> csv_path;
  std::optional<SynthSpec> synth;
  // Synthetic data seed; defaults to the run seed.
  std::optional<std::uint64_t> data_seed;
  DatasetSchema schema;
  std::map<std::string, std::size_t> caps;
  double train_fraction = 0.8;

  ProjectorConfig projector;
  VaeConfig vae;
  std::vector<PlanSpec> plans;
  std::map<std::string, double> weights;
  std::optional<SearchSpec> search;

  ArchitectureSpec architecture;
  TrainConfig training;
  std::vector<Variant> variants{Variant::e1, Variant::e2, Variant::e3};
  // Classes summarised as minority/majority; default: planned classes and the rest.
  std::vector<std::string> minority_classes;
  std::vector<std::string> majority_classes;
  StageOrder stage_order = StageOrder::augment_then_encode;

  // Canonical text of the parsed document, hashed into the provenance.
  std::string canonical;

  bool wants(Variant v) const { return std::find(variants.begin(), variants.end(), v) != variants.end(); }
  bool needs_augmentation() const { return wants(Variant::e2) || wants(Variant::e3); }

  std::vector<std::string> minority() const {
    if (!minority_classes.empty()) return minority_classes;
    std::vector<std::string> out;
    for (const auto& p : plans) out.push_back(p.class_name);
    return out;
  }

  void validate() const {
    if (csv_path.has_value() == synth.has_value()) throw ConfigError("dataset needs exactly one of 'csv' or 'synthetic'");
    schema.validate();
    for (const auto& [name, cap] : caps)
      if (cap == 0) throw ConfigError("sampling cap for '" + name + "' must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
    projector.validate();
    vae.validate();
    training.validate();
    if (variants.empty()) throw ConfigError("no experiment variants requested");
    std::set<Variant> seen(variants.begin(), variants.end());
    if (seen.size() != variants.size()) throw ConfigError("experiment variants must be distinct");
    if (needs_augmentation() && plans.empty()) throw ConfigError("E2 and E3 need augmentation plans");
    if (wants(Variant::e3) && weights.empty() && !search) throw ConfigError("E3 needs class weights or a search config");
    if (!weights.empty() && search) throw ConfigError("give either explicit class weights or a search config, not both");
    std::set<std::string> planned;
    for (const auto& p : plans) {
      if (p.class_name.empty()) throw ConfigError("augmentation plan without a class");
      if (!planned.insert(p.class_name).second) throw ConfigError("two augmentation plans for '" + p.class_name + "'");
      if (p.fraction.has_value() == p.count.has_value())
        throw ConfigError("plan for '" + p.class_name + "' needs exactly one of 'fraction' or 'count'");
      if (p.fraction && !(*p.fraction > 0.0 && *p.fraction < 1.0))
        throw CapViolationError("plan fraction for '" + p.class_name + "' must be in (0, 1)");
      if (p.count && *p.count == 0) throw ConfigError("plan for '" + p.class_name + "' requests no rows");
    }
    for (const auto& [name, w] : weights)
      if (!std::isfinite(w) || w < 1.0) throw ConfigError("class weight for '" + name + "' must be finite and >= 1");
    if (search) {
      search->search.validate();
      if (!(search->holdout_fraction > 0.0 && search->holdout_fraction < 1.0))
        throw ConfigError("search holdout fraction must be in (0, 1)");
      if (minority().empty()) throw ConfigError("weight search needs minority classes");
    }
    if (synth) {
      if (synth->classes.size() < 2) throw ConfigError("a synthetic benchmark needs at least two classes");
      if (projector.latent_dim >= synth->n_features) throw ConfigError("latent_dim must be below the feature count");
    }
  }

  /// Checks that need the class registry of the loaded data.
  void validate_against(const Dataset& ds) const {
    for (const auto& [name, cap] : caps) ds.class_index(name);
    for (const auto& p : plans) ds.class_index(p.class_name);
    for (const auto& [name, w] : weights) ds.class_index(name);
    for (const auto& n : minority()) ds.class_index(n);
    for (const auto& n : majority_classes) ds.class_index(n);
    if (projector.latent_dim >= ds.width()) throw ConfigError("latent_dim must be below the feature count");
  }
};

// ------------------------------------------------------------------ config parsing

namespace detail {

using Json = nlohmann::json;

inline void allow_keys(const Json& j, const std::string& where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown key '" + k + "' in '" + where + "'");
  }
}

inline std::size_t to_count(const Json& v, const std::string& what) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1e18) return static_cast<std::size_t>(d);
  }
  throw ConfigError("'" + what + "' must be a non-negative integer");
}

inline double to_real(const Json& v, const std::string& what) {
  if (!v.is_number()) throw ConfigError("'" + what + "' must be a number");
  return v.get<double>();
}

inline std::string to_text(const Json& v, const std::string& what) {
  if (!v.is_string()) throw ConfigError("'" + what + "' must be a string");
  return v.get<std::string>();
}

inline std::vector<std::string> to_strings(const Json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError("'" + what + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(to_text(e, what));
  return out;
}

template <class F>
void if_key(const Json& j, const char* key, F&& f) {
  if (j.contains(key)) f(j.at(key));
}

inline SynthClass parse_synth_class(const Json& j) {
  allow_keys(j, "synthetic.classes[]", {"name", "count", "clusters", "spread", "near", "offset", "centers"});
  SynthClass k;
  if (!j.contains("name") || !j.contains("count")) throw ConfigError("synthetic class needs 'name' and 'count'");
  k.name = to_text(j["name"], "name");
  k.count = to_count(j["count"], "count");
  if_key(j, "clusters", [&](const Json& v) { k.clusters = to_count(v, "clusters"); });
  if_key(j, "spread", [&](const Json& v) { k.spread = to_real(v, "spread"); });
  if_key(j, "near", [&](const Json& v) { k.near = to_text(v, "near"); });
  if_key(j, "offset", [&](const Json& v) { k.offset = to_real(v, "offset"); });
  if_key(j, "centers", [&](const Json& v) {
    if (!v.is_array()) throw ConfigError("'centers' must be a list of lists");
    for (const auto& c : v) {
      std::vector<double> row;
      if (!c.is_array()) throw ConfigError("'centers' must be a list of lists");
      for (const auto& x : c) row.push_back(to_real(x, "centers"));
      k.centers.push_back(std::move(row));
    }
  });
  return k;
}

inline SynthSpec parse_synth(const Json& j) {
  allow_keys(j, "synthetic", {"preset", "n_features", "separability", "noise", "classes"});
  SynthSpec s;
  if (j.contains("preset")) {
    const auto name = to_text(j["preset"], "preset");
    if (name != "botiot-mini") throw ConfigError("unknown synthetic preset '" + name + "'");
    s = botiot_mini_spec();
  }
  if_key(j, "n_features", [&](const Json& v) { s.n_features = to_count(v, "n_features"); });
  if_key(j, "separability", [&](const Json& v) { s.separability = to_real(v, "separability"); });
  if_key(j, "noise", [&](const Json& v) { s.noise = to_real(v, "noise"); });
  if_key(j, "classes", [&](const Json& v) {
    if (!v.is_array()) throw ConfigError("'classes' must be a list");
    s.classes.clear();
    for (const auto& c : v) s.classes.push_back(parse_synth_class(c));
  });
  return s;
}

inline std::vector<std::size_t> to_counts(const Json& v, const std::string& what) {
  if (!v.is_array()) throw ConfigError("'" + what + "' must be a list");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(to_count(e, what));
  return out;
}

}  // namespace detail

/// Parses a JSON config (comments allowed). Relative CSV paths resolve
/// against `base_dir`.
inline ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir = {}) {
  using detail::Json;
  Json j;
  try {
    j = Json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    detail::allow_keys(j, "config", {"version", "seed", "dataset", "sampling", "split", "projector", "augmentation",
                                     "weights", "classifier", "training", "variants", "summary", "stage_order"});
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kConfigVersion)
      throw ConfigError("config needs \"version\": " + std::to_string(kConfigVersion));
    detail::if_key(j, "seed", [&](const Json& v) { c.seed = detail::to_count(v, "seed"); });

    if (!j.contains("dataset")) throw ConfigError("config needs a 'dataset' section");
    const Json& ds = j["dataset"];
    detail::allow_keys(ds, "dataset", {"csv", "synthetic", "seed", "schema"});
    detail::if_key(ds, "csv", [&](const Json& v) {
      std::filesystem::path p = detail::to_text(v, "csv");
      c.csv_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    });
    detail::if_key(ds, "synthetic", [&](const Json& v) { c.synth = detail::parse_synth(v); });
    detail::if_key(ds, "seed", [&](const Json& v) { c.data_seed = detail::to_count(v, "dataset.seed"); });
    detail::if_key(ds, "schema", [&](const Json& v) {
      detail::allow_keys(v, "schema", {"features", "label", "drop", "class_order"});
      detail::if_key(v, "features", [&](const Json& f) { c.schema.features = detail::to_strings(f, "features"); });
      detail::if_key(v, "label", [&](const Json& f) { c.schema.label = detail::to_text(f, "label"); });
      detail::if_key(v, "drop", [&](const Json& f) { c.schema.drop = detail::to_strings(f, "drop"); });
      detail::if_key(v, "class_order", [&](const Json& f) { c.schema.class_order = detail::to_strings(f, "class_order"); });
    });

    detail::if_key(j, "sampling", [&](const Json& v) {
      detail::allow_keys(v, "sampling", {"caps"});
      detail::if_key(v, "caps", [&](const Json& caps) {
        if (!caps.is_object()) throw ConfigError("'caps' must map class names to counts");
        for (const auto& [k, n] : caps.items()) c.caps[k] = detail::to_count(n, "caps." + k);
      });
    });
    detail::if_key(j, "split", [&](const Json& v) {
      detail::allow_keys(v, "split", {"train_fraction"});
      detail::if_key(v, "train_fraction", [&](const Json& f) { c.train_fraction = detail::to_real(f, "train_fraction"); });
    });
    detail::if_key(j, "projector", [&](const Json& v) {
      detail::allow_keys(v, "projector", {"latent_dim", "hidden", "epochs", "batch_size", "learning_rate"});
      auto& p = c.projector;
      detail::if_key(v, "latent_dim", [&](const Json& f) { p.latent_dim = detail::to_count(f, "latent_dim"); });
      detail::if_key(v, "hidden", [&](const Json& f) { p.hidden = detail::to_counts(f, "hidden"); });
      detail::if_key(v, "epochs", [&](const Json& f) { p.epochs = detail::to_count(f, "epochs"); });
      detail::if_key(v, "batch_size", [&](const Json& f) { p.batch_size = detail::to_count(f, "batch_size"); });
      detail::if_key(v, "learning_rate", [&](const Json& f) { p.learning_rate = detail::to_real(f, "learning_rate"); });
    });
    detail::if_key(j, "augmentation", [&](const Json& v) {
      detail::allow_keys(v, "augmentation", {"plans", "vae"});
      detail::if_key(v, "plans", [&](const Json& plans) {
        if (!plans.is_array()) throw ConfigError("'plans' must be a list");
        for (const auto& p : plans) {
          detail::allow_keys(p, "plans[]", {"class", "fraction", "count"});
          PlanSpec s;
          if (!p.contains("class")) throw ConfigError("augmentation plan needs a 'class'");
          s.class_name = detail::to_text(p["class"], "class");
          detail::if_key(p, "fraction", [&](const Json& f) { s.fraction = detail::to_real(f, "fraction"); });
          detail::if_key(p, "count", [&](const Json& f) { s.count = detail::to_count(f, "count"); });
          c.plans.push_back(std::move(s));
        }
      });
      detail::if_key(v, "vae", [&](const Json& f) {
        detail::allow_keys(f, "vae", {"z_dim", "conv1_channels", "conv2_channels", "kernel", "stride", "decoder_hidden",
                                      "epochs", "min_updates", "batch_size", "learning_rate", "min_rows"});
        auto& q = c.vae;
        detail::if_key(f, "z_dim", [&](const Json& x) { q.z_dim = detail::to_count(x, "z_dim"); });
        detail::if_key(f, "conv1_channels", [&](const Json& x) { q.conv1_channels = detail::to_count(x, "conv1_channels"); });
        detail::if_key(f, "conv2_channels", [&](const Json& x) { q.conv2_channels = detail::to_count(x, "conv2_channels"); });
        detail::if_key(f, "kernel", [&](const Json& x) { q.kernel = detail::to_count(x, "kernel"); });
        detail::if_key(f, "stride", [&](const Json& x) { q.stride = detail::to_count(x, "stride"); });
        detail::if_key(f, "decoder_hidden", [&](const Json& x) { q.decoder_hidden = detail::to_count(x, "decoder_hidden"); });
        detail::if_key(f, "epochs", [&](const Json& x) { q.epochs = detail::to_count(x, "epochs"); });
        detail::if_key(f, "min_updates", [&](const Json& x) { q.min_updates = detail::to_count(x, "min_updates"); });
        detail::if_key(f, "batch_size", [&](const Json& x) { q.batch_size = detail::to_count(x, "batch_size"); });
        detail::if_key(f, "learning_rate", [&](const Json& x) { q.learning_rate = detail::to_real(x, "learning_rate"); });
        detail::if_key(f, "min_rows", [&](const Json& x) { q.min_rows = detail::to_count(x, "min_rows"); });
      });
    });
    detail::if_key(j, "weights", [&](const Json& v) {
      detail::allow_keys(v, "weights", {"explicit", "search"});
      detail::if_key(v, "explicit", [&](const Json& m) {
        if (!m.is_object()) throw ConfigError("'explicit' must map class names to weights");
        for (const auto& [k, w] : m.items()) c.weights[k] = detail::to_real(w, "weights." + k);
      });
      detail::if_key(v, "search", [&](const Json& s) {
        detail::allow_keys(s, "search", {"initial", "decrease", "increase", "patience", "max_iterations",
                                         "overfit_tolerance", "min_improvement", "holdout_fraction", "epochs"});
        SearchSpec spec;
        auto& w = spec.search;
        detail::if_key(s, "initial", [&](const Json& x) { w.initial = detail::to_real(x, "initial"); });
        detail::if_key(s, "decrease", [&](const Json& x) { w.decrease = detail::to_real(x, "decrease"); });
        detail::if_key(s, "increase", [&](const Json& x) { w.increase = detail::to_real(x, "increase"); });
        detail::if_key(s, "patience", [&](const Json& x) { w.patience = detail::to_count(x, "patience"); });
        detail::if_key(s, "max_iterations", [&](const Json& x) { w.max_iterations = detail::to_count(x, "max_iterations"); });
        detail::if_key(s, "overfit_tolerance", [&](const Json& x) { w.overfit_tolerance = detail::to_real(x, "overfit_tolerance"); });
        detail::if_key(s, "min_improvement", [&](const Json& x) { w.min_improvement = detail::to_real(x, "min_improvement"); });
        detail::if_key(s, "holdout_fraction", [&](const Json& x) { spec.holdout_fraction = detail::to_real(x, "holdout_fraction"); });
        detail::if_key(s, "epochs", [&](const Json& x) { spec.epochs = detail::to_count(x, "epochs"); });
        c.search = spec;
      });
    });
    detail::if_key(j, "classifier", [&](const Json& v) {
      detail::allow_keys(v, "classifier", {"kind", "widths", "dropout"});
      auto& a = c.architecture;
      detail::if_key(v, "kind", [&](const Json& f) { a.kind = parse_arch_kind(detail::to_text(f, "kind")); });
      detail::if_key(v, "widths", [&](const Json& f) {
        const auto w = detail::to_counts(f, "widths");
        if (w.size() != 4) throw ConfigError("'widths' needs four hidden widths");
        std::copy(w.begin(), w.end(), a.widths.begin());
      });
      detail::if_key(v, "dropout", [&](const Json& f) {
        if (!f.is_array() || f.size() != 2) throw ConfigError("'dropout' needs two rates");
        a.dropout_after_3 = detail::to_real(f[0], "dropout");
        a.dropout_after_4 = detail::to_real(f[1], "dropout");
      });
    });
    detail::if_key(j, "training", [&](const Json& v) {
      detail::allow_keys(v, "training", {"epochs", "batch_size", "learning_rate", "shuffle"});
      auto& t = c.training;
      detail::if_key(v, "epochs", [&](const Json& f) { t.epochs = detail::to_count(f, "epochs"); });
      detail::if_key(v, "batch_size", [&](const Json& f) { t.batch_size = detail::to_count(f, "batch_size"); });
      detail::if_key(v, "learning_rate", [&](const Json& f) { t.learning_rate = detail::to_real(f, "learning_rate"); });
      detail::if_key(v, "shuffle", [&](const Json& f) {
        if (!f.is_boolean()) throw ConfigError("'shuffle' must be true or false");
        t.shuffle = f.get<bool>();
      });
    });
    detail::if_key(j, "variants", [&](const Json& v) {
      c.variants.clear();
      for (const auto& s : detail::to_strings(v, "variants")) c.variants.push_back(parse_variant(s));
    });
    detail::if_key(j, "summary", [&](const Json& v) {
      detail::allow_keys(v, "summary", {"minority", "majority"});
      detail::if_key(v, "minority", [&](const Json& f) { c.minority_classes = detail::to_strings(f, "minority"); });
      detail::if_key(v, "majority", [&](const Json& f) { c.majority_classes = detail::to_strings(f, "majority"); });
    });
    detail::if_key(j, "stage_order", [&](const Json& v) { c.stage_order = parse_stage_order(detail::to_text(v, "stage_order")); });
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.canonical = j.dump();
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str(), path.parent_path());
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.canonical)));
  return buf;
}

// ------------------------------------------------------------------ scaler persistence

inline void write_scaler(std::ostream& out, const Scaler& s, const std::vector<std::string>& names) {
  out << "scaler.width=" << s.width() << '\n';
  for (std::size_t j = 0; j < s.width(); ++j) {
    out << "scaler." << j << ".name=" << (j < names.size() ? names[j] : "f" + std::to_string(j)) << '\n';
    out << "scaler." << j << ".min=" << detail::format_double(s.min[j]) << '\n';
    out << "scaler." << j << ".max=" << detail::format_double(s.max[j]) << '\n';
  }
}

inline Scaler read_scaler(std::string_view text) {
  const auto kv = parse_key_values(text);
  const auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError("scaler file lacks '" + k + "'");
    return it->second;
  };
  const auto width = detail::parse_integer<std::size_t>(get("scaler.width"));
  if (!width) throw DataError("bad scaler width");
  Scaler s;
  for (std::size_t j = 0; j < *width; ++j) {
    const auto lo = detail::parse_double(get("scaler." + std::to_string(j) + ".min"));
    const auto hi = detail::parse_double(get("scaler." + std::to_string(j) + ".max"));
    if (!lo || !hi || *hi < *lo) throw DataError("bad scaler range for feature " + std::to_string(j));
    s.min.push_back(*lo);
    s.max.push_back(*hi);
  }
  return s;
}

// ------------------------------------------------------------------ running

struct VariantResult {
  Variant variant = Variant::e1;
  MetricsReport report;
  ClassWeights weights;
  std::uint64_t seed = 0;
  std::size_t train_rows = 0;
  std::size_t synthetic_rows = 0;
  double minority_f1 = 0.0;
  double majority_f1 = 0.0;
  std::map<std::string, std::string> checkpoints;
  std::optional<SearchResult> search;
  // Row hashes of the test rows this variant was scored on, and of the
  // synthetic rows it trained on.
  std::vector<std::uint64_t> test_hashes;
  std::vector<std::uint64_t> synthetic_hashes;
};

struct HygieneCheck {
  bool identical_test_rows = true;
  bool no_synthetic_in_test = true;
  std::size_t test_rows = 0;
  std::uint64_t test_digest = 0;

  bool passed() const { return identical_test_rows && no_synthetic_in_test; }
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::string config_hash;
  StageOrder stage_order = StageOrder::augment_then_encode;
  std::vector<std::string> class_names;
  std::vector<std::string> minority;
  std::vector<std::string> majority;
  std::map<std::string, std::string> shared_checkpoints;
  std::vector<VariantResult> variants;
  HygieneCheck hygiene;

  bool nonstandard() const { return stage_order != StageOrder::augment_then_encode; }

  const VariantResult& at(Variant v) const {
    for (const auto& r : variants)
      if (r.variant == v) return r;
    throw ConfigError("variant " + to_string(v) + " was not run");
  }
};

struct RunOptions {
  // Checkpoints go here when set.
  std::optional<std::filesystem::path> out_dir;
  // Throw StateError when the hygiene check fails.
  bool self_check = true;
  std::ostream* log = nullptr;
};

namespace detail {

inline std::uint64_t digest(std::vector<std::uint64_t> hashes) {
  std::sort(hashes.begin(), hashes.end());
  return fnv1a(hashes.data(), hashes.size() * sizeof(std::uint64_t));
}

inline double mean_f1_of(const MetricsReport& r, const std::vector<std::string>& names) {
  if (names.empty()) return 0.0;
  double s = 0.0;
  for (const auto& n : names) s += r.f1[r.index_of(n)];
  return s / static_cast<double>(names.size());
}

inline Dataset rows_of_class(const Dataset& ds, int label) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.rows(); ++i)
    if (ds.labels[i] == label) idx.push_back(i);
  return ds.subset(idx);
}

inline void note(const RunOptions& o, const std::string& msg) {
  if (o.log) *o.log << msg << '\n' << std::flush;
}

inline std::string save_if(const RunOptions& o, const std::string& name, const Checkpoint& ck) {
  if (!o.out_dir) return "-";
  std::filesystem::create_directories(*o.out_dir);
  save_checkpoint(*o.out_dir / name, ck);
  return name;
}

}  // namespace detail

/// Loads, cleans, samples and splits the configured data. Same seed, same split.
inline std::pair<Dataset, Dataset> prepare_splits(const ExperimentConfig& c) {
  Dataset raw;
  if (c.synth) {
    SynthSpec s = *c.synth;
    s.seed = c.data_seed.value_or(c.seed);
    raw = generate_synthetic_benchmark(s);
  } else {
    raw = load_csv(*c.csv_path, c.schema).dataset;
  }
  const Dataset cleaned = clean(raw, c.schema);
  c.validate_against(cleaned);
  const Dataset sampled = sample_per_class(cleaned, c.caps, derive_seed(c.seed, "sample"));
  return stratified_split(sampled, c.train_fraction, derive_seed(c.seed, "split"));
}

/// E1: AE-encoded real rows, unit weights. E2: the training split grown by
/// per-class VAE samples (test split untouched). E3: E2 plus class weights,
/// explicit or searched on a holdout carved from the real training rows.
/// Every variant shares one scaler, one autoencoder and one classifier
/// initialisation, and is scored on the same test split.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
  config.validate();
  const std::uint64_t seed = config.seed;

  ExperimentResult result;
  result.seed = seed;
  result.config_hash = config_hash(config);
  result.stage_order = config.stage_order;

  auto [train_raw, test_raw] = prepare_splits(config);
  const std::vector<std::string>& names = train_raw.class_names;
  result.class_names = names;
  result.minority = config.minority();
  if (!config.majority_classes.empty()) {
    result.majority = config.majority_classes;
  } else {
    for (const auto& n : names)
      if (std::find(result.minority.begin(), result.minority.end(), n) == result.minority.end())
        result.majority.push_back(n);
  }
  detail::note(options, "split: " + std::to_string(train_raw.rows()) + " train / " + std::to_string(test_raw.rows()) + " test rows");

  // Plans are checked against the training counts before anything is fitted.
  std::vector<AugmentationPlan> plans;
  if (config.needs_augmentation()) {
    for (const auto& p : config.plans) {
      const std::size_t original = train_raw.count_of(p.class_name);
      plans.push_back({p.class_name, original, p.resolve(original)});
    }
  }

  const Scaler scaler = fit_scaler(train_raw.features);
  const Dataset train = scaler.apply(train_raw);
  const Dataset test = scaler.apply(test_raw);
  const std::vector<std::uint64_t> test_hashes = row_hashes(test);

  ProjectorConfig pc = config.projector;
  pc.seed = derive_seed(seed, "projector");
  AutoencoderModel ae = train_autoencoder(train.features, pc);
  result.shared_checkpoints["autoencoder"] = detail::save_if(options, "autoencoder.skwn", autoencoder_checkpoint(ae));
  detail::note(options, "autoencoder: reconstruction mse " + detail::format_double(reconstruction_error(ae, train.features)));
  const Dataset train_z = encode_dataset(ae, train);
  const Dataset test_z = encode_dataset(ae, test);

  ArchitectureSpec arch = config.architecture;
  arch.input_dim = ae.latent_dim;
  arch.n_classes = names.size();
  arch.validate();
  const std::uint64_t init_seed = derive_seed(seed, "classifier/init");
  TrainConfig tc = config.training;
  tc.seed = derive_seed(seed, "classifier/train");

  const auto fit = [&](const Dataset& tr, const ClassWeights& w, const TrainConfig& t) {
    ClassifierModel m = build_classifier(arch, init_seed);
    train_classifier(m, tr, w, t);
    return m;
  };
  const auto finish = [&](VariantResult& vr, ClassifierModel& m, const Dataset& tr) {
    vr.seed = init_seed;
    vr.train_rows = tr.rows();
    vr.report = evaluate_classifier(m, test_z);
    vr.test_hashes = row_hashes(test);
    vr.minority_f1 = detail::mean_f1_of(vr.report, result.minority);
    vr.majority_f1 = detail::mean_f1_of(vr.report, result.majority);
    vr.checkpoints["classifier"] = detail::save_if(options, to_string(vr.variant) + ".classifier.skwn", classifier_checkpoint(m));
    detail::note(options, to_string(vr.variant) + ": accuracy " + detail::format_fixed(vr.report.accuracy, 4) +
                              ", minority F1 " + detail::format_fixed(vr.minority_f1, 4) + ", majority F1 " +
                              detail::format_fixed(vr.majority_f1, 4));
  };

  const ClassWeights unit = ClassWeights::unit(names.size());
  if (config.wants(Variant::e1)) {
    VariantResult vr;
    vr.variant = Variant::e1;
    vr.weights = unit;
    ClassifierModel m = fit(train_z, unit, tc);
    finish(vr, m, train_z);
    result.variants.push_back(std::move(vr));
  }

  if (config.needs_augmentation()) {
    // Per-class synthesis on training rows only.
    const bool latent = config.stage_order == StageOrder::encode_then_augment;
    const Dataset& base = latent ? train_z : train;
    // VAE decoders emit (0, 1); latent rows are rescaled into that range first.
    const Scaler latent_scaler = fit_scaler(train_z.features);
    const Dataset vae_input = latent ? latent_scaler.apply(train_z) : train;

    std::map<std::string, VaeModel> vaes;
    for (const auto& p : plans) {
      VaeConfig vc = config.vae;
      vc.seed = derive_seed(seed, "vae/" + p.class_name);
      const Dataset rows = detail::rows_of_class(vae_input, static_cast<int>(base.class_index(p.class_name)));
      vaes.emplace(p.class_name, train_vae(rows.features, vc));
      result.shared_checkpoints["vae." + p.class_name] =
          detail::save_if(options, "vae." + p.class_name + ".skwn", vae_checkpoint(vaes.at(p.class_name)));
      detail::note(options, "vae " + p.class_name + ": " + std::to_string(p.original_count) + " rows, generating " +
                                std::to_string(p.requested));
    }
    Dataset grown = augment_dataset(vae_input, plans, vaes, derive_seed(seed, "augment"));
    if (latent) grown = grown.with_features(latent_scaler.invert(grown.features), grown.feature_names);
    const std::size_t n_real = base.rows();
    std::vector<std::size_t> synth_idx(grown.rows() - n_real);
    std::iota(synth_idx.begin(), synth_idx.end(), n_real);
    const Dataset synthetic = grown.subset(synth_idx);
    // Synthetic rows live in the space they were generated in; compare test rows there.
    const std::vector<std::uint64_t> synth_hashes = row_hashes(synthetic);
    const Dataset train_aug_z = latent ? grown : encode_dataset(ae, grown);

    if (config.wants(Variant::e2)) {
      VariantResult vr;
      vr.variant = Variant::e2;
      vr.weights = unit;
      vr.synthetic_rows = synthetic.rows();
      vr.synthetic_hashes = synth_hashes;
      ClassifierModel m = fit(train_aug_z, unit, tc);
      finish(vr, m, train_aug_z);
      result.variants.push_back(std::move(vr));
    }

    if (config.wants(Variant::e3)) {
      VariantResult vr;
      vr.variant = Variant::e3;
      vr.synthetic_rows = synthetic.rows();
      vr.synthetic_hashes = synth_hashes;
      if (config.search) {
        // Candidates train on part of the real rows plus a proportional
        // share of the synthetic ones and are scored on the rest.
        const auto [inner, holdout] =
            stratified_split(train_z, 1.0 - config.search->holdout_fraction, derive_seed(seed, "search/split"));
        Dataset search_train = inner;
        for (const auto& p : plans) {
          const int label = static_cast<int>(train_z.class_index(p.class_name));
          const Dataset extra = detail::rows_of_class(train_aug_z.subset(synth_idx), label);
          const std::size_t keep_n = std::min<std::size_t>(
              detail::round_half_up(static_cast<double>(p.requested) * static_cast<double>(inner.count_of(p.class_name)) /
                                    static_cast<double>(p.original_count)),
              inner.count_of(p.class_name) - 1);
          std::vector<std::size_t> keep(keep_n);
          std::iota(keep.begin(), keep.end(), std::size_t{0});
          if (keep_n > 0) search_train = concat(search_train, extra.subset(keep));
        }
        TrainConfig st = tc;
        if (config.search->epochs > 0) st.epochs = config.search->epochs;
        std::size_t iteration = 0;
        SearchResult sr = search_class_weights(
            search_train, holdout, result.minority, config.search->search,
            [&](const Dataset& tr, const Dataset& va, const ClassWeights& w) {
              ClassifierModel m = fit(tr, w, st);
              MetricsReport r = evaluate_classifier(m, va);
              detail::note(options, "search " + std::to_string(iteration++) + ": objective " +
                                        detail::format_fixed(objective_score(r, result.minority), 4));
              return r;
            });
        vr.weights = sr.weights;
        vr.search = std::move(sr);
      } else {
        vr.weights = ClassWeights::from_map(names, config.weights);
      }
      ClassifierModel m = fit(train_aug_z, vr.weights, tc);
      finish(vr, m, train_aug_z);
      result.variants.push_back(std::move(vr));
    }

    // Synthetic rows must not collide with test rows in their own space.
    const std::vector<std::uint64_t> test_space = latent ? row_hashes(test_z) : test_hashes;
    const std::set<std::uint64_t> test_set(test_space.begin(), test_space.end());
    for (const auto& vr : result.variants)
      for (std::uint64_t h : vr.synthetic_hashes)
        if (test_set.contains(h)) result.hygiene.no_synthetic_in_test = false;
  }

  result.hygiene.test_rows = test.rows();
  result.hygiene.test_digest = detail::digest(test_hashes);
  for (const auto& vr : result.variants)
    if (detail::digest(vr.test_hashes) != result.hygiene.test_digest || vr.test_hashes.size() != test.rows())
      result.hygiene.identical_test_rows = false;
  if (options.self_check && !result.hygiene.passed()) throw StateError("test split hygiene check failed");
  return result;
}

// ------------------------------------------------------------------ serialisation

inline void write_experiment_result(std::ostream& out, const ExperimentResult& r) {
  using detail::format_double;
  out << "result.version=" << kResultVersion << '\n';
  out << "result.seed=" << r.seed << '\n';
  out << "result.config_hash=" << r.config_hash << '\n';
  out << "result.stage_order=" << to_string(r.stage_order) << '\n';
  out << "result.nonstandard=" << (r.nonstandard() ? 1 : 0) << '\n';
  const auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
  };
  std::vector<std::string> vnames;
  for (const auto& v : r.variants) vnames.push_back(to_string(v.variant));
  out << "result.variants=" << join(vnames) << '\n';
  out << "result.minority=" << join(r.minority) << '\n';
  out << "result.majority=" << join(r.majority) << '\n';
  for (const auto& [k, v] : r.shared_checkpoints) out << "checkpoint." << k << '=' << v << '\n';
  for (const auto& v : r.variants) {
    const std::string p = to_string(v.variant) + ".";
    out << p << "seed=" << v.seed << '\n';
    out << p << "train_rows=" << v.train_rows << '\n';
    out << p << "synthetic_rows=" << v.synthetic_rows << '\n';
    for (std::size_t c = 0; c < r.class_names.size(); ++c)
      out << p << "weight." << r.class_names[c] << '=' << format_double(v.weights[c]) << '\n';
    for (const auto& [k, path] : v.checkpoints) out << p << "checkpoint." << k << '=' << path << '\n';
    out << p << "minority_f1=" << format_double(v.minority_f1) << '\n';
    out << p << "majority_f1=" << format_double(v.majority_f1) << '\n';
    write_machine_report(out, v.report, p);
    if (v.search) {
      std::ostringstream trace;
      write_search_trace(trace, *v.search, r.class_names);
      std::istringstream lines(trace.str());
      for (std::string line; std::getline(lines, line);) out << p << line << '\n';
    }
  }
  out << "hygiene.test_rows=" << r.hygiene.test_rows << '\n';
  out << "hygiene.test_digest=" << r.hygiene.test_digest << '\n';
  out << "hygiene.identical_test_rows=" << (r.hygiene.identical_test_rows ? 1 : 0) << '\n';
  out << "hygiene.no_synthetic_in_test=" << (r.hygiene.no_synthetic_in_test ? 1 : 0) << '\n';
}

inline std::string serialize_experiment_result(const ExperimentResult& r) {
  std::ostringstream out;
  write_experiment_result(out, r);
  return out.str();
}

/// Side-by-side per-class F1 plus the summary rows.
inline void write_experiment_table(std::ostream& out, const ExperimentResult& r) {
  if (r.nonstandard()) out << "NOTE: non-standard stage order (" << to_string(r.stage_order) << ")\n";
  out << "class          ";
  for (const auto& v : r.variants) out << "  " << to_string(v.variant) << " F1 ";
  out << '\n';
  for (std::size_t c = 0; c < r.class_names.size(); ++c) {
    std::string name = r.class_names[c];
    name.resize(std::max<std::size_t>(name.size(), 15), ' ');
    out << name;
    for (const auto& v : r.variants) out << "  " << detail::format_fixed(v.report.f1[c], 4) << "";
    out << '\n';
  }
  const auto row = [&](const std::string& label, auto get) {
    std::string name = label;
    name.resize(std::max<std::size_t>(name.size(), 15), ' ');
    out << name;
    for (const auto& v : r.variants) out << "  " << detail::format_fixed(get(v), 4);
    out << '\n';
  };
  row("accuracy", [](const VariantResult& v) { return v.report.accuracy; });
  row("minority F1", [](const VariantResult& v) { return v.minority_f1; });
  row("majority F1", [](const VariantResult& v) { return v.majority_f1; });
  out << "hygiene " << (r.hygiene.passed() ? "ok" : "FAILED") << " (" << r.hygiene.test_rows << " test rows)\n";
}

}  // namespace skewnet
