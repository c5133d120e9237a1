#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skewnet/experiment.hpp"

namespace fs = std::filesystem;
using namespace skewnet;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string format = "table";
};

struct Context {
  ExperimentConfig config;
  bool has_config = false;
  std::uint64_t seed = 0;
  fs::path out;
  ReportFormat format = ReportFormat::table;
};

Context make_context(const Globals& g) {
  Context ctx;
  if (!g.config.empty()) {
    ctx.config = load_experiment_config(g.config);
    ctx.has_config = true;
  }
  ctx.seed = g.seed.value_or(ctx.config.seed);
  ctx.config.seed = ctx.seed;
  ctx.out = g.out;
  ctx.format = parse_report_format(g.format);
  fs::create_directories(ctx.out);
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Pipeline CSVs: any numeric columns plus a "label" column.
Dataset read_pipeline_csv(const fs::path& path, std::vector<std::string> class_order = {}) {
  DatasetSchema schema;
  schema.class_order = std::move(class_order);
  auto loaded = load_csv(path, schema);
  if (!loaded.rejects.empty()) {
    throw DataError(path.string() + ": " + std::to_string(loaded.rejects.size()) + " malformed rows (line " +
                    std::to_string(loaded.rejects.front().line) + ": " + loaded.rejects.front().reason + ")");
  }
  return std::move(loaded.dataset);
}

// "name=value" pairs from repeated flags.
std::map<std::string, std::string> pairs(const std::vector<std::string>& items, const std::string& flag) {
  std::map<std::string, std::string> out;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw ConfigError(flag + " expects CLASS=VALUE, got '" + s + "'");
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

double real_value(const std::string& s, const std::string& what) {
  const auto v = detail::parse_double(s);
  if (!v) throw ConfigError("bad number '" + s + "' for " + what);
  return *v;
}

void print_counts(const Context& ctx, const std::string& prefix, const Dataset& ds) {
  const auto counts = ds.class_counts();
  if (ctx.format == ReportFormat::machine) {
    std::cout << prefix << ".rows=" << ds.rows() << '\n';
    for (std::size_t c = 0; c < counts.size(); ++c)
      std::cout << prefix << ".count." << ds.class_names[c] << '=' << counts[c] << '\n';
  } else {
    std::cout << prefix << ": " << ds.rows() << " rows";
    for (std::size_t c = 0; c < counts.size(); ++c) std::cout << "  " << ds.class_names[c] << '=' << counts[c];
    std::cout << '\n';
  }
}

void print_value(const Context& ctx, const std::string& key, const std::string& value) {
  if (ctx.format == ReportFormat::machine)
    std::cout << key << '=' << value << '\n';
  else
    std::cout << key << ": " << value << '\n';
}

Dataset config_source(const Context& ctx) {
  const auto& c = ctx.config;
  if (c.csv_path) {
    const auto loaded = load_csv(*c.csv_path, c.schema);
    return loaded.dataset;
  }
  SynthSpec s = c.synth ? *c.synth : botiot_mini_spec();
  s.seed = c.data_seed.value_or(ctx.seed);
  return generate_synthetic_benchmark(s);
}

// ------------------------------------------------------------------ subcommands

void cmd_synth_data(const Context& ctx) {
  if (ctx.has_config && ctx.config.csv_path) throw ConfigError("synth-data needs a synthetic dataset config");
  const Dataset ds = config_source(ctx);
  save_csv(ctx.out / "dataset.csv", ds);
  print_counts(ctx, "dataset", ds);
}

void cmd_preprocess(const Context& ctx, const std::string& input) {
  const auto& c = ctx.config;
  Dataset raw;
  std::vector<RejectedRow> rejects;
  if (!input.empty()) {
    auto loaded = load_csv(input, c.schema);
    raw = std::move(loaded.dataset);
    rejects = std::move(loaded.rejects);
  } else if (c.csv_path) {
    auto loaded = load_csv(*c.csv_path, c.schema);
    raw = std::move(loaded.dataset);
    rejects = std::move(loaded.rejects);
  } else {
    raw = config_source(ctx);
  }
  std::ostringstream log;
  write_reject_log(log, rejects);
  write_text(ctx.out / "rejects.log", log.str());

  const Dataset cleaned = clean(raw, c.schema);
  for (const auto& [name, cap] : c.caps) cleaned.class_index(name);
  const Dataset sampled = sample_per_class(cleaned, c.caps, derive_seed(ctx.seed, "sample"));
  const auto [train, test] = stratified_split(sampled, c.train_fraction, derive_seed(ctx.seed, "split"));
  const Scaler scaler = fit_scaler(train.features);
  save_csv(ctx.out / "train.csv", scaler.apply(train));
  save_csv(ctx.out / "test.csv", scaler.apply(test));
  std::ostringstream s;
  write_scaler(s, scaler, train.feature_names);
  write_text(ctx.out / "scaler.txt", s.str());

  print_value(ctx, "rejected", std::to_string(rejects.size()));
  print_value(ctx, "removed_nonfinite", std::to_string(raw.rows() - cleaned.rows()));
  print_counts(ctx, "train", train);
  print_counts(ctx, "test", test);
}

void cmd_train_ae(const Context& ctx, const std::string& input) {
  const Dataset train = read_pipeline_csv(input.empty() ? ctx.out / "train.csv" : fs::path(input));
  ProjectorConfig pc = ctx.config.projector;
  pc.seed = derive_seed(ctx.seed, "projector");
  std::vector<double> history;
  AutoencoderModel ae = train_autoencoder(train.features, pc, &history);
  save_checkpoint(ctx.out / "autoencoder.skwn", autoencoder_checkpoint(ae));
  print_value(ctx, "latent_dim", std::to_string(ae.latent_dim));
  print_value(ctx, "reconstruction_mse", detail::format_double(reconstruction_error(ae, train.features)));
}

void cmd_encode(const Context& ctx, const std::string& model, const std::vector<std::string>& inputs) {
  const AutoencoderModel ae =
      autoencoder_from_checkpoint(load_checkpoint(model.empty() ? ctx.out / "autoencoder.skwn" : fs::path(model)));
  for (const auto& in : inputs) {
    const Dataset ds = read_pipeline_csv(in);
    const std::string name = fs::path(in).stem().string() + ".encoded.csv";
    save_csv(ctx.out / name, encode_dataset(ae, ds));
    print_value(ctx, "encoded." + fs::path(in).stem().string(), name);
  }
}

void cmd_train_vae(const Context& ctx, const std::string& input, const std::vector<std::string>& classes) {
  const Dataset train = read_pipeline_csv(input.empty() ? ctx.out / "train.csv" : fs::path(input));
  std::vector<std::string> targets = classes;
  if (targets.empty())
    for (const auto& p : ctx.config.plans) targets.push_back(p.class_name);
  if (targets.empty()) throw ConfigError("train-vae needs --class or augmentation plans in the config");
  for (const auto& cls : targets) {
    const int label = static_cast<int>(train.class_index(cls));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < train.rows(); ++i)
      if (train.labels[i] == label) idx.push_back(i);
    VaeConfig vc = ctx.config.vae;
    vc.seed = derive_seed(ctx.seed, "vae/" + cls);
    std::vector<double> history;
    VaeModel m = train_vae(train.subset(idx).features, vc, &history);
    const std::string name = "vae." + cls + ".skwn";
    save_checkpoint(ctx.out / name, vae_checkpoint(m));
    print_value(ctx, "vae." + cls + ".rows", std::to_string(idx.size()));
    print_value(ctx, "vae." + cls + ".final_loss", detail::format_double(history.empty() ? 0.0 : history.back()));
  }
}

void cmd_augment(const Context& ctx, const std::string& input, const std::vector<std::string>& plan_flags,
                 const std::vector<std::string>& vae_flags) {
  const Dataset train = read_pipeline_csv(input.empty() ? ctx.out / "train.csv" : fs::path(input));
  std::vector<PlanSpec> specs;
  // integer values are counts, anything else a fraction
  for (const auto& [cls, value] : pairs(plan_flags, "--plan")) {
    PlanSpec p;
    p.class_name = cls;
    if (const auto n = detail::parse_integer<std::size_t>(value))
      p.count = *n;
    else
      p.fraction = real_value(value, "--plan " + cls);
    specs.push_back(std::move(p));
  }
  if (specs.empty()) specs = ctx.config.plans;
  if (specs.empty()) throw ConfigError("augment needs --plan or augmentation plans in the config");

  const auto vae_paths = pairs(vae_flags, "--vae");
  std::vector<AugmentationPlan> plans;
  std::map<std::string, VaeModel> vaes;
  for (const auto& p : specs) {
    const std::size_t original = train.count_of(p.class_name);
    plans.push_back({p.class_name, original, p.resolve(original)});
  }
  for (const auto& p : specs) {
    const auto it = vae_paths.find(p.class_name);
    const fs::path path = it != vae_paths.end() ? fs::path(it->second) : ctx.out / ("vae." + p.class_name + ".skwn");
    vaes.emplace(p.class_name, vae_from_checkpoint(load_checkpoint(path)));
  }
  const Dataset grown = augment_dataset(train, plans, vaes, derive_seed(ctx.seed, "augment"));
  save_csv(ctx.out / "augmented.csv", grown);
  for (const auto& p : plans) print_value(ctx, "synthetic." + p.class_name, std::to_string(p.requested));
  print_counts(ctx, "augmented", grown);
}

ArchitectureSpec architecture_for(const Context& ctx, const Dataset& train) {
  ArchitectureSpec arch = ctx.config.architecture;
  arch.input_dim = train.width();
  arch.n_classes = train.class_names.size();
  return arch;
}

TrainConfig training_for(const Context& ctx) {
  TrainConfig tc = ctx.config.training;
  tc.seed = derive_seed(ctx.seed, "classifier/train");
  return tc;
}

void cmd_search_weights(const Context& ctx, const std::string& train_path, const std::string& validation_path,
                        std::vector<std::string> minority) {
  const Dataset all = read_pipeline_csv(train_path);
  SearchSpec spec = ctx.config.search.value_or(SearchSpec{});
  Dataset train, validation;
  if (validation_path.empty()) {
    std::tie(train, validation) = stratified_split(all, 1.0 - spec.holdout_fraction, derive_seed(ctx.seed, "search/split"));
  } else {
    train = all;
    validation = read_pipeline_csv(validation_path, all.class_names);
  }
  if (minority.empty()) minority = ctx.config.minority();
  const ArchitectureSpec arch = architecture_for(ctx, train);
  TrainConfig tc = training_for(ctx);
  if (spec.epochs > 0) tc.epochs = spec.epochs;
  const std::uint64_t init = derive_seed(ctx.seed, "classifier/init");
  const SearchResult r = search_class_weights(train, validation, minority, spec.search,
                                              [&](const Dataset& tr, const Dataset& va, const ClassWeights& w) {
                                                ClassifierModel m = build_classifier(arch, init);
                                                train_classifier(m, tr, w, tc);
                                                return evaluate_classifier(m, va);
                                              });
  std::ostringstream trace;
  write_search_trace(trace, r, train.class_names);
  write_text(ctx.out / "weights.txt", trace.str());
  if (ctx.format == ReportFormat::machine) {
    std::cout << trace.str();
  } else {
    std::cout << "iterations: " << r.trace.size() - 1 << (r.truncated ? " (budget exhausted)" : "") << '\n';
    std::cout << "baseline objective: " << detail::format_fixed(r.baseline_objective, 4) << '\n';
    std::cout << "best objective: " << detail::format_fixed(r.objective, 4) << '\n';
    for (std::size_t c = 0; c < train.class_names.size(); ++c)
      std::cout << "weight " << train.class_names[c] << ": " << detail::format_double(r.weights[c]) << '\n';
  }
}

ClassWeights weights_for(const Dataset& train, const std::vector<std::string>& flags, const std::string& file) {
  std::map<std::string, double> by_name;
  if (!file.empty()) {
    const auto kv = parse_key_values(read_text(file));
    for (const auto& name : train.class_names) {
      auto it = kv.find("search.best.weight." + name);
      if (it == kv.end()) it = kv.find("weight." + name);
      if (it != kv.end()) by_name[name] = real_value(it->second, "weight of " + name);
    }
  }
  for (const auto& [cls, value] : pairs(flags, "--weight")) by_name[cls] = real_value(value, "--weight " + cls);
  return ClassWeights::from_map(train.class_names, by_name);
}

void cmd_train(const Context& ctx, const std::string& input, const std::vector<std::string>& weight_flags,
               const std::string& weights_file, const std::string& name) {
  const Dataset train = read_pipeline_csv(input);
  const ClassWeights w = weights_for(train, weight_flags, weights_file);
  ClassifierModel m = build_classifier(architecture_for(ctx, train), derive_seed(ctx.seed, "classifier/init"));
  const TrainHistory h = train_classifier(m, train, w, training_for(ctx));
  save_checkpoint(ctx.out / (name + ".skwn"), classifier_checkpoint(m));
  print_value(ctx, "final_loss", detail::format_double(h.train_loss.back()));
  for (std::size_t c = 0; c < train.class_names.size(); ++c)
    print_value(ctx, "weight." + train.class_names[c], detail::format_double(w[c]));
}

void cmd_evaluate(const Context& ctx, const std::string& model_path, const std::string& input) {
  const fs::path path = model_path.empty() ? ctx.out / "classifier.skwn" : fs::path(model_path);
  const ClassifierModel m = classifier_from_checkpoint(load_checkpoint(path));
  const Dataset test = read_pipeline_csv(input, m.class_names);
  const MetricsReport r = evaluate_classifier(m, test);
  std::ostringstream machine;
  write_machine_report(machine, r);
  write_text(ctx.out / (path.stem().string() + ".report.txt"), machine.str());
  std::cout << emit_report(r, ctx.format);
}

void cmd_experiment(const Context& ctx) {
  if (!ctx.has_config) throw ConfigError("experiment needs --config");
  const ExperimentResult r = run_experiment(ctx.config, {ctx.out, true, &std::cerr});
  const std::string text = serialize_experiment_result(r);
  write_text(ctx.out / "result.txt", text);
  if (ctx.format == ReportFormat::machine)
    std::cout << text;
  else
    write_experiment_table(std::cout, r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Imbalanced flow classification pipeline: autoencoder projection, VAE augmentation, class weighting"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON, comments allowed)");
  app.add_option("--seed", g.seed, "run seed (overrides the config)");
  app.add_option("--out", g.out, "artifact directory")->capture_default_str();
  app.add_option("--format", g.format, "stdout report format")
      ->check(CLI::IsMember({"table", "machine"}))
      ->capture_default_str();

  std::string input, model, validation, weights_file, name = "classifier";
  std::vector<std::string> inputs, classes, plans, vaes, weights, minority;

  auto* synth = app.add_subcommand("synth-data", "write the configured synthetic benchmark to dataset.csv");
  auto* prep = app.add_subcommand("preprocess", "clean, sample, split and scale into train.csv / test.csv");
  prep->add_option("--input", input, "CSV to read instead of the config's dataset");
  auto* ae = app.add_subcommand("train-ae", "train the autoencoder on scaled training rows");
  ae->add_option("--input", input, "training CSV (default OUT/train.csv)");
  auto* enc = app.add_subcommand("encode", "project CSVs through the autoencoder");
  enc->add_option("--model", model, "autoencoder checkpoint (default OUT/autoencoder.skwn)");
  enc->add_option("--input", inputs, "CSV files to encode")->required();
  auto* vae = app.add_subcommand("train-vae", "train per-class VAEs on scaled training rows");
  vae->add_option("--input", input, "training CSV (default OUT/train.csv)");
  vae->add_option("--class", classes, "class to model (default: planned classes)");
  auto* aug = app.add_subcommand("augment", "append VAE samples to the training rows");
  aug->add_option("--input", input, "training CSV (default OUT/train.csv)");
  aug->add_option("--plan", plans, "CLASS=COUNT or CLASS=FRACTION (default: config plans)");
  aug->add_option("--vae", vaes, "CLASS=CHECKPOINT (default OUT/vae.CLASS.skwn)");
  auto* search = app.add_subcommand("search-weights", "search class weights on a validation split");
  search->add_option("--input", input, "encoded training CSV")->required();
  search->add_option("--validation", validation, "encoded validation CSV (default: holdout of --input)");
  search->add_option("--minority", minority, "classes to search (default: planned classes)");
  auto* train = app.add_subcommand("train", "train a classifier");
  train->add_option("--input", input, "encoded training CSV")->required();
  train->add_option("--weight", weights, "CLASS=WEIGHT (unlisted classes get 1)");
  train->add_option("--weights-file", weights_file, "weights.txt from search-weights");
  train->add_option("--name", name, "checkpoint stem")->capture_default_str();
  auto* eval = app.add_subcommand("evaluate", "score a classifier on a CSV");
  eval->add_option("--model", model, "classifier checkpoint (default OUT/classifier.skwn)");
  eval->add_option("--input", input, "encoded test CSV")->required();
  auto* exp = app.add_subcommand("experiment", "run E1/E2/E3 end to end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const Context ctx = make_context(g);
    if (*synth) cmd_synth_data(ctx);
    if (*prep) cmd_preprocess(ctx, input);
    if (*ae) cmd_train_ae(ctx, input);
    if (*enc) cmd_encode(ctx, model, inputs);
    if (*vae) cmd_train_vae(ctx, input, classes);
    if (*aug) cmd_augment(ctx, input, plans, vaes);
    if (*search) cmd_search_weights(ctx, input, validation, minority);
    if (*train) cmd_train(ctx, input, weights, weights_file, name);
    if (*eval) cmd_evaluate(ctx, model, input);
    if (*exp) cmd_experiment(ctx);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
