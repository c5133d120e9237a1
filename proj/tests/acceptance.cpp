// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "skewnet/experiment.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace skewnet;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradEpsilon = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kKlExact = 1e-12;
constexpr double kMomentTolerance = 0.02;
constexpr double kMinorityGain = 0.10;
constexpr double kMajorityLoss = 0.02;
constexpr double kDeskSeconds = 15.0 * 60.0;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << what << " [" << detail << "]\n" << std::flush;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int digits = 4) { return skewnet::detail::format_fixed(v, digits); }

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ------------------------------------------------------------------ 1

double model_grad_error(ArchKind kind, std::uint64_t seed) {
  ArchitectureSpec s;
  s.kind = kind;
  s.input_dim = 4;
  s.n_classes = 3;
  s.widths = {8, 6, 5, 4};
  ClassifierModel m = build_classifier(s, seed);
  Rng data(1000 + seed);
  // biases off zero so no sample sits exactly on a relu kink
  for (auto& [name, p] : m.net.named_parameters())
    if (name.ends_with(".b")) p->value = test::random_tensor(p->value.shape(), data, -0.1, 0.1);
  const Tensor x = test::random_tensor({5, 4}, data, 0.0, 1.0);
  std::vector<int> y(5);
  for (auto& v : y) v = static_cast<int>(data.index(3));
  const ClassWeights w({data.uniform(1, 5), data.uniform(1, 5), data.uniform(1, 5)});
  auto loss = [&] {
    Rng r(seed);
    return nn::weighted_cross_entropy(m.net.forward(x, nn::Mode::train, r), y, &w);
  };
  auto fill = [&] {
    Rng r(seed);
    const Tensor p = m.net.forward(x, nn::Mode::train, r);
    m.net.backward(nn::weighted_cross_entropy_grad(p, y, &w));
  };
  return nn::gradient_check(m.net.parameters(), loss, fill, kGradEpsilon).global_max;
}

void criterion_gradients() {
  using namespace nn;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  const auto track = [&](const std::string& name, double e) {
    if (e > worst || std::isnan(e)) {
      worst = std::isnan(e) ? INFINITY : e;
      worst_name = name;
    }
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto check = [&](const std::string& name, Layer& layer, Shape in, Mode mode = Mode::train) {
      track(name, test::layer_grad_check(layer, test::random_tensor(std::move(in), rng), seed, mode, true, kGradEpsilon)
                      .global_max);
    };
    for (auto act : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::tanh, Activation::softmax}) {
      Dense d(4, 3, act, rng);
      check("dense/" + std::string(to_string(act)), d, {3, 4});
      ActivationLayer a(act);
      check("activation/" + std::string(to_string(act)), a, {3, 5});
    }
    Conv1D same(2, 3, 3, 2, Padding::same, rng);
    check("conv1d/same", same, {2, 2, 7});
    Conv1D valid(1, 2, 2, 1, Padding::valid, rng);
    check("conv1d/valid", valid, {2, 1, 5});
    Lstm fwd(2, 3, Direction::forward, rng);
    check("lstm", fwd, {2, 4, 2});
    Lstm bi(2, 3, Direction::bidirectional, rng);
    check("bilstm", bi, {2, 4, 2});
    Dropout drop(0.3);
    check("dropout/train", drop, {3, 4}, Mode::train);
    check("dropout/eval", drop, {3, 4}, Mode::eval);
    Reshape reshape(Shape{4, 1});
    check("reshape", reshape, {3, 4});
    FinalStates fs(3);
    check("final_states", fs, {2, 4, 6});
    track("dnn", model_grad_error(ArchKind::dnn, seed));
    track("blstm", model_grad_error(ArchKind::blstm, seed));
  }
  const double secs = seconds_since(t0);
  report(1, worst < kGradTolerance && secs < kGradSeconds, "gradient suite, every layer and both architectures, 10 seeds",
         "max rel error " + skewnet::detail::format_double(worst) + " (" + worst_name + ") < 1e-4, " + fmt(secs, 1) + " s < 60 s");
}

// ------------------------------------------------------------------ 2

void criterion_metric_oracle() {
  Rng rng(2024);
  std::size_t mismatches = 0, identity_breaks = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const std::size_t c = 2 + rng.index(5);
    const std::size_t n = 1 + rng.index(200);
    std::vector<int> yt(n), yp(n);
    for (std::size_t i = 0; i < n; ++i) {
      yt[i] = static_cast<int>(rng.index(c));
      yp[i] = static_cast<int>(rng.index(c));
    }
    const MetricsReport r = per_class_metrics(confusion(yt, yp, c));
    std::size_t correct = 0;
    for (std::size_t k = 0; k < c; ++k) {
      std::uint64_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool t = yt[i] == static_cast<int>(k), p = yp[i] == static_cast<int>(k);
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
      }
      const double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double rec = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
      const double f1 = prec + rec == 0.0 ? 0.0 : 2.0 * prec * rec / (prec + rec);
      if (r.precision[k] != prec || r.recall[k] != rec || r.f1[k] != f1) ++mismatches;
      correct += tp;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(n);
    if (r.accuracy != acc) ++mismatches;
    if (!(micro_precision(r.matrix) == micro_recall(r.matrix) && micro_recall(r.matrix) == r.accuracy))
      ++identity_breaks;
  }
  report(2, mismatches == 0 && identity_breaks == 0, "per-class metrics match brute-force counting on 1000 instances",
         std::to_string(mismatches) + " mismatches, " + std::to_string(identity_breaks) + " micro identity breaks");
}

// ------------------------------------------------------------------ 3

void criterion_vae_math() {
  Rng rng(3);
  double min_kl = INFINITY;
  for (int i = 0; i < 100000; ++i) {
    const Tensor mu({1, 1}, rng.uniform(-5.0, 5.0));
    const Tensor lv({1, 1}, rng.uniform(-8.0, 8.0));
    min_kl = std::min(min_kl, kl_divergence(mu, lv));
  }
  const double kl00 = kl_divergence(Tensor({1, 4}, 0.0), Tensor({1, 4}, 0.0));
  const double kl10 = kl_divergence(Tensor({1, 1}, 1.0), Tensor({1, 1}, 0.0));

  const double mu = 1.5, var = 4.0;
  const std::size_t n = 100000;
  EncodedDistribution dist{Tensor({n, 1}, mu), Tensor({n, 1}, std::log(var))};
  Rng noise(33);
  const Tensor z = reparameterize(dist, noise);
  double mean = 0.0;
  for (double v : z.data()) mean += v;
  mean /= static_cast<double>(n);
  double s2 = 0.0;
  for (double v : z.data()) s2 += (v - mean) * (v - mean);
  s2 /= static_cast<double>(n - 1);
  const double mean_err = std::abs(mean - mu) / mu, var_err = std::abs(s2 - var) / var;

  const bool ok = min_kl >= 0.0 && std::abs(kl00) <= kKlExact && std::abs(kl10 - 0.5) <= kKlExact &&
                  mean_err <= kMomentTolerance && var_err <= kMomentTolerance;
  report(3, ok, "KL non-negative and exact at known points, reparameterized moments within 2%",
         "min KL " + skewnet::detail::format_double(min_kl) + ", KL(0,0) " + skewnet::detail::format_double(kl00) + ", KL(1,0) " +
             skewnet::detail::format_double(kl10) + ", mean err " + fmt(100 * mean_err, 3) + "%, var err " +
             fmt(100 * var_err, 3) + "%");
}

// ------------------------------------------------------------------ 4

template <class E, class F>
bool throws(F&& f) {
  try {
    f();
  } catch (const E&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

void criterion_plan_arithmetic() {
  const std::size_t normal = plan_from_fraction(5261, 0.65);
  const std::size_t theft = plan_from_fraction(1587, 0.80);
  bool rejects = true;
  for (std::size_t count : {1u, 2u, 24u, 1270u, 1587u, 5261u}) {
    rejects = rejects && throws<CapViolationError>([&] { check_cap("x", count, count); });
    rejects = rejects && throws<CapViolationError>([&] { check_cap("x", count, count + 1); });
    rejects = rejects && throws<CapViolationError>([&] { check_cap("x", count, 10 * count); });
  }
  rejects = rejects && throws<CapViolationError>([] { plan_from_fraction(1587, 1.0); });
  rejects = rejects && throws<CapViolationError>([] { plan_from_fraction(1587, 1.5); });
  // the full pipeline entry point refuses before generating anything
  Dataset ds;
  ds.class_names = {"a", "b"};
  ds.feature_names = {"f0", "f1"};
  ds.features = Tensor({5, 2}, 0.5);
  ds.labels = {0, 0, 0, 1, 1};
  rejects = rejects && throws<CapViolationError>([&] { augment_dataset(ds, {{"b", 2, 2}}, {}, 0); });
  report(4, normal == 3420 && theft == 1270 && rejects, "augmentation plan arithmetic and cap",
         "0.65 x 5261 -> " + std::to_string(normal) + ", 0.80 x 1587 -> " + std::to_string(theft) +
             ", n >= count rejected: " + (rejects ? "yes" : "no"));
}

// ------------------------------------------------------------------ 5 and 8

void criteria_desk_experiment() {
  const auto config = load_experiment_config(fs::path(SKEWNET_SOURCE_DIR) / "configs/botiot-mini.json");
  const auto t0 = Clock::now();
  std::vector<double> gain, loss;
  std::vector<ExperimentResult> runs;
  bool hygiene = true;
  std::string hygiene_detail;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    ExperimentConfig c = config;
    c.seed = seed;
    ExperimentResult r;
    try {
      r = run_experiment(c, {std::nullopt, true, nullptr});
    } catch (const StateError& e) {
      hygiene = false;
      hygiene_detail += " seed " + std::to_string(seed) + ": " + e.what();
      continue;
    }
    const auto& e1 = r.at(Variant::e1);
    const auto& e3 = r.at(Variant::e3);
    gain.push_back(e3.minority_f1 - e1.minority_f1);
    loss.push_back(e1.majority_f1 - e3.majority_f1);
    std::cout << "  seed " << seed << ": minority F1 E1 " << fmt(e1.minority_f1) << " E2 "
              << fmt(r.at(Variant::e2).minority_f1) << " E3 " << fmt(e3.minority_f1) << "; majority F1 E1 "
              << fmt(e1.majority_f1) << " E3 " << fmt(e3.majority_f1) << '\n';

    // independent recheck of the runner's self-check
    std::set<std::uint64_t> test_rows(e1.test_hashes.begin(), e1.test_hashes.end());
    for (const auto& v : r.variants) {
      if (v.test_hashes != e1.test_hashes) hygiene = false;
      for (std::uint64_t h : v.synthetic_hashes)
        if (test_rows.contains(h)) hygiene = false;
    }
    hygiene = hygiene && r.hygiene.passed() && r.at(Variant::e2).synthetic_rows > 0;
    runs.push_back(std::move(r));
  }
  const double secs = seconds_since(t0);
  const bool complete = gain.size() == 3;
  const double g = complete ? median3(gain) : 0.0, l = complete ? median3(loss) : INFINITY;
  report(5, complete && g >= kMinorityGain && l <= kMajorityLoss && secs <= kDeskSeconds,
         "botiot-mini E3 vs E1, median of 3 seeds",
         "minority F1 gain " + fmt(g) + " >= 0.10, majority F1 loss " + fmt(l) + " <= 0.02, " + fmt(secs, 0) +
             " s <= 900 s");
  std::size_t test_rows = runs.empty() ? 0 : runs.front().hygiene.test_rows;
  report(8, hygiene && runs.size() == 3, "test rows identical across E1/E2/E3 and free of synthetic rows",
         std::to_string(runs.size()) + " runs self-checked, " + std::to_string(test_rows) + " test rows each" +
             hygiene_detail);
}

// ------------------------------------------------------------------ 6

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

void criterion_cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "skewnet_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "run.json";
  {
    std::ofstream out(cfg);
    out << R"({"version": 1, "seed": 5,
      "dataset": {"synthetic": {"n_features": 10, "separability": 2.5, "classes": [
        {"name": "a", "count": 500, "clusters": 2, "spread": 0.5},
        {"name": "b", "count": 400, "clusters": 2, "spread": 0.5},
        {"name": "r", "count": 60, "near": "a", "offset": 2.5}]}},
      "projector": {"latent_dim": 4, "epochs": 5, "batch_size": 64},
      "augmentation": {"plans": [{"class": "r", "fraction": 0.5}], "vae": {"epochs": 5, "min_updates": 100}},
      "weights": {"search": {"max_iterations": 3, "epochs": 2}},
      "classifier": {"widths": [32, 16, 8, 8]},
      "training": {"epochs": 5, "batch_size": 64}})";
  }
  const std::string cli = quoted(SKEWNET_CLI_PATH);
  const std::vector<std::string> steps{
      "synth-data",
      "preprocess",
      "train-ae",
      "train-vae",
      "augment",
      "encode --input {out}/augmented.csv --input {out}/test.csv",
      "search-weights --input {out}/augmented.encoded.csv",
      "train --input {out}/augmented.encoded.csv --weights-file {out}/weights.txt",
      "evaluate --input {out}/test.encoded.csv",
      "--format machine evaluate --input {out}/test.encoded.csv",
      "experiment",
  };
  bool ok = true;
  std::string detail;
  for (const char* run : {"a", "b"}) {
    const fs::path out = root / run;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      std::string step = steps[i];
      for (std::size_t p; (p = step.find("{out}")) != std::string::npos;) step.replace(p, 5, quoted(out));
      const std::string cmd = cli + " --config " + quoted(cfg) + " --out " + quoted(out) + " " + step + " > " +
                              quoted(root / (std::string(run) + ".stdout." + std::to_string(i))) + " 2>/dev/null";
      if (std::system(cmd.c_str()) != 0) {
        ok = false;
        detail = "command failed: " + step;
      }
    }
  }
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    ++compared;
    if (read_bytes(e.path()) != read_bytes(root / "b" / e.path().filename())) {
      ok = false;
      detail += " differs: " + e.path().filename().string();
    }
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto sa = read_bytes(root / ("a.stdout." + std::to_string(i)));
    ++compared;
    if (sa.empty() || sa != read_bytes(root / ("b.stdout." + std::to_string(i)))) {
      ok = false;
      detail += " stdout differs: " + steps[i];
    }
  }
  report(6, ok && compared > steps.size(), "every CLI subcommand repeated gives byte-identical output",
         std::to_string(compared) + " artifacts and reports compared" + (detail.empty() ? "" : ";" + detail));
}

// ------------------------------------------------------------------ 7

void criterion_weight_search() {
  ExperimentConfig c = load_experiment_config(fs::path(SKEWNET_SOURCE_DIR) / "configs/botiot-mini.json");
  c.variants = {Variant::e3};
  c.weights.clear();
  SearchSpec s;
  s.search.max_iterations = 6;
  s.epochs = 0;
  c.search = s;
  c.validate();
  const auto t0 = Clock::now();
  const ExperimentResult r = run_experiment(c);
  const SearchResult& sr = *r.at(Variant::e3).search;
  std::ostringstream trace;
  write_search_trace(trace, sr, r.class_names);
  const auto kv = parse_key_values(trace.str());
  const bool baseline_first = !sr.trace.empty() && sr.trace[0].weights.is_unit() && sr.trace[0].searched_class.empty() &&
                              sr.trace[0].objective == sr.baseline_objective &&
                              kv.at("search.trace.0.class") == "baseline";
  const bool ok = sr.objective >= sr.baseline_objective && sr.trace.size() <= s.search.max_iterations + 1 &&
                  baseline_first;
  std::string weights;
  for (std::size_t k = 0; k < r.class_names.size(); ++k)
    weights += (k ? "," : "") + r.class_names[k] + ":" + skewnet::detail::format_double(sr.weights[k]);
  report(7, ok, "weight search on botiot-mini: objective >= baseline, bounded, baseline logged first",
         "objective " + fmt(sr.objective) + " vs baseline " + fmt(sr.baseline_objective) + ", " +
             std::to_string(sr.trace.size() - 1) + "/" + std::to_string(s.search.max_iterations) +
             " iterations, weights {" + weights + "}, " + fmt(seconds_since(t0), 0) + " s");
}

void guarded(int id, const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, "raised", e.what());
  }
}

}  // namespace

// Optional arguments pick criteria by number; 5 also covers 8.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto run = [&](int id, const std::function<void()>& f) {
    if (only.empty() || only.contains(id)) guarded(id, f);
  };
  run(1, criterion_gradients);
  run(2, criterion_metric_oracle);
  run(3, criterion_vae_math);
  run(4, criterion_plan_arithmetic);
  run(5, criteria_desk_experiment);
  run(6, criterion_cli_determinism);
  run(7, criterion_weight_search);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
