#include <gtest/gtest.h>

#include <map>
#include <utility>

#include "skewnet/metrics.hpp"
#include "skewnet/random.hpp"

using namespace skewnet;

namespace {

// Independent oracle: count pairs directly, no confusion matrix.
struct Counted {
  double precision, recall, f1;
};

Counted count_pairs(const std::vector<int>& t, const std::vector<int>& p, int c) {
  std::size_t tp = 0, pred = 0, actual = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tp += (t[i] == c && p[i] == c);
    pred += (p[i] == c);
    actual += (t[i] == c);
  }
  const double prc = pred ? double(tp) / double(pred) : 0.0;
  const double rec = actual ? double(tp) / double(actual) : 0.0;
  return {prc, rec, prc + rec > 0 ? 2 * prc * rec / (prc + rec) : 0.0};
}

MetricsReport sample_report() {
  const std::vector<int> t{0, 0, 1, 2, 2, 2}, p{0, 1, 1, 2, 0, 2};
  return evaluate_predictions(t, p, {"Normal", "DDoS", "Theft"});
}

}  // namespace

TEST(Confusion, HandCounted) {
  const std::vector<int> t{0, 0, 1}, p{0, 1, 1};
  const auto cm = confusion(t, p, 2);
  EXPECT_EQ(cm.at(0, 0), 1u);
  EXPECT_EQ(cm.at(0, 1), 1u);
  EXPECT_EQ(cm.at(1, 0), 0u);
  EXPECT_EQ(cm.at(1, 1), 1u);
  EXPECT_EQ(cm.total(), 3u);
}

TEST(Confusion, PerfectPredictionsAreDiagonal) {
  const std::vector<int> y{0, 2, 1, 1, 2};
  const auto cm = confusion(y, y, 3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      if (a != b) EXPECT_EQ(cm.at(a, b), 0u);
  EXPECT_EQ(cm.trace(), 5u);
}

TEST(Confusion, OutOfRangeIsDataError) {
  const std::vector<int> t{0, 3}, p{0, 1};
  EXPECT_THROW(confusion(t, p, 3), DataError);
  const std::vector<int> shorter{0};
  EXPECT_THROW(confusion(t, shorter, 4), DataError);
}

TEST(PerClassMetrics, HandArithmetic) {
  const std::vector<int> t{0, 0, 1}, p{0, 1, 1};
  const auto r = per_class_metrics(confusion(t, p, 2));
  EXPECT_EQ(r.precision[0], 1.0);
  EXPECT_EQ(r.recall[0], 0.5);
  EXPECT_NEAR(r.f1[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.precision[1], 0.5);
  EXPECT_EQ(r.recall[1], 1.0);
}

TEST(PerClassMetrics, PerfectAndAbsentClasses) {
  const std::vector<int> y{0, 1, 0, 1};
  const auto r = per_class_metrics(confusion(y, y, 3));
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(r.precision[c], 1.0);
    EXPECT_EQ(r.recall[c], 1.0);
    EXPECT_EQ(r.f1[c], 1.0);
  }
  EXPECT_EQ(r.precision[2], 0.0);
  EXPECT_EQ(r.recall[2], 0.0);
  EXPECT_EQ(r.f1[2], 0.0);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(PerClassMetrics, EmptyMatrixIsDataError) {
  EXPECT_THROW(per_class_metrics(ConfusionMatrix(3)), DataError);
  EXPECT_THROW(per_class_metrics(ConfusionMatrix(0)), DataError);
}

TEST(PerClassMetrics, MatchesPairCountingOracleProperty) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.index(5), n = 1 + rng.index(200);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(c));
      p[i] = static_cast<int>(rng.index(c));
    }
    const auto cm = confusion(t, p, c);
    const auto r = per_class_metrics(cm);
    for (std::size_t k = 0; k < c; ++k) {
      const Counted o = count_pairs(t, p, static_cast<int>(k));
      ASSERT_EQ(r.precision[k], o.precision);
      ASSERT_EQ(r.recall[k], o.recall);
      ASSERT_EQ(r.f1[k], o.f1);
      ASSERT_GE(r.f1[k], 0.0);
      ASSERT_LE(r.f1[k], 1.0);
    }
    ASSERT_EQ(micro_precision(cm), r.accuracy);
    ASSERT_EQ(micro_recall(cm), r.accuracy);
    ASSERT_EQ(cm.total(), n);
  }
}

TEST(EmitReport, TableRoundsToTwoDecimals) {
  const std::vector<int> t{0, 0, 1}, p{0, 1, 1};
  const auto text = emit_report(per_class_metrics(confusion(t, p, 2), {"a", "b"}), ReportFormat::table);
  EXPECT_NE(text.find("0.67"), std::string::npos);
  EXPECT_EQ(text.find("0.6667"), std::string::npos);
}

TEST(EmitReport, DeterministicBytes) {
  for (auto f : {ReportFormat::table, ReportFormat::machine})
    EXPECT_EQ(emit_report(sample_report(), f), emit_report(sample_report(), f));
}

TEST(EmitReport, MachineRoundTrip) {
  const auto r = sample_report();
  EXPECT_EQ(parse_machine_report(emit_report(r, ReportFormat::machine)), r);
}

TEST(EmitReport, MachineRoundTripRandomProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng.index(5), n = 1 + rng.index(300);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.index(c));
      p[i] = static_cast<int>(rng.index(c));
    }
    const auto r = per_class_metrics(confusion(t, p, c));
    ASSERT_EQ(parse_machine_report(emit_report(r, ReportFormat::machine)), r);
  }
}

TEST(EmitReport, PrefixedSectionsAndParseErrors) {
  std::ostringstream out;
  write_machine_report(out, sample_report(), "E3.");
  const auto kv = parse_key_values(out.str());
  EXPECT_EQ(parse_machine_report(kv, "E3."), sample_report());
  EXPECT_THROW(parse_machine_report(kv, "E1."), DataError);
  EXPECT_THROW(parse_key_values("no equals sign"), DataError);
  EXPECT_THROW(parse_report_format("json"), ConfigError);
}
