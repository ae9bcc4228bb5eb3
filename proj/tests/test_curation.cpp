#include <gtest/gtest.h>

#include <set>

#include "flimcl/curation/confident.hpp"
#include "flimcl/curation/prune.hpp"
#include "flimcl/curation/refine.hpp"
#include "flimcl/curation/scheme.hpp"
#include "flimcl/eval/rescoring.hpp"

using namespace flimcl;
using namespace flimcl::curation;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

const std::vector<std::string> kRoster{"Absent", "Very low", "Low", "Low-moderate",
                                       "Moderate", "Moderate-high", "High"};

}  // namespace

TEST(ConfidenceScores, MaxPosterior) {
  const auto cs = confidence_scores(rows({{0.25, 0.25, 0.25, 0.25}, {0, 0, 1, 0}, {0.1, 0.7, 0.2, 0}}));
  EXPECT_DOUBLE_EQ(cs[0], 0.25);
  EXPECT_DOUBLE_EQ(cs[1], 1.0);
  EXPECT_DOUBLE_EQ(cs[2], 0.7);
  EXPECT_THROW(confidence_scores(Matrix(0, 3)), InputError);
}

TEST(MarginConfidence, MeanPerMargin) {
  const auto one = margin_confidence({0.9, 0.7, 0.8}, Grouping::from_keys({5, 5, 5}));
  EXPECT_NEAR(one[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(margin_confidence({0.42}, Grouping::from_keys({1}))[0], 0.42);
  const auto two = margin_confidence({0.9, 0.5, 0.7, 0.3}, Grouping::from_keys({1, 2, 1, 2}));
  EXPECT_DOUBLE_EQ(two[0], 0.8);
  EXPECT_DOUBLE_EQ(two[1], 0.4);
  Grouping empty;
  empty.ids = {3};
  empty.members = {{}};
  EXPECT_THROW(margin_confidence({}, empty), InputError);
}

TEST(Thresholds, SelfConfidenceMean) {
  const auto tau = class_thresholds(rows({{0.9, 0.1}, {0.4, 0.6}, {0.2, 0.8}}), {0, 0, 1});
  EXPECT_DOUBLE_EQ(tau[0], 0.65);
  EXPECT_DOUBLE_EQ(tau[1], 0.8);
  const auto onehot = class_thresholds(rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}), {0, 1, 2});
  EXPECT_EQ(onehot, (std::vector<double>{1, 1, 1}));
  const auto uniform = class_thresholds(Matrix::Constant(4, 4, 0.25), {0, 1, 2, 3});
  for (double t : uniform) EXPECT_DOUBLE_EQ(t, 0.25);
  const auto all = class_thresholds(rows({{0.9, 0.1}, {0.4, 0.6}, {0.2, 0.8}}), {0, 0, 1}, ThresholdMode::AllPoints);
  EXPECT_DOUBLE_EQ(all[0], 0.5);
}

TEST(Thresholds, EmptyClassIsNamed) {
  try {
    class_thresholds(rows({{0.9, 0.1, 0}, {0.4, 0.6, 0}}), {0, 0}, ThresholdMode::SelfConfidence,
                     {"low", "moderate", "high"});
    FAIL();
  } catch (const ThresholdUndefinedError& e) {
    EXPECT_EQ(e.class_index, 1);
    EXPECT_NE(std::string(e.what()).find("moderate"), std::string::npos);
  }
}

TEST(ConfidentJoint, FirstHandExample) {
  const Matrix p = rows({{0.9, 0.1}, {0.4, 0.6}, {0.2, 0.8}});
  const std::vector<Label> y{0, 0, 1};
  const auto tau = class_thresholds(p, y);
  const auto cj = confident_joint(p, y, tau);
  EXPECT_EQ(cj.counts(0, 0), 1);
  EXPECT_EQ(cj.counts(0, 1), 0);  // middle point: CS 0.6 < tau_1 0.8
  EXPECT_EQ(cj.counts(1, 0), 0);
  EXPECT_EQ(cj.counts(1, 1), 1);
  EXPECT_EQ(flag_low_confidence(p, y, tau), (std::vector<char>{0, 0, 0}));
}

TEST(ConfidentJoint, SecondHandExample) {
  const Matrix p = rows({{0.2, 0.8}, {0.9, 0.1}, {0.3, 0.7}});
  const std::vector<Label> y{0, 0, 1};
  const std::vector<double> tau{0.55, 0.7};
  const auto cj = confident_joint(p, y, tau);
  EXPECT_EQ(cj.counts(0, 0), 1);
  EXPECT_EQ(cj.counts(0, 1), 1);
  EXPECT_EQ(cj.counts(1, 0), 0);
  EXPECT_EQ(cj.counts(1, 1), 1);
  EXPECT_EQ(flag_low_confidence(p, y, tau), (std::vector<char>{1, 0, 0}));
}

TEST(ConfidentJoint, OneHotCorrectIsDiagonal) {
  const Matrix p = rows({{1, 0, 0}, {0, 1, 0}, {0, 1, 0}, {0, 0, 1}});
  const std::vector<Label> y{0, 1, 1, 2};
  const auto cj = confident_joint(p, y, class_thresholds(p, y));
  EXPECT_EQ(cj.counts.diagonal(), Eigen::Vector3i(1, 2, 1));
  EXPECT_EQ(cj.counts.sum(), 4);
  for (char f : flag_low_confidence(p, y, cj.thresholds)) EXPECT_EQ(f, 0);
}

TEST(ConfidentJoint, RandomInvariants) {
  Rng rng(21);
  std::uniform_int_distribution<int> size(1, 50), width(2, 5);
  std::gamma_distribution<double> gamma(0.7, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = size(rng), c = width(rng);
    Matrix p(n, c);
    std::vector<Label> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) p(i, j) = gamma(rng) + 1e-9;
      p.row(i) /= p.row(i).sum();
      y[static_cast<std::size_t>(i)] = static_cast<Label>(std::uniform_int_distribution<int>(0, c - 1)(rng));
    }
    const auto tau = thresholds_present(p, y, ThresholdMode::SelfConfidence);
    const auto cj = confident_joint(p, y, tau);
    const auto lc = flag_low_confidence(p, y, tau);
    const auto pred = predicted_labels(p);
    const auto cs = confidence_scores(p);
    long off = 0, lc_count = 0, clearing = 0;
    for (Eigen::Index i = 0; i < c; ++i)
      for (Eigen::Index j = 0; j < c; ++j)
        if (i != j) off += cj.counts(i, j);
    for (int k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      lc_count += lc[ku];
      clearing += cs[ku] >= tau[static_cast<std::size_t>(pred[ku])];
      // recompute from (prediction, CS, tau) alone
      EXPECT_EQ(lc[ku], pred[ku] != y[ku] && cs[ku] >= tau[static_cast<std::size_t>(pred[ku])]);
    }
    EXPECT_EQ(off, lc_count);
    EXPECT_LE(cj.counts.sum(), n);
    EXPECT_EQ(cj.counts.sum() == n, clearing == n);
  }
}

TEST(LabelIssues, IssueAndControlThresholds) {
  std::vector<char> lc(7176, 0);
  std::fill(lc.begin(), lc.begin() + 6161, 1);
  const auto big = flag_label_issues(lc, Grouping::from_keys(std::vector<int>(7176, 1)));
  EXPECT_NEAR(big.lc_fraction[0], 0.859, 5e-4);
  EXPECT_EQ(big.status[0], MarginStatus::Issue);

  std::vector<char> ten(20, 0);
  ten[0] = ten[1] = 1;                            // margin 1: 2 of 10
  for (int k = 10; k < 15; ++k) ten[static_cast<std::size_t>(k)] = 1;  // margin 2: 5 of 10
  std::vector<int> keys(20, 1);
  std::fill(keys.begin() + 10, keys.end(), 2);
  const auto f = flag_label_issues(ten, Grouping::from_keys(keys));
  EXPECT_EQ(f.status[0], MarginStatus::Control);
  EXPECT_EQ(f.status[1], MarginStatus::Indeterminate);
  EXPECT_EQ(classify_fraction(0.70, {}), MarginStatus::Indeterminate);
  EXPECT_EQ(classify_fraction(0.30, {}), MarginStatus::Indeterminate);
  EXPECT_THROW(flag_label_issues(ten, Grouping::from_keys(keys), IssueThresholds{0.3, 0.7}), ConfigError);
}

TEST(Prune, RemovesFlaggedTrainingRowsOnly) {
  std::vector<std::size_t> train(10);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::vector<char> flags(12, 0);
  flags[1] = flags[4] = flags[7] = 1;
  flags[11] = 1;  // a test row; never inspected
  const std::vector<Label> y{0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto r = prune_training_set(train, flags, y);
  EXPECT_EQ(r.kept.size(), 7u);
  EXPECT_EQ(r.removed, (std::vector<std::size_t>{1, 4, 7}));
  const auto none = prune_training_set(train, std::vector<char>(12, 0), y);
  EXPECT_EQ(none.kept, train);

  std::vector<char> some(1000, 0);
  std::vector<std::size_t> all(1000);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t k = 0; k < 130; ++k) some[k * 7] = 1;
  const auto big = prune_training_set(all, some, std::vector<Label>(1000, 0));
  EXPECT_NEAR(static_cast<double>(big.kept.size()) / 1000.0, 0.87, 1e-12);
}

TEST(Prune, EmptyingAClassIsAnError) {
  const std::vector<Label> y{0, 0, 1};
  try {
    prune_training_set({0, 1, 2}, {0, 0, 1}, y, {"low", "high"});
    FAIL();
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("high"), std::string::npos);
  }
}

TEST(Scheme, SevenFiveThreeMergeSchedule) {
  const auto s7 = ClassScheme::identity(kRoster);
  const auto s5 = merge_classes(s7, {{{0, 1, 2}, "Low"}});
  EXPECT_EQ(s5.names, (std::vector<std::string>{"Low", "Low-moderate", "Moderate", "Moderate-high", "High"}));
  const auto s3 = merge_classes(s5, {{{0, 1}, "Low"}, {{3, 4}, "High"}});
  EXPECT_EQ(s3.names, (std::vector<std::string>{"Low", "Moderate", "High"}));
  EXPECT_EQ(s3.map, (std::vector<Label>{0, 0, 0, 0, 1, 2, 2}));
  EXPECT_NO_THROW(s3.validate());
  const auto same = merge_classes(s7, {});
  EXPECT_EQ(same.names, s7.names);
  EXPECT_EQ(same.map, s7.map);
  EXPECT_THROW(merge_classes(s7, {{{0, 2}, ""}}), InputError);
  EXPECT_THROW(merge_classes(s7, {{{0, 1}, ""}, {{1, 2}, ""}}), InputError);
  EXPECT_EQ(merge_classes(s7, {{{5, 6}, ""}}).names.back(), "Moderate-high/High");
}

TEST(Scheme, MapsComposeAndPreserveOrder) {
  const auto s7 = ClassScheme::identity(kRoster);
  const auto s5 = merge_classes(s7, {{{0, 1, 2}, "Low"}});
  const auto s3 = merge_classes(s5, {{{0, 1}, "Low"}, {{3, 4}, "High"}});
  const auto direct = merge_classes(s7, {{{0, 1, 2, 3}, "Low"}, {{5, 6}, "High"}});
  const auto m75 = transition_map(s7, s5), m53 = transition_map(s5, s3);
  for (Label y = 0; y < 7; ++y) {
    EXPECT_EQ(m53[static_cast<std::size_t>(m75[static_cast<std::size_t>(y)])], direct.apply(y));
    EXPECT_EQ(s3.apply(y), direct.apply(y));
    if (y > 0) {
      EXPECT_LE(s3.apply(y - 1), s3.apply(y));
    }
  }
  EXPECT_THROW(transition_map(s3, s5), InputError);
}

TEST(Scheme, RegroupPredictions) {
  const auto s7 = ClassScheme::identity(kRoster);
  const auto s5 = merge_classes(s7, {{{0, 1, 2}, "Low"}});
  const auto map = transition_map(s7, s5);
  const auto r = regroup_predictions({1}, {4}, map);
  EXPECT_EQ(s5.names[static_cast<std::size_t>(r.predictions[0])], "Low");
  const auto id = regroup_predictions({3, 1}, {2, 2}, transition_map(s7, s7));
  EXPECT_EQ(id.predictions, (std::vector<Label>{3, 1}));

  Rng rng(2);
  std::uniform_int_distribution<int> u(0, 6);
  std::vector<Label> p, y;
  for (int k = 0; k < 200; ++k) {
    p.push_back(u(rng));
    y.push_back(u(rng));
  }
  const auto g = regroup_predictions(p, y, map);
  const auto before = eval::confusion_matrix(p, y, 7), after = eval::confusion_matrix(g.predictions, g.labels, 5);
  EXPECT_EQ(before.total(), after.total());
  EXPECT_GE(after.accuracy(), before.accuracy());
  for (Label a = 0; a < 5; ++a)
    for (Label b = 0; b < 5; ++b) {
      long sum = 0;
      for (Label i = 0; i < 7; ++i)
        for (Label j = 0; j < 7; ++j)
          if (map[static_cast<std::size_t>(i)] == a && map[static_cast<std::size_t>(j)] == b) sum += before.counts(i, j);
      EXPECT_EQ(after.counts(a, b), sum);
    }
}

TEST(MergePair, MostConfusedThenLowerConfidence) {
  ConfidentJoint cj;
  cj.counts = Eigen::MatrixXi::Zero(4, 4);
  cj.counts(1, 2) = 5;
  cj.counts(2, 1) = 5;
  cj.counts(2, 3) = 2;
  const std::vector<Label> y{0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3};
  const std::vector<double> cs(y.size(), 0.5);
  EXPECT_EQ(select_merge_pair(cj, y, cs).lower, 1);
  cj.counts.setZero();
  cj.counts(0, 1) = 1;  // 1/2 + 0
  cj.counts(3, 2) = 1;  // 0 + 1/2
  std::vector<double> cs2(y.size(), 0.9);
  cs2[12] = cs2[13] = 0.2;  // pair (2,3) less confident
  EXPECT_EQ(select_merge_pair(cj, y, cs2).lower, 2);
}

namespace {

// Two clear groups of classes {0,1} and {2,3}; within each group the two
// classes differ only slightly.
PointTable ladder_table(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd;
  const std::vector<double> centre{0.0, 0.3, 4.0, 4.3};
  PointTable t;
  t.num_classes = 4;
  t.features.resize(8 * 4 * 12, 3);
  Eigen::Index r = 0;
  for (int p = 0; p < 8; ++p)
    for (int c = 0; c < 4; ++c)
      for (int k = 0; k < 12; ++k, ++r) {
        for (int j = 0; j < 3; ++j) t.features(r, j) = nd(rng) + centre[static_cast<std::size_t>(c)] * (j == 0);
        t.labels.push_back(c);
        t.patient.push_back(p);
        t.margin.push_back(p * 10 + c);
        t.point_id.push_back(static_cast<int>(r));
      }
  return t;
}

}  // namespace

TEST(Refine, TwoClassInputIsReturnedUnchanged) {
  auto t = ladder_table(1);
  for (auto& y : t.labels) y = y / 2;
  t.num_classes = 2;
  RefineOptions opt;
  opt.prune = false;
  models::Hyperparams hp;
  const auto r = refine(t, {"a", "b"}, models::ModelKind::Softmax, hp, 3, opt);
  EXPECT_EQ(r.steps.size(), 1u);
  EXPECT_EQ(r.final_step, 0u);
  EXPECT_EQ(r.final_analysis().scheme.num_classes(), 2);
}

TEST(Refine, MergesLeastSeparablePairAndAccuracyNeverDrops) {
  const auto t = ladder_table(2);
  RefineOptions opt;
  opt.prune = false;
  models::Hyperparams hp;
  const auto r = refine(t, {"a", "b", "c", "d"}, models::ModelKind::Softmax, hp, 5, opt);
  ASSERT_GE(r.steps.size(), 2u);
  const auto first = r.steps[1].merge.front().classes;
  EXPECT_TRUE(first == (std::vector<Label>{0, 1}) || first == (std::vector<Label>{2, 3}));
  double prev = -1;
  for (auto i : r.accepted_steps()) {
    EXPECT_GE(r.steps[i].analysis.accuracy(), prev);
    prev = r.steps[i].analysis.accuracy();
  }
  EXPECT_EQ(r.final_analysis().scheme.num_classes(), 2);
}

TEST(Refine, ScheduleAndPruningKeepTestRowsOut) {
  const auto t = ladder_table(3);
  RefineOptions opt;
  opt.mode = RefineMode::Schedule;
  opt.schedule = {{{{0, 1}, "low"}}, {{{1, 2}, "high"}}};
  models::Hyperparams hp;
  const auto r = refine(t, {"a", "b", "c", "d"}, models::ModelKind::Softmax, hp, 6, opt);
  ASSERT_EQ(r.steps.size(), 3u);
  EXPECT_EQ(r.final_analysis().scheme.names, (std::vector<std::string>{"low", "high"}));
  ASSERT_TRUE(r.pruning.has_value());
  // each fold's training set shrank by exactly the removed count
  std::size_t per_patient = t.size() / 8;
  for (std::size_t f = 0; f < 8; ++f)
    EXPECT_EQ(r.pruning->train_size_per_fold[f] + r.pruning->removed_per_fold[f], t.size() - per_patient);
  // nested flags only ever mark rows of the training split
  PointTable t2 = t;
  t2.labels = r.final_analysis().labels;
  t2.num_classes = 2;
  const auto plan = eval::lopo_splits(std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    auto [train, test] = plan.rows(f, t2.patient);
    const auto flags = nested_flags(t2, train, models::ModelKind::Softmax, hp, 3, ThresholdMode::SelfConfidence, 1);
    for (auto k : test) EXPECT_EQ(flags[k], 0);
    const auto kept = prune_training_set(train, flags, t2.labels).kept;
    std::set<std::size_t> test_set(test.begin(), test.end());
    for (auto k : kept) EXPECT_EQ(test_set.count(k), 0u);
  }
}

TEST(Rescoring, ReliabilityZeroIsIdentityAndOracleHelpsIssues) {
  // 3 margins of 4 points; margin 2 was corrupted from class 0 to 1 and its
  // points are predicted as class 0.
  ClassScheme s = ClassScheme::identity({"x", "y"});
  const Matrix p = rows({{0.9, 0.1}, {0.9, 0.1}, {0.8, 0.2}, {0.9, 0.1},
                         {0.95, 0.05}, {0.9, 0.1}, {0.95, 0.05}, {0.9, 0.1},
                         {0.1, 0.9}, {0.2, 0.8}, {0.1, 0.9}, {0.3, 0.7}});
  const std::vector<Label> y{0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
  const std::vector<int> margin{1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3};
  const auto a = analyze(s, y, p, margin, RefineOptions{});
  CorruptionLog log;
  log.entries.push_back({2, 0, 1});
  eval::RescoringOptions none{eval::RelabelPolicy::NoisyOracle, 0.0, 1};
  const auto same = eval::rescoring_study(a, log, none);
  for (const auto& g : same.groups) EXPECT_EQ(g.accuracy_before, g.accuracy_after);
  const auto oracle = eval::rescoring_study(a, log, eval::RescoringOptions{});
  const auto& issue = oracle.group("issue");
  EXPECT_EQ(issue.margins, 1);
  EXPECT_EQ(issue.corrupted_margins, 1);
  EXPECT_GT(issue.accuracy_after, issue.accuracy_before);
  const auto& control = oracle.group("control");
  EXPECT_EQ(control.accuracy_after, control.accuracy_before);
  EXPECT_FALSE(oracle.warnings.empty());  // no indeterminate margins
}

TEST(FlagAudit, CountsCorruptionVisibleInTheScheme) {
  // margin 2 was corrupted from class 0 to 1 and is confidently predicted 0
  ClassScheme s = ClassScheme::identity({"x", "y"});
  const Matrix p = rows({{0.9, 0.1}, {0.9, 0.1}, {0.8, 0.2}, {0.9, 0.1},
                         {0.95, 0.05}, {0.9, 0.1}, {0.95, 0.05}, {0.9, 0.1},
                         {0.1, 0.9}, {0.2, 0.8}, {0.1, 0.9}, {0.3, 0.7}});
  const std::vector<Label> y{0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
  const std::vector<int> margin{1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3};
  auto a = analyze(s, y, p, margin, RefineOptions{});
  CorruptionLog log;
  log.entries.push_back({2, 0, 1});
  const auto f = eval::flag_audit(a, log);
  EXPECT_EQ(f.margins, 3);
  EXPECT_EQ(f.corrupted, 1);
  EXPECT_EQ(f.issue, 1);
  EXPECT_EQ(f.issue_corrupted, 1);
  EXPECT_EQ(f.control, 2);
  EXPECT_EQ(f.control_corrupted, 0);
  EXPECT_DOUBLE_EQ(f.base_rate(), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(f.enrichment(), 3.0);
  EXPECT_DOUBLE_EQ(f.recall(), 1.0);

  // once both classes are merged the flip is invisible
  a.scheme = merge_classes(s, {{{0, 1}, "all"}});
  const auto merged = eval::flag_audit(a, log);
  EXPECT_EQ(merged.corrupted, 0);
  EXPECT_TRUE(std::isnan(merged.enrichment()));
  EXPECT_TRUE(std::isnan(merged.recall()));
}
