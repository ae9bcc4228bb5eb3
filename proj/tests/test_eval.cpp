#include <gtest/gtest.h>

#include <set>

#include "flimcl/eval/lopo.hpp"
#include "flimcl/eval/metrics.hpp"

using namespace flimcl;
using namespace flimcl::eval;

TEST(ConfusionMatrix, HandCount) {
  const auto cm = confusion_matrix({0, 1, 1, 1}, {0, 0, 1, 1}, 2);
  EXPECT_EQ(cm.counts(0, 0), 1);
  EXPECT_EQ(cm.counts(0, 1), 1);
  EXPECT_EQ(cm.counts(1, 0), 0);
  EXPECT_EQ(cm.counts(1, 1), 2);
  EXPECT_DOUBLE_EQ(cm.accuracy(), 0.75);
  EXPECT_DOUBLE_EQ(cm.recall()[0], 0.5);
  EXPECT_DOUBLE_EQ(cm.recall()[1], 1.0);
}

TEST(ConfusionMatrix, PerfectAndConstantPredictions) {
  const std::vector<Label> y{0, 1, 2, 2, 1};
  const auto perfect = confusion_matrix(y, y, 3);
  EXPECT_EQ(perfect.counts.diagonal().sum(), 5);
  EXPECT_EQ(perfect.total(), 5);
  const auto zeros = confusion_matrix(std::vector<Label>(5, 0), y, 3);
  EXPECT_EQ(zeros.counts.col(0).sum(), 5);
  EXPECT_EQ(zeros.counts.rightCols(2).sum(), 0);
  EXPECT_THROW(confusion_matrix({0, 3}, {0, 1}, 3), InputError);
}

namespace {
double brute_auc(const std::vector<double>& s, const std::vector<Label>& y, Label c) {
  double wins = 0;
  int pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == c && y[j] != c) {
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        ++pairs;
      }
  return wins / pairs;
}
}  // namespace

TEST(Auc, PairwiseExamples) {
  EXPECT_DOUBLE_EQ(auc_one_vs_rest({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}, 1), 0.75);
  EXPECT_DOUBLE_EQ(auc_one_vs_rest({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}, 1), 1.0);
  EXPECT_DOUBLE_EQ(auc_one_vs_rest({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}, 1), 0.5);
  EXPECT_THROW(auc_one_vs_rest({0.3, 0.4}, {1, 1}, 1), InputError);
}

TEST(Auc, MatchesBruteForceWithTiesAndIsRankInvariant) {
  Rng rng(3);
  std::uniform_int_distribution<int> coarse(0, 5), label(0, 2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<Label> y;
    for (int i = 0; i < 30; ++i) {
      s.push_back(coarse(rng) / 5.0);
      y.push_back(label(rng));
    }
    for (Label c = 0; c < 3; ++c) {
      if (std::count(y.begin(), y.end(), c) == 0 || std::count(y.begin(), y.end(), c) == 30) continue;
      const double a = auc_one_vs_rest(s, y, c);
      EXPECT_NEAR(a, brute_auc(s, y, c), 1e-12);
      std::vector<double> t;
      for (double v : s) t.push_back(std::exp(3 * v) - 7);
      EXPECT_NEAR(auc_one_vs_rest(t, y, c), a, 1e-12);
    }
  }
}

TEST(SelectBaseline, ScoreThenTieBreaks) {
  auto metrics = [](double acc, double auc) {
    ModelMetrics m;
    m.accuracy = acc;
    m.mean_auc = auc;
    return m;
  };
  EXPECT_EQ(select_baseline({{"A", metrics(0.50, 0.60)}, {"B", metrics(0.44, 0.90)}}), "B");
  EXPECT_EQ(select_baseline({{"only", metrics(0.1, 0.2)}}), "only");
  EXPECT_THROW(select_baseline({}), InputError);
  // equal mean AUC; accuracies of the five published candidates
  const std::vector<Candidate> table{{"RF", metrics(0.2545, 0.7)},
                                     {"LGBM", metrics(0.2478, 0.7)},
                                     {"XGB", metrics(0.2270, 0.7)},
                                     {"MLP", metrics(0.4392, 0.7)},
                                     {"SVM", metrics(0.2747, 0.7)}};
  EXPECT_EQ(select_baseline(table), "MLP");
  EXPECT_EQ(select_baseline({{"b", metrics(0.5, 0.7)}, {"a", metrics(0.5, 0.7)}}), "a");
  EXPECT_EQ(select_baseline({{"a", metrics(0.4, 0.8)}, {"b", metrics(0.6, 0.6)}}), "b");
}

TEST(MajorityVote, CountsThenMassThenIndex) {
  Matrix p(3, 2);
  p << 0.9, 0.1, 0.8, 0.2, 0.3, 0.7;
  EXPECT_EQ(majority_vote({0, 0, 1}, p), 0);
  Matrix tie(2, 2);
  tie << 0.6, 0.4, 0.7, 0.3;  // mass A 1.3, B 0.7
  EXPECT_EQ(majority_vote({0, 1}, tie), 0);
  Matrix tie_b(2, 2);
  tie_b << 0.45, 0.55, 0.35, 0.65;
  EXPECT_EQ(majority_vote({0, 1}, tie_b), 1);
  Matrix even(2, 2);
  even << 0.5, 0.5, 0.5, 0.5;
  EXPECT_EQ(majority_vote({1, 0}, even), 0);
  Matrix single(1, 3);
  single << 0.2, 0.3, 0.5;
  EXPECT_EQ(majority_vote({1}, single), 1);
  EXPECT_THROW(majority_vote({}, single), InputError);
}

TEST(MajorityVote, PermutationInvariant) {
  Rng rng(4);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix p(7, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    p.array().colwise() /= p.rowwise().sum().eval().array();
    std::vector<Label> votes;
    for (int i = 0; i < 7; ++i) votes.push_back(static_cast<Label>(u(rng) * 3));
    const Label base = majority_vote(votes, p);
    std::vector<int> perm{0, 1, 2, 3, 4, 5, 6};
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix q(7, 3);
    std::vector<Label> v2;
    for (int i = 0; i < 7; ++i) {
      q.row(i) = p.row(perm[static_cast<std::size_t>(i)]);
      v2.push_back(votes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    }
    EXPECT_EQ(majority_vote(v2, q), base);
  }
}

TEST(Lopo, OneFoldPerPatient) {
  std::vector<int> ids;
  for (int p = 0; p < 31; ++p) ids.push_back(100 + p);
  EXPECT_EQ(lopo_splits(ids).folds.size(), 31u);
  const auto two = lopo_splits(std::vector<int>{4, 9});
  ASSERT_EQ(two.folds.size(), 2u);
  EXPECT_EQ(two.folds[0].train_patients, std::vector<int>{9});
  EXPECT_EQ(two.folds[1].train_patients, std::vector<int>{4});
  EXPECT_THROW(lopo_splits(std::vector<int>{1, 2, 1}), InputError);
  EXPECT_THROW(lopo_splits(std::vector<int>{1}), InputError);
}

TEST(Lopo, RowsPartitionByPatient) {
  const auto plan = lopo_splits(std::vector<int>{0, 1, 2});
  const std::vector<int> patient{0, 0, 1, 2, 2, 2};
  std::set<std::size_t> tested;
  for (std::size_t f = 0; f < 3; ++f) {
    auto [tr, te] = plan.rows(f, patient);
    EXPECT_EQ(tr.size() + te.size(), patient.size());
    for (auto r : te) {
      EXPECT_EQ(patient[r], plan.folds[f].test_patient);
      tested.insert(r);
    }
    for (auto r : tr) EXPECT_NE(patient[r], plan.folds[f].test_patient);
  }
  EXPECT_EQ(tested.size(), patient.size());
}
