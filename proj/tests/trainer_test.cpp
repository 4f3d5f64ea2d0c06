#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "neosleep/train/loso.hpp"

namespace nn = neosleep::nn;
namespace tr = neosleep::train;
using neosleep::AnnotationTrack;
using neosleep::Errc;
using neosleep::Error;

namespace {

// QS-like: slow high-amplitude wave; AS-like: low-amplitude broadband noise.
neosleep::dsp::EpochTensor toy_epoch(bool qs, int index, const std::string& channel, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  neosleep::dsp::EpochTensor ep;
  ep.channel_label = channel;
  ep.epoch_index = index;
  ep.samples.resize(neosleep::dsp::kEpochSamples);
  const double phase = std::uniform_real_distribution<double>(0, 6.28)(rng);
  for (std::size_t i = 0; i < ep.samples.size(); ++i) {
    const double t = static_cast<double>(i) / neosleep::dsp::kTargetFs;
    const double v = qs ? 60.0 * std::sin(2 * std::numbers::pi * 1.5 * t + phase) + 5 * n(rng) : 10.0 * n(rng);
    ep.samples[i] = static_cast<float>(v);
  }
  return ep;
}

// `pattern[e]` true = QS for both experts. Epochs are 60 s.
tr::SubjectData toy_subject(const std::string& id, const std::vector<bool>& pattern,
                            const std::vector<std::string>& channels, std::uint64_t seed) {
  std::vector<neosleep::dsp::EpochTensor> epochs;
  AnnotationTrack a{"E1", {}, 1.0};
  for (std::size_t e = 0; e < pattern.size(); ++e) {
    if (pattern[e]) a.qs_intervals.push_back({60.0 * e, 60.0});
    for (std::size_t c = 0; c < channels.size(); ++c)
      epochs.push_back(toy_epoch(pattern[e], static_cast<int>(e), channels[c], seed * 1000 + e * 10 + c));
  }
  AnnotationTrack b = a;
  b.expert_id = "E2";
  return tr::make_subject(id, std::move(epochs), {a, b});
}

}  // namespace

TEST(Adam, HandComputedFirstStep) {
  tr::TrainConfig cfg;
  std::vector<double> w{1.0};
  const std::vector<double> g{0.5};
  tr::AdamState<double> st;
  tr::adam_step<double>(std::span(w), std::span<const double>(g), st, cfg, cfg.lr);
  // m_hat = 0.5, v_hat = 0.25: step = lr * 0.5 / (0.5 + eps)
  EXPECT_NEAR(w[0], 1.0 - 0.001 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w[0], 0.999, 1e-10);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  tr::TrainConfig cfg;
  std::vector<double> w{0.3, -2.0};
  const std::vector<double> g{0.0, 0.0};
  tr::AdamState<double> st;
  tr::adam_step<double>(std::span(w), std::span<const double>(g), st, cfg, cfg.lr);
  EXPECT_EQ(w[0], 0.3);
  EXPECT_EQ(w[1], -2.0);
}

TEST(Adam, OddSymmetryAndStepBound) {
  tr::TrainConfig cfg;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = std::pow(10.0, std::uniform_real_distribution<double>(-6, 3)(rng));
    std::vector<double> g(20), ng(20), w0(20), a, b;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = scale * n(rng);
      ng[i] = -g[i];
      w0[i] = n(rng);
    }
    a = w0;
    b = w0;
    tr::AdamState<double> sa, sb;
    tr::adam_step<double>(std::span(a), std::span<const double>(g), sa, cfg, cfg.lr);
    tr::adam_step<double>(std::span(b), std::span<const double>(ng), sb, cfg, cfg.lr);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_NEAR(a[i] - w0[i], -(b[i] - w0[i]), 1e-15);
      EXPECT_LE(std::abs(a[i] - w0[i]), cfg.lr * (1 + 1e-6));
    }
  }
}

TEST(Schedule, DecreasingThenFlatStopsAfterPatience) {
  const int patience = 35;
  tr::TrainingSchedule s(0.001, 0.1, 20, patience, 500);
  double loss = 1.0;
  for (int e = 0; e <= 10; ++e) s.record(loss -= 0.05);
  EXPECT_EQ(s.best_epoch(), 10);
  int stopped_at = -1;
  while (!s.should_stop()) {
    s.record(loss);
    stopped_at = s.epoch();
  }
  EXPECT_EQ(stopped_at, 10 + patience);
  EXPECT_EQ(s.best_epoch(), 10);
}

TEST(Schedule, FlatLossReducesRateEveryPlateau) {
  tr::TrainingSchedule s(0.001, 0.1, 20, 1000, 500);
  for (int e = 0; e <= 45; ++e) {
    s.record(0.7);
    if (e == 19) {
      EXPECT_DOUBLE_EQ(s.lr(), 1e-3);
    }
    if (e == 20) {
      EXPECT_DOUBLE_EQ(s.lr(), 1e-4);
    }
    if (e == 39) {
      EXPECT_DOUBLE_EQ(s.lr(), 1e-4);
    }
    if (e == 40) {
      EXPECT_NEAR(s.lr(), 1e-5, 1e-20);
    }
  }
}

TEST(Schedule, HardStopAtMaxEpochs) {
  tr::TrainingSchedule s(0.001, 0.1, 20, 35, 5);
  int epochs = 0;
  double loss = 1.0;
  while (!s.should_stop()) {
    s.record(loss *= 0.9);
    ++epochs;
  }
  EXPECT_EQ(epochs, 5);
}

TEST(BuildDataset, ExpertCombinations) {
  auto ep = toy_epoch(true, 0, "F3-P3", 1);
  auto make = [&](std::vector<neosleep::TimeInterval> e1, std::vector<neosleep::TimeInterval> e2) {
    return tr::build_dataset(tr::make_subject("s", {ep}, {{"E1", e1, 1.0}, {"E2", e2, 1.0}}));
  };
  const neosleep::TimeInterval full{0, 60}, part{0, 30};
  auto both_qs = make({full}, {full});
  EXPECT_EQ(both_qs.size(), 2u);
  EXPECT_EQ(both_qs.count(nn::kClassQS), 2u);
  auto disagree = make({full}, {});
  EXPECT_EQ(disagree.size(), 2u);
  EXPECT_EQ(disagree.count(nn::kClassQS), 1u);
  EXPECT_EQ(disagree.count(nn::kClassAS), 1u);
  auto one_excluded = make({part}, {full});
  ASSERT_EQ(one_excluded.size(), 1u);
  EXPECT_EQ(one_excluded.samples[0].label, nn::kClassQS);
  EXPECT_EQ(one_excluded.samples[0].expert_id, "E2");

  ep.valid = false;
  EXPECT_TRUE(make({full}, {full}).empty());
}

TEST(InnerSplit, GroupedStratifiedDeterministic) {
  std::vector<bool> pattern(60);
  for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = (i % 4 == 0);
  auto subj = toy_subject("a", pattern, {"F3-P3", "F4-P4"}, 3);
  auto d = tr::build_dataset(subj);
  ASSERT_EQ(d.size(), 60u * 2 * 2);
  const auto s1 = tr::inner_split(d, 0.1, 77);
  const auto s2 = tr::inner_split(d, 0.1, 77);
  EXPECT_EQ(s1.train.size() + s1.val.size(), d.size());
  std::set<int> train_epochs, val_epochs;
  for (const auto& s : s1.train.samples) train_epochs.insert(s.epoch->epoch_index);
  for (const auto& s : s1.val.samples) val_epochs.insert(s.epoch->epoch_index);
  for (int e : val_epochs) EXPECT_FALSE(train_epochs.count(e)) << "epoch " << e << " on both sides";
  EXPECT_EQ(val_epochs.size(), 7u);  // 10% of 45 AS + 15 QS groups: round(4.5) + round(1.5)
  EXPECT_GT(s1.val.count(nn::kClassQS), 0u);
  EXPECT_GT(s1.val.count(nn::kClassAS), 0u);
  ASSERT_EQ(s1.val.size(), s2.val.size());
  for (std::size_t i = 0; i < s1.val.size(); ++i) EXPECT_EQ(s1.val.samples[i].key(), s2.val.samples[i].key());
  const auto s3 = tr::inner_split(d, 0.1, 78);
  std::set<int> other;
  for (const auto& s : s3.val.samples) other.insert(s.epoch->epoch_index);
  EXPECT_NE(other, val_epochs);
}

TEST(Train, SingleClassDatasetRejected) {
  auto subj = toy_subject("a", std::vector<bool>(6, false), {"F3-P3"}, 1);
  try {
    tr::train(tr::build_dataset(subj), {}, 35);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::single_class_dataset);
  }
}

TEST(Train, LearnsSeparableToyData) {
  std::vector<bool> pattern(50);
  for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = (i % 2 == 0);
  auto subj = toy_subject("toy", pattern, {"F3-P3"}, 5);
  subj.tracks.resize(1);
  const auto d = tr::build_dataset(subj);
  ASSERT_EQ(d.size(), 50u);
  tr::TrainConfig cfg;
  cfg.max_epochs = 200;
  cfg.seed = 12;
  double best = INFINITY;
  int reached = -1;
  const auto r = tr::fit(nn::build_model<float>(nn::reference_architecture(), 3), d, d, cfg, 200,
                         [&](const tr::HistoryRow& h) {
                           best = std::min(best, h.val_loss);
                           if (h.val_loss < 0.05 && reached < 0) reached = h.epoch;
                         });
  EXPECT_LT(best, 0.05);
  EXPECT_GE(reached, 0);
  EXPECT_LT(reached, 200);
}

TEST(Train, ReturnedModelIsBestCheckpoint) {
  std::vector<bool> pattern(40);
  for (std::size_t i = 0; i < pattern.size(); ++i) pattern[i] = (i % 3 == 0);
  const auto d = tr::build_dataset(toy_subject("x", pattern, {"F3-P3"}, 9));
  tr::TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.seed = 2;
  const auto r = tr::train(d, cfg, 4);
  ASSERT_FALSE(r.history.empty());
  for (const auto& h : r.history) EXPECT_GE(h.val_loss, r.best_val_loss);
  EXPECT_EQ(r.history[static_cast<std::size_t>(r.best_epoch)].val_loss, r.best_val_loss);
  const auto split = tr::inner_split(d, cfg.inner_val_fraction, cfg.seed);
  EXPECT_NEAR(tr::evaluate_loss(r.model, split.val), r.best_val_loss, 1e-12);

  std::ostringstream csv;
  tr::write_history_csv(csv, r.history);
  EXPECT_EQ(csv.str().substr(0, 30), "epoch,train_loss,val_loss,lr\n0");
}

class LosoTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const std::vector<std::string> ch{"F3-P3", "F4-P4"};
    subjects_.push_back(toy_subject("s2", {true, false, false, true, false, false}, ch, 21));
    subjects_.push_back(toy_subject("s1", {false, true, false, false, true, false, false}, ch, 11));
    subjects_.push_back(toy_subject("s3", {false, false, true, true, false}, ch, 31));
    // a rejected epoch and an epoch excluded by the experts
    auto& s1 = subjects_[1];
    auto bad = std::make_shared<neosleep::dsp::EpochTensor>(*s1.epochs[4]);
    bad->valid = false;
    s1.epochs[4] = bad;
    s1.tracks[0].qs_intervals.push_back({6 * 60.0, 20.0});
    cfg_.max_epochs = 3;
    cfg_.seed = 5;
    tr::LosoOptions one;
    results_ = tr::loso(subjects_, cfg_, one);
  }
  static inline std::vector<tr::SubjectData> subjects_;
  static inline tr::TrainConfig cfg_;
  static inline std::vector<tr::FoldResult> results_;
};

TEST_F(LosoTest, OneFoldPerSubject) {
  ASSERT_EQ(results_.size(), 3u);
  EXPECT_EQ(results_[0].held_out_subject, "s1");
  EXPECT_EQ(results_[1].held_out_subject, "s2");
  EXPECT_EQ(results_[2].held_out_subject, "s3");
}

TEST_F(LosoTest, NoHeldOutEpochInTraining) {
  for (const auto& f : results_) {
    for (const auto& k : f.train_keys) EXPECT_NE(k.subject_id, f.held_out_subject);
    for (const auto& k : f.val_keys) EXPECT_NE(k.subject_id, f.held_out_subject);
    EXPECT_FALSE(f.train_keys.empty());
    EXPECT_FALSE(f.val_keys.empty());
  }
}

TEST_F(LosoTest, PredictionsCoverEveryValidEpochOnce) {
  for (const auto& f : results_) {
    const auto& subj = *std::find_if(subjects_.begin(), subjects_.end(),
                                     [&](const tr::SubjectData& s) { return s.subject_id == f.held_out_subject; });
    ASSERT_EQ(f.predictions.n_epochs(), static_cast<std::size_t>(subj.n_epochs()));
    ASSERT_EQ(f.predictions.channels, (std::vector<std::string>{"F3-P3", "F4-P4"}));
    std::size_t present = 0, valid = 0;
    for (const auto& row : f.predictions.p)
      for (const auto& v : row) present += v.has_value();
    for (const auto& ep : subj.epochs) valid += ep->valid;
    EXPECT_EQ(present, valid);
    f.predictions.validate();
  }
  EXPECT_FALSE(results_[0].predictions.p[2][0].has_value());  // rejected F3-P3 epoch of s1
}

TEST_F(LosoTest, DeterministicAcrossJobCounts) {
  tr::LosoOptions two;
  two.jobs = 2;
  const auto again = tr::loso(subjects_, cfg_, two);
  ASSERT_EQ(again.size(), results_.size());
  for (std::size_t k = 0; k < again.size(); ++k) {
    EXPECT_EQ(again[k].predictions.p, results_[k].predictions.p);
    EXPECT_EQ(again[k].val_keys, results_[k].val_keys);
    EXPECT_EQ(again[k].training.model.layers[0].weight, results_[k].training.model.layers[0].weight);
  }
}

TEST(Loso, TooFewSubjects) {
  std::vector<tr::SubjectData> one{toy_subject("a", {true, false}, {"F3-P3"}, 1)};
  try {
    tr::loso(one, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_few_subjects);
  }
}
