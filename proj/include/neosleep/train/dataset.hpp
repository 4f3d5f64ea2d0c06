#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "neosleep/dsp/epochs.hpp"
#include "neosleep/nn/model.hpp"
#include "neosleep/nn/network.hpp"
#include "neosleep/recording.hpp"

namespace neosleep::train {

/// Identifies one channel-epoch of one subject.
struct SampleKey {
  std::string subject_id;
  std::string channel;
  int epoch_index = 0;
  auto operator<=>(const SampleKey&) const = default;
};

struct LabeledSample {
  std::shared_ptr<const dsp::EpochTensor> epoch;
  int label = nn::kClassAS;
  std::string subject_id;
  std::string expert_id;

  SampleKey key() const { return {subject_id, epoch->channel_label, epoch->epoch_index}; }
};

struct LabeledDataset {
  std::vector<LabeledSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t count(int label) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [label](const LabeledSample& s) { return s.label == label; }));
  }
  void append(const LabeledDataset& other) {
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  }
};

/// Preprocessed epochs (all channels) and expert tracks for one subject.
struct SubjectData {
  std::string subject_id;
  std::vector<std::shared_ptr<const dsp::EpochTensor>> epochs;
  std::vector<AnnotationTrack> tracks;

  int n_epochs() const {
    int n = 0;
    for (const auto& e : epochs) n = std::max(n, e->epoch_index + 1);
    return n;
  }
};

inline SubjectData make_subject(std::string subject_id, std::vector<dsp::EpochTensor> epochs,
                                std::vector<AnnotationTrack> tracks) {
  SubjectData s;
  s.subject_id = std::move(subject_id);
  for (auto& e : epochs) s.epochs.push_back(std::make_shared<const dsp::EpochTensor>(std::move(e)));
  s.tracks = std::move(tracks);
  return s;
}

/// One sample per (valid epoch, expert) with a QS or AS label, so epochs the
/// experts disagree on appear once with each label.
inline LabeledDataset build_dataset(const SubjectData& subject) {
  LabeledDataset d;
  const int n = subject.n_epochs();
  std::vector<std::vector<EpochLabel>> per_expert;
  for (const auto& t : subject.tracks) per_expert.push_back(epoch_labels(t, n));
  for (const auto& ep : subject.epochs) {
    if (!ep->valid) continue;
    for (std::size_t x = 0; x < subject.tracks.size(); ++x) {
      const SleepLabel l = per_expert[x][static_cast<std::size_t>(ep->epoch_index)].label;
      if (l == SleepLabel::Excluded) continue;
      d.samples.push_back({ep, l == SleepLabel::QS ? nn::kClassQS : nn::kClassAS, subject.subject_id,
                           subject.tracks[x].expert_id});
    }
  }
  return d;
}

inline LabeledDataset build_dataset(std::span<const SubjectData> subjects) {
  LabeledDataset d;
  for (const auto& s : subjects) d.append(build_dataset(s));
  return d;
}

struct Split {
  LabeledDataset train, val;
};

/// Holds out `fraction` of the (subject, epoch) groups as validation. Every
/// channel and expert copy of an epoch stays on one side. Groups are
/// stratified as all-AS, all-QS or mixed (disagreement).
inline Split inner_split(const LabeledDataset& d, double fraction, std::uint64_t seed) {
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < d.samples.size(); ++i)
    groups[{d.samples[i].subject_id, d.samples[i].epoch->epoch_index}].push_back(i);

  std::vector<std::vector<const std::vector<std::size_t>*>> strata(3);
  for (const auto& [key, members] : groups) {
    bool qs = false, as = false;
    for (auto i : members) (d.samples[i].label == nn::kClassQS ? qs : as) = true;
    strata[qs && as ? 2 : (qs ? 1 : 0)].push_back(&members);
  }

  std::vector<char> in_val(d.samples.size(), 0);
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& st = strata[s];
    std::mt19937_64 rng(nn::derive_seed(seed, 0xA11CE + s));
    std::shuffle(st.begin(), st.end(), rng);
    auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(st.size())));
    if (n_val == 0 && s < 2 && st.size() >= 2) n_val = 1;
    for (std::size_t g = 0; g < n_val; ++g)
      for (auto i : *st[g]) in_val[i] = 1;
  }

  Split out;
  for (std::size_t i = 0; i < d.samples.size(); ++i) (in_val[i] ? out.val : out.train).samples.push_back(d.samples[i]);
  return out;
}

}  // namespace neosleep::train
