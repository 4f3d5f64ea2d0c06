#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neosleep/error.hpp"

namespace neosleep::sst {

/// P(QS) per epoch and channel; nullopt marks a rejected epoch.
struct ProbSeries {
  std::vector<std::string> channels;
  std::vector<std::vector<std::optional<double>>> p;  // [epoch][channel]

  std::size_t n_epochs() const { return p.size(); }
  std::size_t n_channels() const { return channels.size(); }

  void validate() const {
    for (std::size_t e = 0; e < p.size(); ++e) {
      if (p[e].size() != channels.size())
        throw Error(Errc::shape_mismatch, "epoch " + std::to_string(e) + " has the wrong number of channels");
      for (const auto& v : p[e])
        if (v && !(*v >= 0.0 && *v <= 1.0))
          throw Error(Errc::shape_mismatch, "probability outside [0, 1] at epoch " + std::to_string(e));
    }
  }

  /// One channel as its own series.
  ProbSeries column(std::size_t c) const {
    ProbSeries out;
    out.channels = {channels.at(c)};
    for (const auto& row : p) out.p.push_back({row[c]});
    return out;
  }
};

}  // namespace neosleep::sst
