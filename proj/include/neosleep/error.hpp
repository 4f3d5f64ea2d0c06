#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace neosleep {

enum class Errc {
  // recording_io
  malformed_header,
  inconsistent_record_length,
  unsupported_transducer,
  missing_channel,
  negative_duration,
  overlap,
  mixed_sampling_rates,
  // dsp
  nyquist_violation,
  too_short,
  // nn
  shape_mismatch,
  invalid_epoch,
  checksum_mismatch,
  // trainer
  single_class_dataset,
  too_few_subjects,
  diverged,
  // sst
  even_window,
  // metrics / baseline
  length_mismatch,
  undefined_metric,
  single_class,
  zero_variance,
  // cli
  config,
  io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::malformed_header: return "MalformedHeader";
    case Errc::inconsistent_record_length: return "InconsistentRecordLength";
    case Errc::unsupported_transducer: return "UnsupportedTransducer";
    case Errc::missing_channel: return "MissingChannel";
    case Errc::negative_duration: return "NegativeDuration";
    case Errc::overlap: return "OverlapError";
    case Errc::mixed_sampling_rates: return "MixedSamplingRates";
    case Errc::nyquist_violation: return "NyquistViolation";
    case Errc::too_short: return "TooShort";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::invalid_epoch: return "InvalidEpoch";
    case Errc::checksum_mismatch: return "ChecksumMismatch";
    case Errc::single_class_dataset: return "SingleClassDataset";
    case Errc::too_few_subjects: return "TooFewSubjects";
    case Errc::diverged: return "TrainingDiverged";
    case Errc::even_window: return "EvenWindow";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::undefined_metric: return "UndefinedMetric";
    case Errc::single_class: return "SingleClass";
    case Errc::zero_variance: return "ZeroVariance";
    case Errc::config: return "ConfigError";
    case Errc::io: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace neosleep
