#pragma once

// Minimal EDF (not EDF+) reader and writer. Samples are 16-bit little-endian
// two's complement; each signal maps its digital range linearly onto its
// physical range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "neosleep/error.hpp"
#include "neosleep/recording.hpp"

namespace neosleep {

struct EdfSignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0.0;
  double physical_max = 0.0;
  long digital_min = 0;
  long digital_max = 0;
  long samples_per_record = 0;
};

struct EdfHeader {
  std::string version;
  std::string patient;
  std::string recording;
  std::string start_date;
  std::string start_time;
  long header_bytes = 0;
  long n_records = 0;
  double record_duration_s = 0.0;
  std::vector<EdfSignalHeader> signals;
};

namespace edf_detail {

inline std::string field(const std::string& buf, std::size_t& pos, std::size_t width) {
  if (pos + width > buf.size()) throw Error(Errc::malformed_header, "header truncated");
  std::string s = buf.substr(pos, width);
  pos += width;
  return detail::trim(s);
}

inline long to_long(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::malformed_header, std::string(what) + " is not an integer: '" + s + "'");
  }
}

inline double to_double(const std::string& s, const char* what) {
  return detail::parse_double(s, Errc::malformed_header, what);
}

inline std::string pad(const std::string& s, std::size_t width) {
  std::string out = s.substr(0, width);
  out.resize(width, ' ');
  return out;
}

// EDF numeric fields are 8 ASCII characters; shorten the decimal form until it fits.
inline std::string number(double v, std::size_t width = 8) {
  char buf[64];
  for (int prec = 6; prec >= 0; --prec) {
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    std::string s(buf);
    if (s.find('.') != std::string::npos) {
      while (!s.empty() && s.back() == '0') s.pop_back();
      if (!s.empty() && s.back() == '.') s.pop_back();
    }
    if (s == "-0") s = "0";
    if (s.size() <= width) return pad(s, width);
  }
  throw Error(Errc::io, "value does not fit an EDF field: " + std::to_string(v));
}

inline bool is_numeric_signal(const EdfSignalHeader& sig) {
  return sig.label != "EDF Annotations" && sig.digital_max > sig.digital_min &&
         sig.physical_max != sig.physical_min && sig.samples_per_record > 0;
}

}  // namespace edf_detail

inline EdfHeader parse_edf_header(const std::string& bytes) {
  using namespace edf_detail;
  if (bytes.size() < 256) throw Error(Errc::malformed_header, "file shorter than the 256-byte header");
  EdfHeader h;
  std::size_t pos = 0;
  h.version = field(bytes, pos, 8);
  if (h.version != "0") throw Error(Errc::malformed_header, "version field is '" + h.version + "'");
  h.patient = field(bytes, pos, 80);
  h.recording = field(bytes, pos, 80);
  h.start_date = field(bytes, pos, 8);
  h.start_time = field(bytes, pos, 8);
  h.header_bytes = to_long(field(bytes, pos, 8), "header length");
  field(bytes, pos, 44);
  h.n_records = to_long(field(bytes, pos, 8), "record count");
  h.record_duration_s = to_double(field(bytes, pos, 8), "record duration");
  const long ns = to_long(field(bytes, pos, 4), "signal count");
  if (ns < 1) throw Error(Errc::malformed_header, "no signals");
  if (h.header_bytes != 256 * (ns + 1))
    throw Error(Errc::malformed_header, "header length " + std::to_string(h.header_bytes) +
                                            " does not match " + std::to_string(ns) + " signals");
  if (static_cast<long>(bytes.size()) < h.header_bytes)
    throw Error(Errc::malformed_header, "file shorter than declared header");
  if (h.record_duration_s <= 0.0) throw Error(Errc::malformed_header, "record duration must be positive");

  const auto n = static_cast<std::size_t>(ns);
  h.signals.resize(n);
  auto each = [&](std::size_t width, auto&& assign) {
    for (std::size_t i = 0; i < n; ++i) assign(h.signals[i], field(bytes, pos, width));
  };
  each(16, [](EdfSignalHeader& s, std::string v) { s.label = std::move(v); });
  each(80, [](EdfSignalHeader& s, std::string v) { s.transducer = std::move(v); });
  each(8, [](EdfSignalHeader& s, std::string v) { s.physical_dimension = std::move(v); });
  each(8, [](EdfSignalHeader& s, std::string v) { s.physical_min = to_double(v, "physical minimum"); });
  each(8, [](EdfSignalHeader& s, std::string v) { s.physical_max = to_double(v, "physical maximum"); });
  each(8, [](EdfSignalHeader& s, std::string v) { s.digital_min = to_long(v, "digital minimum"); });
  each(8, [](EdfSignalHeader& s, std::string v) { s.digital_max = to_long(v, "digital maximum"); });
  each(80, [](EdfSignalHeader&, std::string) {});
  each(8, [](EdfSignalHeader& s, std::string v) { s.samples_per_record = to_long(v, "samples per record"); });
  each(32, [](EdfSignalHeader&, std::string) {});
  return h;
}

inline Recording parse_edf(const std::string& bytes) {
  const EdfHeader h = parse_edf_header(bytes);
  for (const auto& sig : h.signals)
    if (!edf_detail::is_numeric_signal(sig))
      throw Error(Errc::unsupported_transducer, "signal '" + sig.label + "' is not a numeric channel");

  long samples_per_record = 0;
  for (const auto& sig : h.signals) samples_per_record += sig.samples_per_record;
  const std::size_t record_bytes = static_cast<std::size_t>(samples_per_record) * 2;
  const std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(h.header_bytes);
  long n_records = h.n_records;
  if (n_records == -1) {
    if (data_bytes % record_bytes != 0)
      throw Error(Errc::inconsistent_record_length, "data section is not a whole number of records");
    n_records = static_cast<long>(data_bytes / record_bytes);
  }
  if (n_records < 0 || data_bytes != static_cast<std::size_t>(n_records) * record_bytes)
    throw Error(Errc::inconsistent_record_length,
                "expected " + std::to_string(n_records) + " records of " + std::to_string(record_bytes) +
                    " bytes, data section holds " + std::to_string(data_bytes));

  Recording rec;
  {
    const auto space = h.patient.find(' ');
    rec.subject_id = h.patient.substr(0, space);
  }
  rec.duration_s = static_cast<double>(n_records) * h.record_duration_s;
  rec.channels.resize(h.signals.size());
  std::vector<double> scale(h.signals.size()), offset(h.signals.size());
  for (std::size_t s = 0; s < h.signals.size(); ++s) {
    const auto& sig = h.signals[s];
    auto& ch = rec.channels[s];
    ch.label = sig.label;
    ch.fs = static_cast<double>(sig.samples_per_record) / h.record_duration_s;
    ch.samples.reserve(static_cast<std::size_t>(n_records * sig.samples_per_record));
    scale[s] = (sig.physical_max - sig.physical_min) /
               static_cast<double>(sig.digital_max - sig.digital_min);
    offset[s] = sig.physical_min - scale[s] * static_cast<double>(sig.digital_min);
    // Millivolt and volt channels are brought to microvolts.
    if (sig.physical_dimension == "mV") {
      scale[s] *= 1e3;
      offset[s] *= 1e3;
    } else if (sig.physical_dimension == "V") {
      scale[s] *= 1e6;
      offset[s] *= 1e6;
    }
  }

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.header_bytes;
  for (long r = 0; r < n_records; ++r) {
    for (std::size_t s = 0; s < h.signals.size(); ++s) {
      auto& out = rec.channels[s].samples;
      for (long i = 0; i < h.signals[s].samples_per_record; ++i, p += 2) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
        out.push_back(scale[s] * raw + offset[s]);
      }
    }
  }
  return rec;
}

inline Recording read_edf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_edf(bytes);
}

struct EdfWriteOptions {
  double record_duration_s = 1.0;
  /// Symmetric physical range per channel in microvolts; <= 0 picks the
  /// smallest whole-microvolt range that holds the channel.
  double physical_range_uv = 0.0;
  std::string start_date = "01.01.00";
  std::string start_time = "00.00.00";
};

/// Serializes `rec` as EDF. Every channel must hold a whole number of
/// records at its own rate.
inline std::string format_edf(const Recording& rec, const EdfWriteOptions& opt = {}) {
  using namespace edf_detail;
  const std::size_t ns = rec.channels.size();
  if (ns == 0) throw Error(Errc::io, "cannot write a recording without channels");
  std::vector<long> spr(ns);
  long n_records = -1;
  for (std::size_t s = 0; s < ns; ++s) {
    const auto& ch = rec.channels[s];
    const double per_record = ch.fs * opt.record_duration_s;
    spr[s] = std::lround(per_record);
    if (spr[s] < 1 || std::abs(per_record - spr[s]) > 1e-9)
      throw Error(Errc::io, ch.label + ": rate does not give whole samples per record");
    if (ch.samples.size() % static_cast<std::size_t>(spr[s]) != 0)
      throw Error(Errc::io, ch.label + ": length is not a whole number of records");
    const long records = static_cast<long>(ch.samples.size()) / spr[s];
    if (n_records >= 0 && records != n_records) throw Error(Errc::io, "channels span different durations");
    n_records = records;
  }

  std::vector<double> range(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    if (opt.physical_range_uv > 0.0) {
      range[s] = opt.physical_range_uv;
    } else {
      double peak = 0.0;
      for (double v : rec.channels[s].samples) peak = std::max(peak, std::abs(v));
      range[s] = std::max(1.0, std::ceil(peak));
    }
  }

  std::string out;
  out += pad("0", 8);
  out += pad(rec.subject_id.empty() ? "X" : rec.subject_id, 80);
  out += pad("Startdate X X X X", 80);
  out += pad(opt.start_date, 8);
  out += pad(opt.start_time, 8);
  out += pad(std::to_string(256 * (ns + 1)), 8);
  out += pad("", 44);
  out += pad(std::to_string(n_records), 8);
  out += number(opt.record_duration_s);
  out += pad(std::to_string(ns), 4);
  for (const auto& ch : rec.channels) out += pad(ch.label, 16);
  for (std::size_t s = 0; s < ns; ++s) out += pad("AgAgCl electrode", 80);
  for (std::size_t s = 0; s < ns; ++s) out += pad("uV", 8);
  for (std::size_t s = 0; s < ns; ++s) out += number(-range[s]);
  for (std::size_t s = 0; s < ns; ++s) out += number(range[s]);
  for (std::size_t s = 0; s < ns; ++s) out += pad("-32768", 8);
  for (std::size_t s = 0; s < ns; ++s) out += pad("32767", 8);
  for (std::size_t s = 0; s < ns; ++s) out += pad("HP:0.1Hz", 80);
  for (std::size_t s = 0; s < ns; ++s) out += pad(std::to_string(spr[s]), 8);
  for (std::size_t s = 0; s < ns; ++s) out += pad("", 32);

  out.reserve(out.size() + 2 * static_cast<std::size_t>(n_records) *
                               static_cast<std::size_t>(std::accumulate(spr.begin(), spr.end(), 0L)));
  for (long r = 0; r < n_records; ++r) {
    for (std::size_t s = 0; s < ns; ++s) {
      const double scale = 65535.0 / (2.0 * range[s]);
      const auto& x = rec.channels[s].samples;
      for (long i = 0; i < spr[s]; ++i) {
        const double v = x[static_cast<std::size_t>(r * spr[s] + i)];
        const double digital = std::round((v + range[s]) * scale - 32768.0);
        const auto d = static_cast<std::int16_t>(std::clamp(digital, -32768.0, 32767.0));
        const auto u = static_cast<std::uint16_t>(d);
        out.push_back(static_cast<char>(u & 0xFF));
        out.push_back(static_cast<char>(u >> 8));
      }
    }
  }
  return out;
}

inline void write_edf(const std::string& path, const Recording& rec, const EdfWriteOptions& opt = {}) {
  const std::string bytes = format_edf(rec, opt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace neosleep
