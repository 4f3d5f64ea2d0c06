// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "gradcheck.hpp"
#include "neosleep/app/pipeline.hpp"
#include "neosleep/baseline/envelope.hpp"
#include "neosleep/dsp/butterworth.hpp"
#include "neosleep/dsp/resample.hpp"
#include "neosleep/metrics/metrics.hpp"
#include "neosleep/nn/model.hpp"
#include "neosleep/synth/synth.hpp"

namespace fs = std::filesystem;
using namespace neosleep;

namespace {

constexpr double kPi = std::numbers::pi;

// LOSO epochs are capped so the synthetic end-to-end run fits the time
// budget on a single core
constexpr int kLosoMaxEpochs = 15;

int failures = 0;

void verdict(int id, const std::string& name, bool ok, const std::string& detail) {
  std::cout << fmt::format("{} [{:2}] {}: {}", ok ? "PASS" : "FAIL", id, name, detail) << std::endl;
  failures += !ok;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> sine(double amp, double hz, double fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * kPi * hz * static_cast<double>(i) / fs);
  return x;
}

double fitted_amplitude(const std::vector<double>& x, double hz, double fs, std::size_t lo, std::size_t hi) {
  double ss = 0, cc = 0, sc = 0, xs = 0, xc = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    const double s = std::sin(2 * kPi * hz * i / fs), c = std::cos(2 * kPi * hz * i / fs);
    ss += s * s;
    cc += c * c;
    sc += s * c;
    xs += x[i] * s;
    xc += x[i] * c;
  }
  const double det = ss * cc - sc * sc;
  return std::hypot((xs * cc - xc * sc) / det, (xc * ss - xs * sc) / det);
}

double mean_square(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  double p = 0;
  for (std::size_t i = lo; i < hi; ++i) p += x[i] * x[i];
  return p / static_cast<double>(hi - lo);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  std::set<nn::LayerKind> kinds;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto c = gradcheck::random_case(seed);
    for (const auto& s : c.model.specs) kinds.insert(s.kind);
    const auto r = gradcheck::check(c.model, c.input, c.batch, c.targets, nn::Mode::train, seed, 1e-4);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    skipped += r.skipped_at_kink;
  }
  const double t = seconds_since(t0);
  const bool all_kinds = kinds.size() == 8;  // conv, bn, relu, maxpool, gap, dropout, dense, softmax
  verdict(1, "gradient check", worst < 1e-4 && all_kinds && t < 60 && checked > 0,
          fmt::format("10 configs, {} layer kinds, {} parameters probed ({} at kinks skipped), max rel err {:.2e} "
                      "(< 1e-4), {:.1f} s",
                      kinds.size(), checked, skipped, worst, t));
}

void criterion_param_count() {
  // conv: out*in*k + out, batchnorm: 2*channels, dense: out*in + out
  const std::size_t closed = (8 * 1 * 3 + 8) + 2 * 8 + (16 * 8 * 11 + 16) + 2 * 16 + (24 * 16 * 9 + 24) + 2 * 24 +
                             (24 * 2 + 2);
  const auto model = nn::build_model<float>(nn::reference_architecture(), 1);
  const std::size_t reported = model.total_params();
  verdict(2, "parameter count", reported == 5082 && closed == 5082,
          fmt::format("reported {}, closed form {}, expected 5082", reported, closed));
}

void criterion_filter() {
  const double fs = 256;
  const auto spec = dsp::design_butter_bandpass(4, 0.5, 30, fs);
  auto gain = [&](double f) { return std::abs(dsp::frequency_response(spec, f)); };
  auto db = [&](double f) { return 20 * std::log10(gain(f)); };
  double pass_min = 1e9;
  for (double f = 2; f <= 20; f += 0.01) pass_min = std::min(pass_min, gain(f));
  const double lo = db(0.5), hi = db(30), stop = db(45);
  // applied zero-phase (forward + backward) response squares the magnitude
  const bool pass_ok = pass_min >= 0.9, edges_ok = std::abs(lo + 3) <= 0.5 && std::abs(hi + 3) <= 0.5,
             stop_ok = stop <= -30;
  verdict(3, "band-pass filter contract", pass_ok && edges_ok && stop_ok,
          fmt::format("order 4 (4 biquads): min |H| 2-20 Hz {:.4f} (>= 0.9), {:.2f} dB at 0.5 Hz, {:.2f} dB at 30 Hz "
                      "(-3 +/- 0.5), {:.2f} dB at 45 Hz (<= -30){}; zero-phase application gives {:.2f} dB at 45 Hz "
                      "but {:.2f} dB at the edges",
                      pass_min, lo, hi, stop, stop_ok ? "" : " NOT MET", 2 * stop, 2 * hi));
}

void criterion_resampler() {
  const auto x50 = sine(10, 50, 256, 30 * 256);
  const auto y50 = dsp::resample(x50, 256, 64);
  const double atten = 10 * std::log10(mean_square(y50, 128, y50.size() - 128) / mean_square(x50, 0, x50.size()));
  const auto y5 = dsp::resample(sine(10, 5, 256, 30 * 256), 256, 64);
  const double ratio = fitted_amplitude(y5, 5, 64, 128, y5.size() - 128) / 10.0;
  verdict(4, "resampler contract", atten <= -40 && std::abs(ratio - 1) <= 0.01,
          fmt::format("50 Hz tone {:.1f} dB (<= -40), 5 Hz amplitude ratio {:.5f} (within 1%)", atten, ratio));
}

// Brute force from an expanded label vector, through the marginals. Each
// score is a ratio of exact integers, so a correctly rounded division has
// to agree bit for bit with any other exact form of the same ratio.
struct Oracle {
  double acc, prec, f1, kappa, kappa_float;
};

Oracle brute(const std::vector<SleepLabel>& pred, const std::vector<SleepLabel>& truth) {
  std::int64_t n = static_cast<std::int64_t>(pred.size()), agree = 0, pq = 0, tq = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    agree += pred[i] == truth[i];
    pq += pred[i] == SleepLabel::QS;
    tq += truth[i] == SleepLabel::QS;
    both += pred[i] == SleepLabel::QS && truth[i] == SleepLabel::QS;
  }
  const std::int64_t chance = pq * tq + (n - pq) * (n - tq);
  const double po = static_cast<double>(agree) / n;
  const double pe = (static_cast<double>(pq) / n) * (static_cast<double>(tq) / n) +
                    (static_cast<double>(n - pq) / n) * (static_cast<double>(n - tq) / n);
  return {po, static_cast<double>(both) / pq, static_cast<double>(2 * both) / (pq + tq),
          static_cast<double>(n * agree - chance) / (n * n - chance), (po - pe) / (1 - pe)};
}

void criterion_metrics() {
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  double kappa_float_err = 0;
  for (int t = 0; t < 1000; ++t) {
    std::uniform_int_distribution<int> cell(1, 60);
    const int tp = cell(rng), tn = cell(rng), fp = cell(rng), fn = cell(rng);
    std::vector<SleepLabel> pred, truth;
    auto add = [&](int k, SleepLabel p, SleepLabel q) {
      for (int i = 0; i < k; ++i) {
        pred.push_back(p);
        truth.push_back(q);
      }
    };
    add(tp, SleepLabel::QS, SleepLabel::QS);
    add(tn, SleepLabel::AS, SleepLabel::AS);
    add(fp, SleepLabel::QS, SleepLabel::AS);
    add(fn, SleepLabel::AS, SleepLabel::QS);
    std::vector<std::size_t> perm(pred.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SleepLabel> p2, t2;
    for (auto i : perm) {
      p2.push_back(pred[i]);
      t2.push_back(truth[i]);
    }
    const auto r = metrics::report(metrics::confusion(p2, t2));
    const auto o = brute(p2, t2);
    if (r.accuracy != o.acc || *r.precision != o.prec || *r.f1 != o.f1 || *r.kappa != o.kappa) ++mismatches;
    kappa_float_err = std::max(kappa_float_err, std::abs(*r.kappa - o.kappa_float));
  }
  const auto worked = metrics::report({40, 40, 10, 10});
  const bool worked_ok = std::abs(*worked.kappa - 0.6) < 1e-12 && worked.accuracy == 0.8;

  double auc_err = 0;
  for (int t = 0; t < 100; ++t) {
    std::uniform_int_distribution<int> len(5, 200), level(0, 9);
    const int n = len(rng);
    std::vector<double> s;
    std::vector<SleepLabel> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(level(rng) / 10.0);  // coarse grid forces ties
      y.push_back(i % 3 == 0 || rng() % 2 ? SleepLabel::QS : SleepLabel::AS);
    }
    if (std::count(y.begin(), y.end(), SleepLabel::AS) == 0) y[1] = SleepLabel::AS;
    double pairs = 0, wins = 0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (y[i] == SleepLabel::QS && y[j] == SleepLabel::AS) {
          pairs += 1;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    auc_err = std::max(auc_err, std::abs(metrics::roc_auc(s, y).auc - wins / pairs));
  }
  verdict(5, "metrics oracle", mismatches == 0 && kappa_float_err <= 1e-12 && worked_ok && auc_err <= 1e-12,
          fmt::format("{} of 1000 random matrices differ from brute force (exact compare; (Po-Pe)/(1-Pe) in floating "
                      "point within {:.1e}); 40/40/10/10 kappa {:.6f}; max |trapezoid - pairwise| AUC over 100 tied "
                      "instances {:.1e}",
                      mismatches, kappa_float_err, *worked.kappa, auc_err));
}

void criterion_envelope() {
  const double fs = 64;
  const auto env = baseline::analytic_envelope(sine(5, 10, fs, 60 * 64), fs);
  double worst = 0;
  for (std::size_t i = 64; i + 64 < env.size(); ++i) worst = std::max(worst, std::abs(env[i] - 5.0) / 5.0);
  verdict(6, "Hilbert envelope", worst <= 0.02,
          fmt::format("10 Hz 5 uV tone, max interior deviation {:.3f}% (<= 2%)", 100 * worst));
}

struct EndToEnd {
  std::vector<train::SubjectData> subjects;
  app::CrossvalResult cv;
  app::RunConfig cfg;
  double seconds = 0;
};

const metrics::ReportRow* pooled(const std::vector<metrics::ReportRow>& rows, const std::string& channel) {
  for (const auto& r : rows)
    if (r.subject == metrics::kPooled && r.channel == channel) return &r;
  return nullptr;
}

EndToEnd run_end_to_end() {
  EndToEnd e;
  e.cfg.seed = 20;
  e.cfg.synth.n_subjects = 8;
  e.cfg.synth.duration_min = 180;
  e.cfg.train.max_epochs = kLosoMaxEpochs;
  e.cfg.apply_seed();
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& s : synth::generate(e.cfg.synth)) {
    app::LoadedSubject ls{s.recording, {s.truth}};
    e.subjects.push_back(app::prepare_subject(ls, e.cfg));
  }
  train::LosoOptions opts;
  opts.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  e.cv = app::crossval(e.subjects, e.cfg, opts);
  e.seconds = seconds_since(t0);
  return e;
}

void criterion_end_to_end(const EndToEnd& e) {
  std::vector<double> channel_acc;
  double worst_acc = 1, worst_auc = 1;
  std::string per_channel;
  for (const auto& [a, b] : e.cfg.channel_pairs) {
    const auto* r = pooled(e.cv.rows, a + "-" + b);
    if (!r) {
      verdict(7, "synthetic LOSO end to end", false, "missing pooled row for " + a + "-" + b);
      return;
    }
    channel_acc.push_back(r->report.accuracy);
    worst_acc = std::min(worst_acc, r->report.accuracy);
    worst_auc = std::min(worst_auc, r->auc.value_or(0));
    per_channel += fmt::format(" {}-{} acc {:.3f} auc {:.3f};", a, b, r->report.accuracy, r->auc.value_or(0));
  }
  const double median = metrics::median_of(channel_acc);
  const auto* comb = pooled(e.cv.rows, metrics::kCombined);
  const double comb_acc = comb ? comb->report.accuracy : 0;
  const bool ok = worst_acc >= 0.90 && worst_auc >= 0.95 && comb_acc >= median && e.seconds < 20 * 60;
  int stopped_early = 0;
  for (const auto& f : e.cv.folds) stopped_early += f.training.stop_epoch + 1 < kLosoMaxEpochs;
  verdict(7, "synthetic LOSO end to end", ok,
          fmt::format("8 x 3 h, epochs capped at {} ({} of 8 folds stopped early);{} combined acc {:.3f} vs channel "
                      "median {:.3f}; {:.1f} min on {} thread(s) (< 20 min)",
                      kLosoMaxEpochs, stopped_early, per_channel, comb_acc, median, e.seconds / 60,
                      std::max(1u, std::thread::hardware_concurrency())));
}

void criterion_smoothing(const EndToEnd& e) {
  const auto* before = pooled(e.cv.rows, app::kCombinedUnsmoothed);
  const auto* after = pooled(e.cv.rows, metrics::kCombined);
  const bool ok = before && after && after->report.accuracy >= before->report.accuracy;
  verdict(8, "median smoothing does not hurt", ok,
          fmt::format("fused accuracy before {:.4f}, after 5-epoch median {:.4f}", before ? before->report.accuracy : 0,
                      after ? after->report.accuracy : 0));
}

std::size_t hygiene_violations(const std::vector<train::FoldResult>& folds) {
  std::size_t bad = 0;
  for (const auto& f : folds) {
    for (const auto* keys : {&f.train_keys, &f.val_keys})
      for (const auto& k : *keys) bad += k.subject_id == f.held_out_subject;
    std::set<std::pair<std::string, int>> train_groups;
    for (const auto& k : f.train_keys) train_groups.insert({k.subject_id, k.epoch_index});
    for (const auto& k : f.val_keys) bad += train_groups.count({k.subject_id, k.epoch_index});
  }
  return bad;
}

void criterion_hygiene(const EndToEnd& e) {
  // a second cohort with two disagreeing experts, so each epoch has two
  // labelled copies in the pool
  app::RunConfig cfg;
  cfg.seed = 31;
  cfg.synth.n_subjects = 4;
  cfg.synth.duration_min = 30;
  cfg.train.max_epochs = 1;
  cfg.apply_seed();
  std::vector<train::SubjectData> subjects;
  for (const auto& s : synth::generate(cfg.synth)) {
    AnnotationTrack second = s.truth;
    second.expert_id = "E2";
    for (auto& q : second.qs_intervals) q.duration_s = std::max(60.0, q.duration_s - 120.0);
    subjects.push_back(app::prepare_subject({s.recording, {s.truth, second}}, cfg));
  }
  const auto folds = train::loso(subjects, cfg.train);
  std::size_t keys = 0;
  for (const auto& f : folds) keys += f.train_keys.size() + f.val_keys.size();
  for (const auto& f : e.cv.folds) keys += f.train_keys.size() + f.val_keys.size();
  const std::size_t bad = hygiene_violations(folds) + hygiene_violations(e.cv.folds);
  verdict(9, "LOSO hygiene", bad == 0 && keys > 0,
          fmt::format("{} violations across {} folds and {} train/val samples (two-expert cohort included)", bad,
                      folds.size() + e.cv.folds.size(), keys));
}

int run_cli(const std::string& args) {
  const int status = std::system(("'" NEOSLEEP_CLI_PATH "' " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / "neosleep_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({"seed": 77, "synth": {"n_subjects": 3, "duration_min": 30},
                                         "train": {"max_epochs": 3}})";
  const std::string cfg = "--config '" + (dir / "cfg.json").string() + "'";
  const std::string data = " --data '" + (dir / "data").string() + "'";
  int rc = run_cli("synth " + cfg + " --out '" + (dir / "data").string() + "'");
  rc |= run_cli("crossval " + cfg + data + " --jobs 1 --out '" + (dir / "a").string() + "'");
  rc |= run_cli("crossval " + cfg + data + " --jobs 2 --out '" + (dir / "b").string() + "'");
  if (rc != 0) {
    verdict(10, "determinism", false, "CLI run failed");
    return;
  }
  int compared = 0, differ = 0;
  auto same = [&](const fs::path& rel) {
    ++compared;
    const auto a = slurp(dir / "a" / rel);
    differ += a.empty() || a != slurp(dir / "b" / rel);
  };
  same("metrics.csv");
  for (const auto& f : fs::directory_iterator(dir / "a" / "folds")) {
    same(fs::path("folds") / f.path().filename() / "model.bin");
    same(fs::path("folds") / f.path().filename() / "model.json");
  }
  verdict(10, "determinism", differ == 0 && compared == 7,
          fmt::format("two crossval runs (1 and 2 jobs), {} files compared, {} differ", compared, differ));
  fs::remove_all(dir);
}

void criterion_sst_structure(const EndToEnd& e) {
  app::RunConfig cfg = e.cfg;
  cfg.synth.seed = 4242;
  cfg.synth.duration_min = 240;
  cfg.synth.artifacts_per_hour = 6;
  auto s = synth::generate_subject(cfg.synth, 0);
  s.recording.subject_id = "artifacts";
  const auto subject = app::prepare_subject({s.recording, {s.truth}}, cfg);
  const auto out = app::postprocess(subject, train::predict_subject(e.cv.folds.front().training.model, subject), cfg);

  int order_violations = 0, gaps = 0, gaps_inside_dqs = 0, splits = 0;
  for (const auto& p : out.trace.points) {
    if (p.gap()) {
      ++gaps;
      continue;
    }
    order_violations += !(p.p_min <= p.p_mean && p.p_mean <= p.p_max);
  }
  std::set<int> artifact_epochs(s.artifact_epochs.begin(), s.artifact_epochs.end());
  int artifact_gaps = 0;
  for (int a : artifact_epochs) artifact_gaps += out.trace.points[static_cast<std::size_t>(a)].gap();
  for (const auto& q : out.dqs)
    for (int k = q.start_epoch; k < q.end_epoch; ++k) gaps_inside_dqs += out.trace.points[static_cast<std::size_t>(k)].gap();
  for (std::size_t i = 1; i < out.dqs.size(); ++i) {
    bool only_gaps = true;
    for (int k = out.dqs[i - 1].end_epoch; k < out.dqs[i].start_epoch; ++k)
      only_gaps &= out.trace.points[static_cast<std::size_t>(k)].gap();
    splits += only_gaps;
  }
  const bool ok = order_violations == 0 && gaps > 0 && artifact_gaps == static_cast<int>(artifact_epochs.size()) &&
                  gaps_inside_dqs == 0 && splits > 0;
  verdict(11, "SST structure", ok,
          fmt::format("{} epochs, p_min <= p_mean <= p_max violated {} times; {} of {} artifact epochs are gaps; "
                      "{} gaps inside DQS intervals; {} DQS intervals split only by gaps",
                      out.trace.points.size(), order_violations, artifact_gaps, artifact_epochs.size(), gaps_inside_dqs,
                      splits));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  criterion_gradients();
  criterion_param_count();
  criterion_filter();
  criterion_resampler();
  criterion_metrics();
  criterion_envelope();
  const auto e2e = run_end_to_end();
  criterion_end_to_end(e2e);
  criterion_smoothing(e2e);
  criterion_hygiene(e2e);
  criterion_determinism();
  criterion_sst_structure(e2e);
  std::cout << fmt::format("{} of 11 criteria failed ({:.1f} min)", failures, seconds_since(t0) / 60) << std::endl;
  return failures == 0 ? 0 : 1;
}
