#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "neosleep/app/pipeline.hpp"
#include "neosleep/synth/synth.hpp"

namespace fs = std::filesystem;
using namespace neosleep;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out, data, recording, checkpoint, sst;
  std::vector<std::string> annotations;
  bool dump = false;
};

app::RunConfig resolve(const Flags& f) {
  app::RunConfig c = f.config.empty() ? app::RunConfig{} : app::load_run_config(f.config);
  if (f.seed) c.seed = *f.seed;
  c.apply_seed();
  if (!f.out.empty()) c.paths.out_dir = f.out;
  if (!f.data.empty()) c.paths.data_dir = f.data;
  if (!f.recording.empty()) c.paths.recording = f.recording;
  if (!f.checkpoint.empty()) c.paths.checkpoint = f.checkpoint;
  if (!f.sst.empty()) c.paths.sst_csv = f.sst;
  if (!f.annotations.empty()) c.paths.annotations = f.annotations;
  c.validate();
  return c;
}

const std::string& need(const std::string& value, const char* what) {
  if (value.empty()) throw Error(Errc::config, fmt::format("{} is required", what));
  return value;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// explicit annotation files are experts E1, E2, ...; otherwise look next to
// the recording
std::vector<AnnotationTrack> annotations_for(const app::RunConfig& c) {
  std::vector<AnnotationTrack> tracks;
  for (std::size_t i = 0; i < c.paths.annotations.size(); ++i)
    tracks.push_back(read_annotations(c.paths.annotations[i], fmt::format("E{}", i + 1)));
  if (tracks.empty() && !c.paths.recording.empty()) tracks = app::find_annotations(c.paths.recording);
  return tracks;
}

sst::SstTrace read_trace(const std::string& path, double threshold) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  return sst::read_sst_csv(in, threshold);
}

void print_rows(const std::vector<metrics::ReportRow>& rows) {
  for (const auto& r : rows) {
    if (r.subject != metrics::kPooled) continue;
    std::cout << fmt::format("{:<22} acc {:.3f}  kappa {}  auc {}\n", r.channel, r.report.accuracy,
                             r.report.kappa ? fmt::format("{:.3f}", *r.report.kappa) : "-",
                             r.auc ? fmt::format("{:.3f}", *r.auc) : "-");
  }
}

int cmd_synth(const app::RunConfig& c) {
  const fs::path out = c.paths.out_dir;
  fs::create_directories(out);
  nlohmann::ordered_json files = nlohmann::ordered_json::array();
  for (const auto& s : synth::generate(c.synth)) {
    const auto stem = out / s.recording.subject_id;
    write_edf(stem.string() + ".edf", s.recording);
    write_annotations(stem.string() + ".csv", s.truth);
    files.push_back({{"subject", s.recording.subject_id},
                     {"edf", stem.filename().string() + ".edf"},
                     {"annotations", stem.filename().string() + ".csv"},
                     {"artifact_epochs", s.artifact_epochs}});
  }
  nlohmann::ordered_json manifest;
  manifest["created_utc"] = utc_now();
  manifest["seed"] = c.seed;
  manifest["synth"] = app::to_json(c)["synth"];
  manifest["subjects"] = files;
  app::write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << manifest.dump(2) << '\n';
  return kExitOk;
}

int cmd_preprocess(const app::RunConfig& c, bool dump) {
  const auto subject = app::load_subject(need(c.paths.recording, "--recording"));
  const auto epochs = dsp::preprocess_recording(app::derivations(subject.recording, c.channel_pairs), c.preprocess);
  const fs::path out = c.paths.out_dir;
  fs::create_directories(out);
  std::string csv = "channel,epoch_index,valid\n";
  int valid = 0;
  for (const auto& ep : epochs) {
    csv += fmt::format("{},{},{}\n", ep.channel_label, ep.epoch_index, ep.valid ? 1 : 0);
    valid += ep.valid;
    if (dump) {
      fs::create_directories(out / "epochs");
      dsp::dump_epoch((out / "epochs" / fmt::format("{}_{:04}", ep.channel_label, ep.epoch_index)).string(), ep);
    }
  }
  app::write_text(out / "epochs.csv", csv);
  std::cout << fmt::format("{}: {} epochs, {} valid\n", subject.recording.subject_id, epochs.size(), valid);
  return kExitOk;
}

std::vector<train::SubjectData> prepared_subjects(const app::RunConfig& c) {
  std::vector<train::SubjectData> subjects;
  for (const auto& s : app::load_subject_dir(need(c.paths.data_dir, "--data")))
    subjects.push_back(app::prepare_subject(s, c));
  return subjects;
}

int cmd_train(const app::RunConfig& c) {
  const auto subjects = prepared_subjects(c);
  const auto dataset = train::build_dataset(std::span<const train::SubjectData>(subjects));
  const auto result = train::train(dataset, c.train, c.train.patience_standalone, [](const train::HistoryRow& h) {
    std::cerr << fmt::format("epoch {:3}  train {:.4f}  val {:.4f}  lr {:.2e}\n", h.epoch, h.train_loss, h.val_loss, h.lr);
  });
  const fs::path out = c.paths.out_dir;
  fs::create_directories(out);
  nn::save_checkpoint((out / "model").string(), result.model, app::training_metadata(result));
  app::write_history(out / "history.csv", result.history);
  std::cout << fmt::format("best epoch {} of {}, val loss {:.4f}\n", result.best_epoch, result.stop_epoch,
                           result.best_val_loss);
  return kExitOk;
}

int cmd_crossval(const app::RunConfig& c, int jobs) {
  const auto subjects = prepared_subjects(c);
  train::LosoOptions opts;
  opts.jobs = jobs;
  opts.on_epoch = [](const std::string& subject, const train::HistoryRow& h) {
    std::cerr << fmt::format("[{}] epoch {:3}  train {:.4f}  val {:.4f}\n", subject, h.epoch, h.train_loss, h.val_loss);
  };
  const auto result = app::crossval(subjects, c, opts);
  app::write_crossval(c.paths.out_dir, result, subjects);
  print_rows(result.rows);
  return kExitOk;
}

int cmd_infer(const app::RunConfig& c) {
  const auto model = nn::load_checkpoint(need(c.paths.checkpoint, "--checkpoint"));
  app::LoadedSubject loaded;
  loaded.recording = read_edf(need(c.paths.recording, "--recording"));
  loaded.recording.subject_id = fs::path(c.paths.recording).stem().string();
  loaded.tracks = annotations_for(c);
  const auto subject = app::prepare_subject(loaded, c);
  const auto out = app::postprocess(subject, train::predict_subject(model, subject), c);
  app::write_subject_outputs(c.paths.out_dir, out, subject);
  std::cout << fmt::format("{}: {} epochs, {} channels, {} QS intervals\n", out.subject, out.probs.n_epochs(),
                           out.probs.n_channels(), out.dqs.size());
  return kExitOk;
}

int cmd_eval(const app::RunConfig& c) {
  const auto& sst_path = need(c.paths.sst_csv, "--sst");
  const auto trace = read_trace(sst_path, c.sst.threshold);
  const auto tracks = annotations_for(c);
  if (tracks.empty()) throw Error(Errc::config, "--annotations is required");
  const std::string subject =
      c.paths.recording.empty() ? fs::path(sst_path).stem().string() : fs::path(c.paths.recording).stem().string();
  const auto rows = app::evaluate_trace(subject, trace, tracks);
  app::write_report(c.paths.out_dir, rows, "metrics");
  for (const auto& r : rows)
    std::cout << fmt::format("{:<22} acc {:.3f}  n {}\n", r.channel, r.report.accuracy, r.report.n_epochs);
  return kExitOk;
}

int cmd_baseline(const app::RunConfig& c) {
  const auto rec = read_edf(need(c.paths.recording, "--recording"));
  const auto trace = read_trace(need(c.paths.sst_csv, "--sst"), c.sst.threshold);
  const auto features = baseline::envelope_features(app::baseline_signal(rec, c.baseline_channel, c), dsp::kTargetFs);
  const auto tracks = annotations_for(c);
  std::vector<SleepLabel> truth;
  if (!tracks.empty()) truth = app::consensus_truth(tracks, static_cast<int>(features.size()));
  const auto cmp = baseline::compare_to_sst(features, trace, truth);

  const fs::path out = c.paths.out_dir;
  fs::create_directories(out);
  {
    std::ofstream f(out / "baseline_features.csv");
    baseline::write_features_csv(f, features);
  }
  auto j = app::comparison_json(cmp);
  j["channel"] = c.baseline_channel;
  app::write_text(out / "baseline.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

int exit_code(Errc e) {
  switch (e) {
    case Errc::config: return kExitConfig;
    case Errc::diverged: return kExitRuntime;
    default: return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Neonatal sleep-state pipeline: synthetic EEG, CNN training, SST trend"};
  cli.require_subcommand(1);
  Flags f;
  cli.add_option("--config", f.config, "JSON run configuration");
  cli.add_option("--seed", f.seed, "overrides the config seed");
  cli.add_option("--jobs", f.jobs, "parallel folds")->check(CLI::PositiveNumber);
  cli.add_option("--out", f.out, "output directory");
  cli.add_option("--data", f.data, "directory of EDF + annotation CSV files");
  cli.add_option("--recording", f.recording, "single EDF recording");
  cli.add_option("--checkpoint", f.checkpoint, "checkpoint manifest (.json) or stem");
  cli.add_option("--annotations", f.annotations, "annotation CSVs, one per expert");
  cli.add_option("--sst", f.sst, "SST CSV written by infer");

  auto* synth = cli.add_subcommand("synth", "write a synthetic cohort as EDF + annotation CSV");
  auto* pre = cli.add_subcommand("preprocess", "derive, filter, resample and epoch one recording");
  pre->add_flag("--dump", f.dump, "write every epoch as raw float32");
  auto* tr = cli.add_subcommand("train", "train one model on every subject in --data");
  auto* cv = cli.add_subcommand("crossval", "leave-one-subject-out evaluation over --data");
  auto* inf = cli.add_subcommand("infer", "SST, DQS and chart for one recording");
  auto* ev = cli.add_subcommand("eval", "score an SST CSV against annotations");
  auto* bl = cli.add_subcommand("baseline", "envelope features compared with the SST");
  for (auto* sub : {synth, pre, tr, cv, inf, ev, bl}) sub->fallthrough();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const auto c = resolve(f);
    if (*synth) return cmd_synth(c);
    if (*pre) return cmd_preprocess(c, f.dump);
    if (*tr) return cmd_train(c);
    if (*cv) return cmd_crossval(c, f.jobs);
    if (*inf) return cmd_infer(c);
    if (*ev) return cmd_eval(c);
    if (*bl) return cmd_baseline(c);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed input: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
