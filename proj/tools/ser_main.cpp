// Command-line front end: scan, extract, train, eval, predict, demo-spectra.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ser/augment.hpp"
#include "ser/corpus.hpp"
#include "ser/dsp.hpp"
#include "ser/errors.hpp"
#include "ser/learn.hpp"
#include "ser/nn.hpp"
#include "ser/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One user-facing --seed; modules get decorrelated streams.
uint64_t seed_stream(uint64_t root, std::string_view tag) {
  uint64_t s = root;
  return ser::splitmix64(s) ^ ser::fnv1a64(tag);
}

std::string default_cache_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("SER_CACHE_DIR")) return env;
  return ".ser-cache";
}

ser::DatasetId require_uniform_dataset(const std::vector<ser::ManifestRow>& rows) {
  if (rows.empty()) throw ser::EmptyInput("manifest has no rows");
  const ser::DatasetId id = rows.front().dataset;
  for (const auto& row : rows) {
    if (row.dataset != id) {
      throw ser::ConfigError("manifest mixes datasets (" +
                             ser::to_string(id) + " and " +
                             ser::to_string(row.dataset) + ")");
    }
  }
  return id;
}

struct CommonFlags {
  uint64_t seed = 0;
  std::string cache_dir;
  bool no_mfcc = false;
  std::string input_mode = "pooled";
  double noise_scale = 0.035;
  int semitones = 4;

  ser::PipelineConfig pipeline() const {
    ser::PipelineConfig cfg;
    cfg.use_mfcc = !no_mfcc;
    cfg.input_mode = input_mode == "sequence" ? ser::InputMode::kSequence
                                              : ser::InputMode::kPooled;
    cfg.augment.noise_scale = noise_scale;
    cfg.augment.semitones = semitones;
    cfg.augment.rng_seed = seed_stream(seed, "augment");
    return cfg;
  }
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--seed", flags.seed, "Root random seed");
  cmd->add_option("--cache-dir", flags.cache_dir,
                  "Feature cache directory (default $SER_CACHE_DIR or .ser-cache)");
  cmd->add_flag("--no-mfcc", flags.no_mfcc,
                "Use banded log-energy features instead of MFCC");
  cmd->add_option("--input-mode", flags.input_mode,
                  "Model input: pooled vector or full sequence")
      ->check(CLI::IsMember({"pooled", "sequence"}));
  cmd->add_option("--noise-scale", flags.noise_scale,
                  "Noise amplitude as a fraction of peak");
  cmd->add_option("--semitones", flags.semitones, "Pitch shift magnitude");
}

int cmd_scan(const std::string& root, const std::string& dataset,
             const std::string& manifest_path) {
  const auto id = ser::dataset_from_string(dataset);
  const ser::ScanResult result = ser::scan_dataset(root, id);
  for (const auto& warning : result.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  if (!result.skipped.empty()) {
    std::cerr << "warning: skipped " << result.skipped.size()
              << " unrecognized file(s):\n";
    for (const auto& path : result.skipped) std::cerr << "  " << path << "\n";
  }
  ser::write_manifest(manifest_path, result.rows);
  std::cout << "scanned " << result.rows.size() << " " << ser::to_string(id)
            << " clips -> " << manifest_path << "\n";
  return 0;
}

int cmd_extract(const std::string& manifest_path, const CommonFlags& flags) {
  const auto rows = ser::read_manifest(manifest_path);
  const auto cfg = flags.pipeline();
  const std::string cache_dir = default_cache_dir(flags.cache_dir);
  ser::CacheLock lock(cache_dir);

  size_t extracted = 0, hits = 0;
  std::vector<std::string> failures;
  for (const auto& row : rows) {
    try {
      bool hit = false;
      ser::features_for_row(row, cfg, cache_dir, &hit);
      (hit ? hits : extracted)++;
    } catch (const ser::Error& e) {
      failures.push_back(e.what());
    }
  }
  std::cout << "extracted " << extracted << ", cache hits " << hits
            << ", failures " << failures.size() << "\n";
  for (const auto& f : failures) std::cerr << "error: " << f << "\n";
  return failures.empty() ? 0 : 2;
}

int cmd_train(const std::string& manifest_path, const std::string& checkpoint,
              const std::string& log_file, const CommonFlags& flags,
              const ser::TrainConfig& tc_in, bool no_augment,
              bool augment_before_split) {
  auto rows = ser::read_manifest(manifest_path);
  const auto dataset = require_uniform_dataset(rows);
  const auto scheme = ser::label_scheme(dataset);
  const auto cfg = flags.pipeline();

  ser::TrainConfig tc = tc_in;
  tc.seed = seed_stream(flags.seed, "train");

  ser::SplitResult split;
  if (augment_before_split && !no_augment) {
    split = ser::split_dataset(ser::expand_dataset(rows, cfg.augment), tc);
  } else {
    split = ser::split_dataset(rows, tc);
    if (!no_augment) {
      split.train = ser::expand_dataset(split.train, cfg.augment);
    }
  }
  for (const auto& warning : split.warnings) {
    std::cerr << "warning: " << warning << "\n";
  }
  std::cout << "train rows: " << split.train.size()
            << ", test rows: " << split.test.size() << "\n";

  const std::string cache_dir = default_cache_dir(flags.cache_dir);
  ser::CacheLock lock(cache_dir);
  const ser::Dataset train_set =
      ser::assemble_dataset(split.train, scheme, cfg, cache_dir);
  const ser::Dataset test_set =
      ser::assemble_dataset(split.test, scheme, cfg, cache_dir);

  ser::ModelConfig mc;
  mc.in_channels = ser::model_in_channels(cfg);
  mc.input_len = ser::model_input_len(cfg);
  mc.classes = scheme.size();
  mc.init_seed = seed_stream(flags.seed, "model-init");

  ser::AttentionCnn model(mc);

  const std::string log_path =
      log_file.empty() ? checkpoint + ".log.jsonl" : log_file;
  std::ofstream log_stream(log_path, std::ios::trunc);
  if (!log_stream) throw ser::IoError("cannot open log file: " + log_path);

  const ser::TrainResult result =
      ser::train(model, train_set, test_set, tc, &log_stream);

  ser::save_checkpoint(checkpoint, model);
  std::cout << "best validation accuracy "
            << 100.0 * result.best_val_acc << "% at epoch "
            << result.best_epoch << "\n";
  std::cout << "checkpoint -> " << checkpoint << "\nlog -> " << log_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& out_dir, const CommonFlags& flags) {
  auto rows = ser::read_manifest(manifest_path);
  const auto dataset = require_uniform_dataset(rows);
  const auto scheme = ser::label_scheme(dataset);

  std::vector<ser::ManifestRow> eval_rows;
  for (const auto& row : rows) {
    if (row.split == ser::Split::kTest) eval_rows.push_back(row);
  }
  if (eval_rows.empty()) eval_rows = rows;

  ser::AttentionCnn model = ser::load_checkpoint(checkpoint);
  if (model.config().classes != scheme.size()) {
    throw ser::LabelError("checkpoint has " +
                          std::to_string(model.config().classes) +
                          " classes, " + ser::to_string(dataset) + " has " +
                          std::to_string(scheme.size()));
  }

  const auto cfg = flags.pipeline();
  if (ser::model_input_len(cfg) != model.config().input_len ||
      ser::model_in_channels(cfg) != model.config().in_channels) {
    throw ser::ConfigError(
        "feature configuration does not match the checkpoint's input shape");
  }

  const std::string cache_dir = default_cache_dir(flags.cache_dir);
  ser::CacheLock lock(cache_dir);
  const ser::Dataset set =
      ser::assemble_dataset(eval_rows, scheme, cfg, cache_dir);
  const ser::EvalReport report = ser::evaluate(model, set);

  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "confusion.csv").string();
  {
    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "true\\pred";
    for (const auto& label : scheme.labels) csv << ',' << label;
    csv << "\n";
    for (size_t r = 0; r < scheme.size(); ++r) {
      csv << scheme.labels[r];
      for (size_t c = 0; c < scheme.size(); ++c) {
        csv << ',' << report.confusion[r][c];
      }
      csv << "\n";
    }
  }

  json summary;
  summary["accuracy"] = report.accuracy;
  summary["total"] = report.total;
  summary["dataset"] = ser::to_string(dataset);
  summary["per_class"] = json::array();
  for (size_t c = 0; c < scheme.size(); ++c) {
    summary["per_class"].push_back({{"label", scheme.labels[c]},
                                    {"precision", report.precision[c]},
                                    {"recall", report.recall[c]}});
  }
  const std::string json_path = (fs::path(out_dir) / "summary.json").string();
  std::ofstream(json_path, std::ios::trunc) << summary.dump(2) << "\n";

  std::printf("accuracy: %.2f%% (%zu clips)\n", 100.0 * report.accuracy,
              report.total);
  std::cout << "reports -> " << json_path << ", " << csv_path << "\n";
  return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& wav_path,
                const std::string& dataset, const CommonFlags& flags) {
  ser::AttentionCnn model = ser::load_checkpoint(checkpoint);
  const auto cfg = flags.pipeline();
  if (ser::model_input_len(cfg) != model.config().input_len ||
      ser::model_in_channels(cfg) != model.config().in_channels) {
    throw ser::ConfigError(
        "feature configuration does not match the checkpoint's input shape");
  }

  std::vector<std::string> labels;
  if (!dataset.empty()) {
    const auto scheme = ser::label_scheme(ser::dataset_from_string(dataset));
    if (scheme.size() != model.config().classes) {
      throw ser::LabelError("checkpoint has " +
                            std::to_string(model.config().classes) +
                            " classes, " + dataset + " has " +
                            std::to_string(scheme.size()));
    }
    labels = scheme.labels;
  } else {
    for (size_t i = 0; i < model.config().classes; ++i) {
      labels.push_back("class_" + std::to_string(i));
    }
  }

  const ser::AudioClip raw = ser::decode_wav_file(wav_path);
  ser::ManifestRow row;
  row.path = wav_path;
  const ser::MfccFeatures feats = ser::features_for_clip(raw, row, cfg);

  ser::Dataset set;
  const size_t channels = ser::model_in_channels(cfg);
  const size_t len = ser::model_input_len(cfg);
  set.features = ser::Tensor({1, channels, len});
  set.labels = {0};
  if (cfg.input_mode == ser::InputMode::kPooled) {
    std::copy(feats.pooled->begin(), feats.pooled->end(),
              set.features.data.begin());
  } else {
    for (size_t f = 0; f < feats.n_frames; ++f) {
      for (size_t c = 0; c < channels; ++c) {
        set.features.data[c * len + f] = feats.at(f, c);
      }
    }
  }

  const ser::Tensor logits = ser::predict_logits(model, set, 1);
  const auto probs = ser::softmax(logits.data);
  size_t best = 0;
  for (size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }

  std::cout << "label: " << labels[best] << "\n";
  for (size_t i = 0; i < probs.size(); ++i) {
    std::printf("  %-20s %.6f\n", labels[i].c_str(), probs[i]);
  }
  return 0;
}

void write_spectrum_csv(const std::string& path, const ser::Spectrum& spec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ser::IoError("cannot open for writing: " + path);
  out << "bin_index,frequency_hz,power\n";
  char line[128];
  for (size_t k = 0; k < spec.power.size(); ++k) {
    std::snprintf(line, sizeof(line), "%zu,%.17g,%.17g\n", k,
                  static_cast<double>(k) * spec.bin_hz, spec.power[k]);
    out << line;
  }
}

void print_peaks(const char* name, const ser::Spectrum& spec,
                 const std::vector<size_t>& peaks) {
  std::cout << name << ": peaks at bins";
  for (size_t p : peaks) std::cout << ' ' << p;
  std::vector<size_t> order = peaks;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return spec.power[a] > spec.power[b];
  });
  std::cout << "; power order";
  for (size_t i = 0; i < order.size(); ++i) {
    std::cout << (i == 0 ? " " : " > ") << order[i];
  }
  std::cout << "\n";
}

int cmd_demo_spectra(const std::string& out_dir) {
  const ser::DemoSpectra demo = ser::demo_spectra();
  fs::create_directories(out_dir);
  write_spectrum_csv((fs::path(out_dir) / "raw.csv").string(), demo.raw);
  write_spectrum_csv((fs::path(out_dir) / "preemphasized.csv").string(),
                     demo.preemphasized);
  write_spectrum_csv((fs::path(out_dir) / "windowed.csv").string(),
                     demo.windowed);
  print_peaks("raw", demo.raw, demo.raw_peaks);
  print_peaks("preemphasized", demo.preemphasized, demo.preemphasized_peaks);
  print_peaks("windowed", demo.windowed, demo.windowed_peaks);
  std::cout << "csv -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech emotion recognition toolkit"};
  app.require_subcommand(1);

  // scan
  std::string root, dataset, manifest;
  auto* scan = app.add_subcommand("scan", "Build a manifest from a corpus tree");
  scan->add_option("--root", root, "Corpus root directory")->required();
  scan->add_option("--dataset", dataset,
                   "Dataset id (savee|ravdess|crema-d|tess|emo-db|emovo)")
      ->required();
  scan->add_option("--manifest", manifest, "Output manifest path")->required();

  // extract
  CommonFlags extract_flags;
  std::string extract_manifest;
  auto* extract = app.add_subcommand("extract", "Populate the feature cache");
  extract->add_option("--manifest", extract_manifest, "Manifest path")->required();
  add_common_flags(extract, extract_flags);

  // train
  CommonFlags train_flags;
  std::string train_manifest, checkpoint = "model.serm", log_file;
  ser::TrainConfig tc;
  bool no_augment = false, augment_before_split = false;
  auto* train = app.add_subcommand("train", "Split, augment and train");
  train->add_option("--manifest", train_manifest, "Manifest path")->required();
  train->add_option("--checkpoint", checkpoint, "Output checkpoint path");
  train->add_option("--log-file", log_file,
                    "Per-epoch JSONL log (default <checkpoint>.log.jsonl)");
  train->add_option("--lr", tc.learning_rate, "Learning rate");
  train->add_option("--epochs", tc.max_epochs, "Training epochs");
  train->add_option("--batch-size", tc.batch_size, "Mini-batch size");
  train->add_option("--split-ratio", tc.split_ratio, "Train fraction");
  train->add_flag("--no-augment", no_augment, "Train on original clips only");
  train->add_flag("--augment-before-split", augment_before_split,
                  "Expand the dataset before splitting (replicates protocols "
                  "that let augmented copies reach the test set)");
  add_common_flags(train, train_flags);

  // eval
  CommonFlags eval_flags;
  std::string eval_checkpoint, eval_manifest, eval_out = ".";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint path")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest path")->required();
  eval->add_option("--out-dir", eval_out, "Report output directory");
  add_common_flags(eval, eval_flags);

  // predict
  CommonFlags predict_flags;
  std::string predict_checkpoint, predict_wav, predict_dataset;
  auto* predict = app.add_subcommand("predict", "Classify one WAV file");
  predict->add_option("--checkpoint", predict_checkpoint, "Checkpoint path")
      ->required();
  predict->add_option("wav", predict_wav, "Input WAV file")->required();
  predict->add_option("--dataset", predict_dataset,
                      "Dataset id used to name the classes");
  add_common_flags(predict, predict_flags);

  // demo-spectra
  std::string demo_out = "demo-spectra";
  auto* demo = app.add_subcommand(
      "demo-spectra", "Write the four-tone spectra CSVs and peak report");
  demo->add_option("--out-dir", demo_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (scan->parsed()) return cmd_scan(root, dataset, manifest);
    if (extract->parsed()) return cmd_extract(extract_manifest, extract_flags);
    if (train->parsed()) {
      return cmd_train(train_manifest, checkpoint, log_file, train_flags, tc,
                       no_augment, augment_before_split);
    }
    if (eval->parsed()) {
      return cmd_eval(eval_checkpoint, eval_manifest, eval_out, eval_flags);
    }
    if (predict->parsed()) {
      return cmd_predict(predict_checkpoint, predict_wav, predict_dataset,
                         predict_flags);
    }
    if (demo->parsed()) return cmd_demo_spectra(demo_out);
  } catch (const ser::DecodeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::UnsupportedFormat& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::EmptyInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::TooShort& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::EmptyCorpus& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::LabelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ser::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
