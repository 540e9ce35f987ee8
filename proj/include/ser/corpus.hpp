#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ser {

enum class DatasetId { kSavee, kRavdess, kCremaD, kTess, kEmoDb, kEmovo };

DatasetId dataset_from_string(const std::string& name);  // throws ConfigError
std::string to_string(DatasetId id);

enum class Split { kUnassigned, kTrain, kTest };
enum class AugmentTag { kNone, kNoise, kPitchUp, kPitchDown };

std::string to_string(Split s);
std::string to_string(AugmentTag t);
Split split_from_string(const std::string& s);
AugmentTag augment_tag_from_string(const std::string& s);

/// One labeled audio file. Augmented rows reference the original path and
/// carry the transform in augment_tag; the transformed audio is produced on
/// demand during feature extraction.
struct ManifestRow {
  std::string path;
  std::string label;
  DatasetId dataset = DatasetId::kSavee;
  std::string speaker;
  Split split = Split::kUnassigned;
  AugmentTag augment_tag = AugmentTag::kNone;

  bool operator==(const ManifestRow&) const = default;
};

/// Ordered label list of a dataset; positions define class indices.
struct LabelScheme {
  DatasetId dataset;
  std::vector<std::string> labels;

  size_t size() const { return labels.size(); }
  /// Index of a label; throws LabelError for foreign labels.
  size_t index_of(const std::string& label) const;
};

/// Label set actually present in each corpus's files.
LabelScheme label_scheme(DatasetId id);

/// Parses (label, speaker) from a corpus filename. Returns nullopt when the
/// name does not match the dataset convention at all; throws ParseError when
/// it matches but carries an unknown code.
std::optional<std::pair<std::string, std::string>> parse_filename(
    DatasetId id, const std::string& filename, const std::string& parent_dir);

struct ScanResult {
  std::vector<ManifestRow> rows;        // sorted by path
  std::vector<std::string> skipped;     // .wav files that matched no pattern
  std::vector<std::string> warnings;    // e.g. unexpected corpus cardinality
};

/// Walks `root` recursively and builds one row per parseable audio file.
/// Throws EmptyCorpus when nothing parses, ParseError on recognized names
/// with unknown codes.
ScanResult scan_dataset(const std::string& root, DatasetId id);

/// CSV with header path,label,dataset,speaker,split,augment_tag (UTF-8, LF).
void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

/// Published clip count, when the corpus ships a fixed size.
std::optional<size_t> expected_corpus_size(DatasetId id);

}  // namespace ser
