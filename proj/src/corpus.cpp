#include "ser/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ser/errors.hpp"

namespace fs = std::filesystem;

namespace ser {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c);
  });
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  return parts;
}

std::string stem_of(const std::string& filename) {
  const auto dot = filename.rfind('.');
  return dot == std::string::npos ? filename : filename.substr(0, dot);
}

}  // namespace

DatasetId dataset_from_string(const std::string& name) {
  const std::string n = lower(name);
  if (n == "savee") return DatasetId::kSavee;
  if (n == "ravdess") return DatasetId::kRavdess;
  if (n == "crema-d" || n == "cremad" || n == "crema_d") return DatasetId::kCremaD;
  if (n == "tess") return DatasetId::kTess;
  if (n == "emo-db" || n == "emodb" || n == "emo_db") return DatasetId::kEmoDb;
  if (n == "emovo") return DatasetId::kEmovo;
  throw ConfigError("unknown dataset id: " + name);
}

std::string to_string(DatasetId id) {
  switch (id) {
    case DatasetId::kSavee: return "SAVEE";
    case DatasetId::kRavdess: return "RAVDESS";
    case DatasetId::kCremaD: return "CREMA-D";
    case DatasetId::kTess: return "TESS";
    case DatasetId::kEmoDb: return "EMO-DB";
    case DatasetId::kEmovo: return "EMOVO";
  }
  return "?";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kUnassigned: return "unassigned";
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
  }
  return "?";
}

std::string to_string(AugmentTag t) {
  switch (t) {
    case AugmentTag::kNone: return "none";
    case AugmentTag::kNoise: return "noise";
    case AugmentTag::kPitchUp: return "pitch+";
    case AugmentTag::kPitchDown: return "pitch-";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "unassigned") return Split::kUnassigned;
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw IoError("unknown split value: " + s);
}

AugmentTag augment_tag_from_string(const std::string& s) {
  if (s == "none") return AugmentTag::kNone;
  if (s == "noise") return AugmentTag::kNoise;
  if (s == "pitch+") return AugmentTag::kPitchUp;
  if (s == "pitch-") return AugmentTag::kPitchDown;
  throw IoError("unknown augment tag: " + s);
}

size_t LabelScheme::index_of(const std::string& label) const {
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return i;
  }
  throw LabelError("label '" + label + "' is not in the " +
                   to_string(dataset) + " scheme");
}

LabelScheme label_scheme(DatasetId id) {
  switch (id) {
    case DatasetId::kRavdess:
      // Ordered by the corpus's emotion codes 01..08.
      return {id, {"neutral", "calm", "happy", "sad", "angry", "fearful",
                   "disgust", "surprised"}};
    case DatasetId::kSavee:
      return {id, {"anger", "disgust", "fear", "happiness", "neutral",
                   "sadness", "surprise"}};
    case DatasetId::kCremaD:
      return {id, {"anger", "disgust", "fear", "happy", "neutral", "sad"}};
    case DatasetId::kTess:
      return {id, {"angry", "disgust", "fear", "happy", "neutral",
                   "pleasant_surprise", "sad"}};
    case DatasetId::kEmoDb:
      return {id, {"anger", "boredom", "disgust", "fear", "happiness",
                   "neutral", "sadness"}};
    case DatasetId::kEmovo:
      return {id, {"anger", "disgust", "fear", "joy", "neutral", "sadness",
                   "surprise"}};
  }
  throw ConfigError("unknown dataset id");
}

std::optional<size_t> expected_corpus_size(DatasetId id) {
  switch (id) {
    case DatasetId::kSavee: return 480;
    case DatasetId::kRavdess: return 1440;
    case DatasetId::kCremaD: return 7442;
    case DatasetId::kTess: return 2800;
    case DatasetId::kEmoDb: return 535;
    case DatasetId::kEmovo: return 588;
  }
  return std::nullopt;
}

namespace {

using Parsed = std::optional<std::pair<std::string, std::string>>;

// "03-01-05-01-02-01-12.wav": seven numeric fields; the third is the
// emotion code, the last the actor.
Parsed parse_ravdess(const std::string& stem) {
  const auto parts = split_on(stem, '-');
  if (parts.size() != 7) return std::nullopt;
  for (const auto& p : parts) {
    if (!all_digits(p)) return std::nullopt;
  }
  static const std::map<std::string, std::string> kCodes = {
      {"01", "neutral"}, {"02", "calm"},    {"03", "happy"},
      {"04", "sad"},     {"05", "angry"},   {"06", "fearful"},
      {"07", "disgust"}, {"08", "surprised"}};
  const auto it = kCodes.find(parts[2]);
  if (it == kCodes.end()) {
    throw ParseError("unknown RAVDESS emotion code '" + parts[2] + "'");
  }
  return std::make_pair(it->second, parts[6]);
}

// "DC_sa01.wav" or "sa01.wav" under a speaker directory: letters encode the
// emotion ("sa" sadness, "su" surprise, single letters otherwise).
Parsed parse_savee(const std::string& stem, const std::string& parent) {
  std::string speaker, rest;
  const auto underscore = stem.find('_');
  if (underscore != std::string::npos) {
    speaker = stem.substr(0, underscore);
    rest = stem.substr(underscore + 1);
  } else {
    speaker = parent;
    rest = stem;
  }
  size_t letters = 0;
  while (letters < rest.size() &&
         std::isalpha(static_cast<unsigned char>(rest[letters]))) {
    ++letters;
  }
  if (letters == 0 || letters > 2 || !all_digits(rest.substr(letters))) {
    return std::nullopt;
  }
  const std::string code = lower(rest.substr(0, letters));
  static const std::map<std::string, std::string> kCodes = {
      {"a", "anger"},   {"d", "disgust"},  {"f", "fear"},   {"h", "happiness"},
      {"n", "neutral"}, {"sa", "sadness"}, {"su", "surprise"}};
  const auto it = kCodes.find(code);
  if (it == kCodes.end()) {
    throw ParseError("unknown SAVEE emotion code '" + code + "'");
  }
  return std::make_pair(it->second, speaker);
}

// "1001_DFA_ANG_XX.wav": actor, sentence, emotion, intensity.
Parsed parse_cremad(const std::string& stem) {
  const auto parts = split_on(stem, '_');
  if (parts.size() != 4 || !all_digits(parts[0])) return std::nullopt;
  static const std::map<std::string, std::string> kCodes = {
      {"ANG", "anger"}, {"DIS", "disgust"}, {"FEA", "fear"},
      {"HAP", "happy"}, {"NEU", "neutral"}, {"SAD", "sad"}};
  const auto it = kCodes.find(parts[2]);
  if (it == kCodes.end()) {
    throw ParseError("unknown CREMA-D emotion code '" + parts[2] + "'");
  }
  return std::make_pair(it->second, parts[0]);
}

std::optional<std::string> tess_label_token(const std::string& token) {
  static const std::map<std::string, std::string> kCodes = {
      {"angry", "angry"},
      {"disgust", "disgust"},
      {"fear", "fear"},
      {"happy", "happy"},
      {"neutral", "neutral"},
      {"ps", "pleasant_surprise"},
      {"pleasant_surprise", "pleasant_surprise"},
      {"pleasant_surprised", "pleasant_surprise"},
      {"sad", "sad"}};
  const auto it = kCodes.find(lower(token));
  if (it == kCodes.end()) return std::nullopt;
  return it->second;
}

// "OAF_back_angry.wav": label is the last underscore token; the enclosing
// folder ("YAF_pleasant_surprised") is consulted when the token is opaque.
Parsed parse_tess(const std::string& stem, const std::string& parent) {
  const auto parts = split_on(stem, '_');
  const std::string prefix = parts.empty() ? "" : lower(parts[0]);
  if (parts.size() < 2 || (prefix != "oaf" && prefix != "yaf")) {
    return std::nullopt;
  }
  const std::string speaker = prefix == "oaf" ? "OAF" : "YAF";
  if (auto label = tess_label_token(parts.back())) {
    return std::make_pair(*label, speaker);
  }
  const auto dir_sep = parent.find('_');
  if (dir_sep != std::string::npos) {
    if (auto label = tess_label_token(parent.substr(dir_sep + 1))) {
      return std::make_pair(*label, speaker);
    }
  }
  throw ParseError("unknown TESS emotion token '" + parts.back() + "'");
}

// "03a01Wa.wav": two-digit speaker, text code, emotion letter, version.
Parsed parse_emodb(const std::string& stem) {
  if (stem.size() < 6 || stem.size() > 7) return std::nullopt;
  if (!std::isdigit(static_cast<unsigned char>(stem[0])) ||
      !std::isdigit(static_cast<unsigned char>(stem[1])) ||
      !std::isalpha(static_cast<unsigned char>(stem[2])) ||
      !std::isdigit(static_cast<unsigned char>(stem[3])) ||
      !std::isdigit(static_cast<unsigned char>(stem[4])) ||
      !std::isupper(static_cast<unsigned char>(stem[5]))) {
    return std::nullopt;
  }
  static const std::map<char, std::string> kCodes = {
      {'W', "anger"},     {'L', "boredom"}, {'E', "disgust"}, {'A', "fear"},
      {'F', "happiness"}, {'T', "sadness"}, {'N', "neutral"}};
  const auto it = kCodes.find(stem[5]);
  if (it == kCodes.end()) {
    throw ParseError(std::string("unknown EMO-DB emotion letter '") + stem[5] +
                     "'");
  }
  return std::make_pair(it->second, stem.substr(0, 2));
}

// "gio-f1-b1.wav": emotion, speaker, sentence.
Parsed parse_emovo(const std::string& stem) {
  const auto parts = split_on(stem, '-');
  if (parts.size() != 3) return std::nullopt;
  static const std::map<std::string, std::string> kCodes = {
      {"dis", "disgust"}, {"gio", "joy"},     {"pau", "fear"},
      {"rab", "anger"},   {"sor", "surprise"}, {"tri", "sadness"},
      {"neu", "neutral"}};
  const auto it = kCodes.find(lower(parts[0]));
  if (it == kCodes.end()) {
    throw ParseError("unknown EMOVO emotion code '" + parts[0] + "'");
  }
  return std::make_pair(it->second, parts[1]);
}

}  // namespace

std::optional<std::pair<std::string, std::string>> parse_filename(
    DatasetId id, const std::string& filename, const std::string& parent_dir) {
  const std::string stem = stem_of(filename);
  switch (id) {
    case DatasetId::kRavdess: return parse_ravdess(stem);
    case DatasetId::kSavee: return parse_savee(stem, parent_dir);
    case DatasetId::kCremaD: return parse_cremad(stem);
    case DatasetId::kTess: return parse_tess(stem, parent_dir);
    case DatasetId::kEmoDb: return parse_emodb(stem);
    case DatasetId::kEmovo: return parse_emovo(stem);
  }
  return std::nullopt;
}

ScanResult scan_dataset(const std::string& root, DatasetId id) {
  if (!fs::exists(root) || !fs::is_directory(root)) {
    throw EmptyCorpus("dataset root does not exist: " + root);
  }

  ScanResult result;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower(entry.path().extension().string());
    if (ext != ".wav") continue;

    const std::string filename = entry.path().filename().string();
    const std::string parent = entry.path().parent_path().filename().string();
    try {
      const auto parsed = parse_filename(id, filename, parent);
      if (!parsed) {
        result.skipped.push_back(entry.path().string());
        continue;
      }
      ManifestRow row;
      row.path = entry.path().string();
      row.label = parsed->first;
      row.dataset = id;
      row.speaker = parsed->second;
      result.rows.push_back(std::move(row));
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (" + entry.path().string() +
                       ")");
    }
  }

  if (result.rows.empty()) {
    throw EmptyCorpus("no parseable " + to_string(id) + " files under " + root);
  }

  std::sort(result.rows.begin(), result.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) {
              return a.path < b.path;
            });
  std::sort(result.skipped.begin(), result.skipped.end());

  if (const auto expected = expected_corpus_size(id)) {
    if (result.rows.size() != *expected) {
      result.warnings.push_back(
          to_string(id) + " scan found " + std::to_string(result.rows.size()) +
          " clips; the full corpus has " + std::to_string(*expected));
    }
  }
  return result;
}

namespace {

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::vector<std::string> csv_parse_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

constexpr const char* kManifestHeader =
    "path,label,dataset,speaker,split,augment_tag";

}  // namespace

void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kManifestHeader << "\n";
  for (const auto& row : rows) {
    out << csv_escape(row.path) << ',' << csv_escape(row.label) << ','
        << to_string(row.dataset) << ',' << csv_escape(row.speaker) << ','
        << to_string(row.split) << ',' << to_string(row.augment_tag) << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty manifest file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw IoError("manifest schema mismatch in " + path + ": got '" + line +
                  "'");
  }

  std::vector<ManifestRow> rows;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = csv_parse_line(line);
    if (fields.size() != 6) {
      throw IoError("manifest line " + std::to_string(lineno) + " has " +
                    std::to_string(fields.size()) + " fields");
    }
    ManifestRow row;
    row.path = fields[0];
    row.label = fields[1];
    row.dataset = dataset_from_string(fields[2]);
    row.speaker = fields[3];
    row.split = split_from_string(fields[4]);
    row.augment_tag = augment_tag_from_string(fields[5]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ser
