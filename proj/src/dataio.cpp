// SPDX-License-Identifier: Apache-2.0
#include "xmodal/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "xmodal/serialize.hpp"

namespace xmodal {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

void SplitDataset::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& rec : records) {
    if (!seen.insert(rec.id).second)
      throw ValueError("dataset " + std::string(to_string(split)) + ": duplicate id '" + rec.id + "'");
    for (const auto* t : {&rec.text_features, &rec.audio_features}) {
      if (!t->defined() || t->rank() != 2)
        throw ValueError("dataset record '" + rec.id + "': features must be rank-2 tensors");
      if (t->dim(1) != feature_dim)
        throw ValueError("dataset record '" + rec.id + "': feature dim " + std::to_string(t->dim(1)) +
                         " != declared " + std::to_string(feature_dim));
    }
    if (rec.text_features.dim(0) > text_len_max || rec.audio_features.dim(0) > audio_len_max)
      throw ValueError("dataset record '" + rec.id + "': sequence longer than declared maximum");
  }
}

namespace {

constexpr const char* kManifestName = "manifest.jsonl";
constexpr const char* kFeaturesName = "features.bin";
constexpr const char* kDatasetFormat = "xmodal-dataset-v1";

}  // namespace

void write_dataset(const SplitDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::filesystem::create_directories(dir);

  std::ofstream blob(dir / kFeaturesName, std::ios::binary | std::ios::trunc);
  std::ofstream manifest(dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!blob || !manifest) throw ValueError("write_dataset: cannot open output files in " + dir.string());

  ordered_json header;
  header["format"] = kDatasetFormat;
  header["split"] = to_string(ds.split);
  header["feature_dim"] = ds.feature_dim;
  header["text_len_max"] = ds.text_len_max;
  header["audio_len_max"] = ds.audio_len_max;
  header["count"] = ds.records.size();
  manifest << header.dump() << "\n";

  std::uint64_t offset = 0;
  for (const auto& rec : ds.records) {
    const std::uint64_t text_off = offset;
    const std::uint64_t text_len = serialized_size(rec.text_features);
    write_tensor(blob, rec.text_features);
    offset += text_len;
    const std::uint64_t audio_off = offset;
    const std::uint64_t audio_len = serialized_size(rec.audio_features);
    write_tensor(blob, rec.audio_features);
    offset += audio_len;

    ordered_json line;
    line["id"] = rec.id;
    line["label"] = to_string(rec.label);
    line["text_off"] = text_off;
    line["text_len"] = text_len;
    line["audio_off"] = audio_off;
    line["audio_len"] = audio_len;
    manifest << line.dump() << "\n";
  }
  if (!blob || !manifest) throw ValueError("write_dataset: write failed in " + dir.string());
}

namespace {

Tensor read_blob_tensor(std::istream& blob, std::uint64_t off, std::uint64_t len,
                        const std::string& id, const char* which) {
  blob.clear();
  blob.seekg(static_cast<std::streamoff>(off));
  if (!blob)
    throw ValueError("read_dataset: record '" + id + "': cannot seek to " + which + " offset " +
                     std::to_string(off));
  Tensor t;
  try {
    t = read_tensor(blob);
  } catch (const ValueError& e) {
    throw ValueError("read_dataset: record '" + id + "' at offset " + std::to_string(off) + ": " +
                     e.what());
  }
  const auto end = blob.tellg();
  if (end < 0 || static_cast<std::uint64_t>(end) - off != len)
    throw ValueError("read_dataset: record '" + id + "': " + which + " length mismatch at offset " +
                     std::to_string(off) + " (manifest says " + std::to_string(len) + ")");
  return t;
}

}  // namespace

SplitDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / kManifestName, std::ios::binary);
  std::ifstream blob(dir / kFeaturesName, std::ios::binary);
  if (!manifest) throw ValueError("read_dataset: missing " + (dir / kManifestName).string());
  if (!blob) throw ValueError("read_dataset: missing " + (dir / kFeaturesName).string());

  std::string line;
  if (!std::getline(manifest, line)) throw ValueError("read_dataset: empty manifest in " + dir.string());

  SplitDataset ds;
  try {
    const auto header = ordered_json::parse(line);
    if (header.at("format").get<std::string>() != kDatasetFormat)
      throw ValueError("unsupported dataset format '" + header.at("format").get<std::string>() + "'");
    const std::string split = header.at("split").get<std::string>();
    if (split == "train")
      ds.split = Split::Train;
    else if (split == "validation")
      ds.split = Split::Validation;
    else if (split == "test")
      ds.split = Split::Test;
    else
      throw ValueError("unknown split '" + split + "'");
    ds.feature_dim = header.at("feature_dim").get<std::size_t>();
    ds.text_len_max = header.at("text_len_max").get<std::size_t>();
    ds.audio_len_max = header.at("audio_len_max").get<std::size_t>();
    ds.records.reserve(header.at("count").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw ValueError("read_dataset: malformed manifest header: " + std::string(e.what()));
  }

  std::size_t line_no = 1;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    UtteranceRecord rec;
    std::uint64_t text_off, text_len, audio_off, audio_len;
    try {
      const auto j = ordered_json::parse(line);
      rec.id = j.at("id").get<std::string>();
      const std::string label = j.at("label").get<std::string>();
      const auto parsed = parse_emotion_label(label);
      if (!parsed)
        throw ValueError("label '" + label + "' is not one of the seven canonical emotions");
      rec.label = *parsed;
      text_off = j.at("text_off").get<std::uint64_t>();
      text_len = j.at("text_len").get<std::uint64_t>();
      audio_off = j.at("audio_off").get<std::uint64_t>();
      audio_len = j.at("audio_len").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw ValueError("read_dataset: manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    rec.text_features = read_blob_tensor(blob, text_off, text_len, rec.id, "text");
    rec.audio_features = read_blob_tensor(blob, audio_off, audio_len, rec.id, "audio");
    ds.records.push_back(std::move(rec));
  }
  ds.validate();
  return ds;
}

ValidationReport validate_meld_schema(const SplitDataset& train, const SplitDataset& validation,
                                      const SplitDataset& test) {
  ValidationReport report;
  auto check_size = [&](const SplitDataset& ds, std::size_t expected, const char* name) {
    if (ds.records.size() != expected)
      report.violations.push_back(std::string(name) + " split has " + std::to_string(ds.records.size()) +
                                  " utterances, expected " + std::to_string(expected));
  };
  check_size(train, kMeldTrainSize, "train");
  check_size(validation, kMeldValidationSize, "validation");
  check_size(test, kMeldTestSize, "test");

  const auto counts = class_counts(train);
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    if (counts[c] == 0)
      report.violations.push_back("train split has no samples of class '" +
                                  std::string(kEmotionNames[c]) + "'");
  }

  std::unordered_set<std::string> seen;
  auto check_ids = [&](const SplitDataset& ds, const char* name) {
    std::unordered_set<std::string> local;
    for (const auto& rec : ds.records) {
      if (!local.insert(rec.id).second)
        report.violations.push_back(std::string(name) + " split repeats id '" + rec.id + "'");
      else if (!seen.insert(rec.id).second)
        report.violations.push_back("id '" + rec.id + "' leaks across splits (seen again in " +
                                    name + ")");
    }
  };
  check_ids(train, "train");
  check_ids(validation, "validation");
  check_ids(test, "test");
  return report;
}

namespace {

// +1 on the first half of the sequence, -1 on the rest.
double position_sign(std::size_t row, std::size_t len) {
  return row < (len + 1) / 2 ? 1.0 : -1.0;
}

// Classes are paired (0,1), (2,3), (4,5); 6 has no partner.
bool has_partner(std::size_t c) { return c < 6; }
std::size_t partner_of(std::size_t c) { return c ^ 1; }

Tensor noisy_sequence(const std::vector<double>& proto, std::size_t len, std::size_t dim,
                      bool signed_pattern, double noise, Rng& rng) {
  std::vector<double> rows(len * dim);
  for (std::size_t r = 0; r < len; ++r) {
    const double s = signed_pattern ? position_sign(r, len) : 1.0;
    for (std::size_t j = 0; j < dim; ++j)
      rows[r * dim + j] = s * proto[j] + noise * rng.normal();
  }
  return Tensor::from_vector({len, dim}, rows, DType::F32);
}

SplitDataset generate_split(const SyntheticConfig& cfg, Split split, std::size_t n,
                            const std::vector<std::vector<double>>& text_protos,
                            const std::vector<std::vector<double>>& audio_protos, Rng rng) {
  SplitDataset ds;
  ds.split = split;
  ds.feature_dim = cfg.feature_dim;
  ds.text_len_max = cfg.text_len;
  ds.audio_len_max = cfg.audio_len;
  ds.records.reserve(n);

  for (std::size_t i = 0; i < n; ++i) {
    // Class from the priors by inverse CDF.
    const double u = rng.uniform();
    std::size_t c = kNumEmotions - 1;
    double acc = 0;
    for (std::size_t k = 0; k < kNumEmotions; ++k) {
      acc += cfg.class_priors[k];
      if (u < acc) {
        c = k;
        break;
      }
    }

    const bool interaction = has_partner(c) && rng.uniform() < cfg.interaction_strength;
    std::size_t text_c = c, audio_c = c;
    if (interaction) {
      const std::size_t p = partner_of(c);
      const bool swap_leg = rng.uniform() < 0.5;
      if (c % 2 == 0) {
        // First pair member: aligned prototype pairs (own, own) or (partner, partner).
        if (swap_leg) { text_c = p; audio_c = p; }
      } else {
        // Second pair member: crossed pairs (partner, own) or (own, partner).
        if (swap_leg) { text_c = p; } else { audio_c = p; }
      }
    }

    UtteranceRecord rec;
    std::ostringstream id;
    id << to_string(split) << "-" << std::setfill('0') << std::setw(6) << i;
    rec.id = id.str();
    rec.label = static_cast<EmotionLabel>(c);
    rec.text_features = noisy_sequence(text_protos[text_c], cfg.text_len, cfg.feature_dim,
                                       interaction, cfg.noise_scale, rng);
    rec.audio_features = noisy_sequence(audio_protos[audio_c], cfg.audio_len, cfg.feature_dim,
                                        interaction, cfg.noise_scale, rng);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.feature_dim == 0 || cfg.text_len == 0 || cfg.audio_len == 0)
    throw ValueError("generate_synthetic: sizes must be positive");
  double prior_sum = 0;
  for (double p : cfg.class_priors) {
    if (p < 0) throw ValueError("generate_synthetic: class priors must be nonnegative");
    prior_sum += p;
  }
  if (std::abs(prior_sum - 1.0) > 1e-9)
    throw ValueError("generate_synthetic: class priors must sum to 1, got " + std::to_string(prior_sum));
  if (cfg.interaction_strength < 0 || cfg.interaction_strength > 1)
    throw ValueError("generate_synthetic: interaction_strength must be in [0, 1]");

  Rng master(cfg.seed);
  Rng proto_rng = master.derive(RngStream::Data);
  std::vector<std::vector<double>> text_protos(kNumEmotions), audio_protos(kNumEmotions);
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    text_protos[c].resize(cfg.feature_dim);
    audio_protos[c].resize(cfg.feature_dim);
    for (auto& v : text_protos[c]) v = cfg.prototype_scale * proto_rng.normal();
    for (auto& v : audio_protos[c]) v = cfg.prototype_scale * proto_rng.normal();
  }

  // Per-split streams: resizing one split never reshuffles another.
  SyntheticData data;
  data.train = generate_split(cfg, Split::Train, cfg.n_train, text_protos, audio_protos,
                              Rng(master.derive(RngStream::Data).next() + 1));
  data.validation = generate_split(cfg, Split::Validation, cfg.n_validation, text_protos, audio_protos,
                                   Rng(master.derive(RngStream::Data).next() + 2));
  data.test = generate_split(cfg, Split::Test, cfg.n_test, text_protos, audio_protos,
                             Rng(master.derive(RngStream::Data).next() + 3));
  return data;
}

std::array<std::size_t, kNumEmotions> class_counts(const SplitDataset& ds) {
  std::array<std::size_t, kNumEmotions> counts{};
  for (const auto& rec : ds.records) counts[static_cast<std::size_t>(rec.label)]++;
  return counts;
}

}  // namespace xmodal
