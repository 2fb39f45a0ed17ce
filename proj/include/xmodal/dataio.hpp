// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xmodal/labels.hpp"
#include "xmodal/tensor.hpp"

namespace xmodal {

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);

// One sample: both modality feature sequences with their pre-padding lengths.
struct UtteranceRecord {
  std::string id;
  EmotionLabel label = EmotionLabel::Anger;
  Tensor text_features;   // [t_text x d]
  Tensor audio_features;  // [t_audio x d]
};

struct SplitDataset {
  Split split = Split::Train;
  std::size_t feature_dim = 0;
  std::size_t text_len_max = 0;
  std::size_t audio_len_max = 0;
  std::vector<UtteranceRecord> records;

  // Structural checks: unique ids, feature dims equal feature_dim, sequence
  // lengths within the declared maxima. Throws ValueError on violation.
  void validate() const;
};

// On-disk layout under `dir`:
//   manifest.jsonl  — header line, then one record line per sample with keys
//                     id, label, text_off, text_len, audio_off, audio_len
//                     (byte offsets/lengths into features.bin)
//   features.bin    — concatenated XMF1 tensor records
// write(read(x)) is byte-identical to write(x).
void write_dataset(const SplitDataset& ds, const std::filesystem::path& dir);
SplitDataset read_dataset(const std::filesystem::path& dir);

// MELD split sizes from the dataset's published partitions.
inline constexpr std::size_t kMeldTrainSize = 9988;
inline constexpr std::size_t kMeldValidationSize = 1108;
inline constexpr std::size_t kMeldTestSize = 2610;

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Checks the three splits against the MELD schema: exact sizes, full 7-class
// label coverage in train, and id uniqueness within and across splits. Always
// returns a report; callers decide whether violations are fatal.
ValidationReport validate_meld_schema(const SplitDataset& train, const SplitDataset& validation,
                                      const SplitDataset& test);

// Synthetic bimodal dataset. Each class c has a text prototype u_c and an
// audio prototype v_c (seeded Gaussian draws, scaled by prototype_scale);
// a record's rows are its prototypes plus iid Gaussian noise.
//
// With probability interaction_strength a record becomes an "interaction"
// sample: classes are paired (0,1), (2,3), (4,5), and within a pair the
// prototype pairs are permuted so that each single modality is ambiguous
// between the two classes while the (text, audio) pair still determines the
// label. For pair (a, b), class a draws (u_a, v_a) or (u_b, v_b), class b
// draws (u_a, v_b) or (u_b, v_a); interaction rows also carry a fixed
// half-positive/half-negative sign pattern along the sequence axis so the
// combination is recoverable by bilinear attention but provably not by a
// linear map over concatenated features (the two class-a pairs and the two
// class-b pairs have equal feature sums). Class 6 has no partner and stays
// unimodally identifiable. At intermediate strengths the aligned pairs of a
// pair's second class occur under both labels; strengths 0 and 1 are exact.
struct SyntheticConfig {
  std::size_t n_train = 128;
  std::size_t n_validation = 32;
  std::size_t n_test = 32;
  std::size_t feature_dim = 8;
  std::size_t text_len = 4;
  std::size_t audio_len = 6;
  std::array<double, kNumEmotions> class_priors = {1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7,
                                                   1.0 / 7, 1.0 / 7, 1.0 / 7};
  double interaction_strength = 0.0;
  double noise_scale = 0.1;
  double prototype_scale = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  SplitDataset train;
  SplitDataset validation;
  SplitDataset test;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

std::array<std::size_t, kNumEmotions> class_counts(const SplitDataset& ds);

}  // namespace xmodal
