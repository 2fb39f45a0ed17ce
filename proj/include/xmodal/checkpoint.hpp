// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "xmodal/model.hpp"

namespace xmodal {

// Checkpoint = a JSON metadata file plus a binary tensor container:
//   <json>  — {"format": "xmodal-checkpoint-v1", "config": <ModelConfig>,
//              "tensors": [{"name", "offset", "length"}, ...]}
//   <bin>   — concatenated XMF1 tensor records at those byte offsets.
// Tensor names follow BimodalClassifier::named_parameters(): text_encoder.*,
// audio_encoder.*, fusion.cross.*, fusion.self.*, head_hidden.*, head.*.
void save_checkpoint(const std::filesystem::path& json_path,
                     const std::filesystem::path& bin_path, const BimodalClassifier& model);

BimodalClassifier load_checkpoint(const std::filesystem::path& json_path,
                                  const std::filesystem::path& bin_path);

// Convenience pair <dir>/checkpoint.json + <dir>/checkpoint.bin.
void save_checkpoint(const std::filesystem::path& dir, const BimodalClassifier& model);
BimodalClassifier load_checkpoint(const std::filesystem::path& dir);

}  // namespace xmodal
