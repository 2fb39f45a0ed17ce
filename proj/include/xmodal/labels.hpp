// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace xmodal {

// The seven emotion classes in canonical order. This ordering is fixed
// everywhere: logits, confusion matrices, reports, serialized labels.
enum class EmotionLabel : std::uint8_t {
  Anger = 0,
  Disgust = 1,
  Fear = 2,
  Joy = 3,
  Neutral = 4,
  Sadness = 5,
  Surprise = 6,
};

inline constexpr std::size_t kNumEmotions = 7;

inline constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "anger", "disgust", "fear", "joy", "neutral", "sadness", "surprise"};

constexpr std::string_view to_string(EmotionLabel label) {
  return kEmotionNames[static_cast<std::size_t>(label)];
}

constexpr std::optional<EmotionLabel> parse_emotion_label(std::string_view name) {
  for (std::size_t i = 0; i < kNumEmotions; ++i)
    if (kEmotionNames[i] == name) return static_cast<EmotionLabel>(i);
  return std::nullopt;
}

}  // namespace xmodal
