// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <ostream>

#include "xmodal/tensor.hpp"

namespace xmodal {

// Tensor binary format:
//   magic "XMF1" | u8 dtype (0 = f32, 1 = f64) | u8 rank |
//   rank x u64 little-endian dims | row-major IEEE-754 little-endian payload.
// Round trips are bit-exact.
inline constexpr std::array<char, 4> kTensorMagic = {'X', 'M', 'F', '1'};

std::size_t serialized_size(const Tensor& t);
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

}  // namespace xmodal
