// SPDX-License-Identifier: Apache-2.0
#include "xmodal/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

namespace xmodal {

namespace {

void put_u64_le(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, 8);
}

std::uint64_t get_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

template <class T, class Bits>
void write_payload(std::ostream& os, std::span<const T> data) {
  for (T v : data) {
    const Bits bits = std::bit_cast<Bits>(v);
    char buf[sizeof(Bits)];
    for (std::size_t i = 0; i < sizeof(Bits); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    os.write(buf, sizeof(Bits));
  }
}

template <class T, class Bits>
void read_payload(std::istream& is, std::span<T> data) {
  for (T& v : data) {
    unsigned char buf[sizeof(Bits)];
    is.read(reinterpret_cast<char*>(buf), sizeof(Bits));
    Bits bits = 0;
    for (std::size_t i = 0; i < sizeof(Bits); ++i) bits |= static_cast<Bits>(buf[i]) << (8 * i);
    v = std::bit_cast<T>(bits);
  }
}

}  // namespace

std::size_t serialized_size(const Tensor& t) {
  const std::size_t elem = t.dtype() == DType::F32 ? 4 : 8;
  return 4 + 1 + 1 + 8 * t.rank() + elem * t.numel();
}

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic.data(), 4);
  const char dtype_code = t.dtype() == DType::F32 ? 0 : 1;
  os.put(dtype_code);
  if (t.rank() > 255) throw ValueError("write_tensor: rank exceeds format limit");
  os.put(static_cast<char>(t.rank()));
  for (std::size_t d : t.shape()) put_u64_le(os, d);
  if (t.dtype() == DType::F32)
    write_payload<float, std::uint32_t>(os, t.data_as<float>());
  else
    write_payload<double, std::uint64_t>(os, t.data_as<double>());
  if (!os) throw ValueError("write_tensor: stream write failed");
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kTensorMagic.data(), 4) != 0)
    throw ValueError("read_tensor: bad magic (expected XMF1)");
  const int dtype_code = is.get();
  const int rank = is.get();
  if (!is) throw ValueError("read_tensor: truncated header");
  if (dtype_code != 0 && dtype_code != 1)
    throw ValueError("read_tensor: unknown dtype code " + std::to_string(dtype_code));
  const DType dtype = dtype_code == 0 ? DType::F32 : DType::F64;
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& d : shape) d = static_cast<std::size_t>(get_u64_le(is));
  if (!is) throw ValueError("read_tensor: truncated dimension header");
  Tensor t = Tensor::zeros(std::move(shape), dtype);
  if (dtype == DType::F32)
    read_payload<float, std::uint32_t>(is, t.mutable_data<float>());
  else
    read_payload<double, std::uint64_t>(is, t.mutable_data<double>());
  if (!is) throw ValueError("read_tensor: truncated payload (expected " +
                            std::to_string(t.numel()) + " elements)");
  return t;
}

}  // namespace xmodal
