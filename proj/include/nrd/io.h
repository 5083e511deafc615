#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nrd/tensor.h"

namespace nrd {

// "NRDT" tensor record: magic, u8 version=1, u8 dtype (0=real32, 1=real64),
// u8 ndim, u8 pad, ndim x u32 extents, raw little-endian values.
void write_tensor(const AnyTensor& t, const std::string& path);
AnyTensor read_tensor(const std::string& path);

// In-memory encoders, shared by the bundle container and the golden-bytes tests.
void encode_tensor(const AnyTensor& t, std::vector<std::uint8_t>& out);
AnyTensor decode_tensor(const std::vector<std::uint8_t>& bytes, std::size_t& pos);

// "NRDB" container: magic, u32 entry count, then per entry
// u16 name length + UTF-8 name + embedded NRDT record.
void write_bundle(const NamedTensorBundle& b, const std::string& path);
NamedTensorBundle read_bundle(const std::string& path);

// Binary PGM (P5, maxval 255) for label maps; round-trips values exactly.
void write_pgm(const LabelMap& labels, const std::string& path);
LabelMap read_pgm(const std::string& path);

// Binary PPM (P6) visualization; class id -> palette color, IGNORE -> black.
using Rgb = std::array<std::uint8_t, 3>;
const std::array<Rgb, 20>& class_palette();
void write_ppm(const LabelMap& labels, const std::string& path);

} // namespace nrd
