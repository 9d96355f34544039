#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace steel {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Little-endian float32 packing: the only place 32-bit floats appear.
std::vector<std::uint8_t> pack_f32(std::span<const double> values);
std::vector<double> unpack_f32(std::span<const std::uint8_t> bytes);

// 17 significant digits: round-trips doubles exactly and keeps result files
// byte-identical across reruns.
std::string format_double(double v);

void write_u16(std::ostream& out, std::uint16_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
std::uint16_t read_u16(std::istream& in);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);

}  // namespace steel
