#include "steel/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <istream>
#include <ostream>

#include "steel/errors.hpp"

namespace steel {

namespace {
constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
    i += 3;
  }
  const std::size_t rem = bytes.size() - i;
  if (rem == 1) {
    std::uint32_t v = bytes[i] << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.append("==");
  } else if (rem == 2) {
    std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  while (!text.empty() && text.back() == '=') text.remove_suffix(1);
  std::vector<std::uint8_t> out;
  out.reserve(text.size() * 3 / 4);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    const int v = b64_value(c);
    if (v < 0) throw FormatError("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

std::vector<std::uint8_t> pack_f32(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    bytes[4 * i] = static_cast<std::uint8_t>(u & 0xff);
    bytes[4 * i + 1] = static_cast<std::uint8_t>((u >> 8) & 0xff);
    bytes[4 * i + 2] = static_cast<std::uint8_t>((u >> 16) & 0xff);
    bytes[4 * i + 3] = static_cast<std::uint8_t>((u >> 24) & 0xff);
  }
  return bytes;
}

std::vector<double> unpack_f32(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw FormatError("f32 payload not a multiple of 4");
  std::vector<double> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                      (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    values[i] = static_cast<double>(std::bit_cast<float>(u));
  }
  return values;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  std::uint8_t b[2] = {static_cast<std::uint8_t>(v & 0xff),
                       static_cast<std::uint8_t>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

namespace {
void read_exact(std::istream& in, std::uint8_t* buf, std::size_t len) {
  in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(len));
  if (static_cast<std::size_t>(in.gcount()) != len)
    throw FormatError("unexpected end of file");
}
}  // namespace

std::uint16_t read_u16(std::istream& in) {
  std::uint8_t b[2];
  read_exact(in, b, 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint8_t b[4];
  read_exact(in, b, 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint8_t b[8];
  read_exact(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

}  // namespace steel
