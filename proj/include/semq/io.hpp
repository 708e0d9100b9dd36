#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "semq/core.hpp"
#include "semq/mixture.hpp"

namespace semq {

/// Shortest round-trip decimal form of a double. Used for every float the
/// tool writes, so identical runs produce byte-identical files.
inline std::string fmt_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(
        static_cast<unsigned char>(bytes_[pos_]) |
        (static_cast<unsigned char>(bytes_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  void expect_magic(const char* magic) {
    need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0)
      throw IoError(path_ + ": bad magic, expected " + magic);
    pos_ += 4;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError(path_ + ": truncated file");
  }

  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return std::move(ss).str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace detail

constexpr std::uint16_t kFileFormatVersion = 1;

/// Feature file: magic "SEMF", version u16, M u32, N u32, then M*N
/// little-endian f32, row-major. Values are stored in single precision.
inline void write_features(const std::string& path, const FeatureSet& z) {
  std::string out;
  out.reserve(14 + z.size() * z.dim() * 4);
  out += "SEMF";
  detail::put_u16(out, kFileFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(z.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(z.dim()));
  for (double v : z.data()) detail::put_f32(out, static_cast<float>(v));
  detail::write_file(path, out);
}

inline FeatureSet read_features(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  detail::Reader r(bytes, path);
  r.expect_magic("SEMF");
  if (r.u16() != kFileFormatVersion) throw IoError(path + ": unsupported version");
  const std::uint32_t m = r.u32();
  const std::uint32_t n = r.u32();
  if (m == 0 || n == 0) throw IoError(path + ": empty feature set");
  std::vector<double> data;
  data.reserve(std::size_t{m} * n);
  for (std::size_t i = 0; i < std::size_t{m} * n; ++i) data.push_back(r.f32());
  if (!r.at_end()) throw IoError(path + ": trailing bytes");
  return FeatureSet(n, std::move(data), path);
}

/// Codebook file: magic "SEMC", version u16, K u32, N u32, then K*N
/// little-endian f32, row-major.
inline void write_codebook(const std::string& path, const Codebook& cb) {
  std::string out;
  out.reserve(14 + std::size_t{cb.size()} * cb.dim() * 4);
  out += "SEMC";
  detail::put_u16(out, kFileFormatVersion);
  detail::put_u32(out, cb.size());
  detail::put_u32(out, static_cast<std::uint32_t>(cb.dim()));
  for (double v : cb.data()) detail::put_f32(out, static_cast<float>(v));
  detail::write_file(path, out);
}

inline Codebook read_codebook(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  detail::Reader r(bytes, path);
  r.expect_magic("SEMC");
  if (r.u16() != kFileFormatVersion) throw IoError(path + ": unsupported version");
  const std::uint32_t k = r.u32();
  const std::uint32_t n = r.u32();
  if (k < 2 || n == 0) throw IoError(path + ": invalid codebook header");
  std::vector<double> words;
  words.reserve(std::size_t{k} * n);
  for (std::size_t i = 0; i < std::size_t{k} * n; ++i) words.push_back(r.f32());
  if (!r.at_end()) throw IoError(path + ": trailing bytes");
  return Codebook(n, std::move(words));
}

/// Plain key = value configuration text. '#' starts a comment, keys may
/// repeat (values keep file order).
struct ConfigFile {
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(std::string_view key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return true;
    }
    return false;
  }

  std::string get(std::string_view key, std::string fallback = {}) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return v;
    }
    return fallback;
  }

  std::vector<std::string> get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries) {
      if (k == key) out.push_back(v);
    }
    return out;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ValidationError("invalid number for " + what + ": '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw ValidationError("invalid integer for " + what + ": '" + s + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(s.substr(start)));
      return out;
    }
    out.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok, what));
  return out;
}

}  // namespace detail

inline ConfigFile parse_config(const std::string& path) {
  const std::string text = detail::read_file(path);
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ValidationError(path + ": expected 'key = value': " + t);
    cfg.entries.emplace_back(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return cfg;
}

/// Mixture spec file: keys dim, count, seed, and one `component` line per
/// component with "weight | mean... | variance...".
inline MixtureSpec parse_mixture_spec(const std::string& path) {
  const ConfigFile cfg = parse_config(path);
  MixtureSpec spec;
  spec.dim = detail::parse_u64(cfg.get("dim", "0"), "dim");
  spec.count = detail::parse_u64(cfg.get("count", "0"), "count");
  spec.seed = detail::parse_u64(cfg.get("seed", "0"), "seed");
  for (const std::string& line : cfg.get_all("component")) {
    const auto parts = detail::split(line, '|');
    if (parts.size() != 3)
      throw ValidationError(path + ": component needs 'weight | mean | variance'");
    MixtureComponent comp;
    comp.weight = detail::parse_double(parts[0], "component weight");
    comp.mean = detail::parse_double_list(parts[1], "component mean");
    comp.variance = detail::parse_double_list(parts[2], "component variance");
    spec.components.push_back(std::move(comp));
  }
  spec.validate();
  return spec;
}

}  // namespace semq
