#pragma once

// CoefficientTable persistence: a JSON document and a little-endian binary
// container ("BLCT", version 1). Both round-trip exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "besovlab/wavelet.hpp"

namespace besovlab {

inline const char* to_string(Normalization n) { return n == Normalization::L2 ? "L2" : "Lp"; }

inline Normalization normalization_from_string(const std::string& s) {
  if (s == "L2") return Normalization::L2;
  if (s == "Lp") return Normalization::Lp;
  throw std::invalid_argument("unknown normalization tag: " + s);
}

inline nlohmann::json to_json(const CoefficientTable& t) {
  nlohmann::json levels = nlohmann::json::array();
  for (int l = t.j0 - 1; l < t.J; ++l) {
    levels.push_back(std::vector<double>(t.values.begin() + static_cast<std::ptrdiff_t>(t.level_offset(l)),
                                         t.values.begin() + static_cast<std::ptrdiff_t>(t.level_end(l))));
  }
  return {{"format", "besovlab.coefficients"},
          {"version", 1},
          {"family", t.family},
          {"r", t.r},
          {"j0", t.j0},
          {"J", t.J},
          {"normalization", to_string(t.norm)},
          {"p", t.p},
          {"levels", levels}};
}

inline CoefficientTable table_from_json(const nlohmann::json& j) {
  if (j.at("format") != "besovlab.coefficients") throw std::runtime_error("not a coefficient table");
  if (j.at("version") != 1) throw std::runtime_error("unsupported coefficient table version");
  CoefficientTable t;
  t.family = j.at("family").get<std::string>();
  t.r = j.at("r").get<int>();
  t.j0 = j.at("j0").get<int>();
  t.J = j.at("J").get<int>();
  t.norm = normalization_from_string(j.at("normalization").get<std::string>());
  t.p = j.at("p").get<double>();
  if (t.j0 < 0 || t.j0 >= t.J) throw std::runtime_error("coefficient table: invalid levels");
  t.values.assign(t.total_size(), 0.0);
  const auto& levels = j.at("levels");
  if (levels.size() != static_cast<std::size_t>(t.J - t.j0 + 1))
    throw std::runtime_error("coefficient table: wrong number of levels");
  for (int l = t.j0 - 1; l < t.J; ++l) {
    const auto row = levels.at(static_cast<std::size_t>(l - t.j0 + 1)).get<std::vector<double>>();
    if (row.size() != t.level_end(l) - t.level_offset(l))
      throw std::runtime_error("coefficient table: level " + std::to_string(l) + " has wrong length");
    std::copy(row.begin(), row.end(), t.values.begin() + static_cast<std::ptrdiff_t>(t.level_offset(l)));
  }
  return t;
}

namespace detail {

template <class T>
void put(std::vector<char>& buf, T v) {
  static_assert(std::endian::native == std::endian::little, "binary format assumes little endian");
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<char>& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw std::runtime_error("coefficient table: truncated binary data");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::vector<char> to_binary(const CoefficientTable& t) {
  std::vector<char> buf{'B', 'L', 'C', 'T'};
  detail::put<std::uint32_t>(buf, 1);
  detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.family.size()));
  buf.insert(buf.end(), t.family.begin(), t.family.end());
  detail::put<std::int32_t>(buf, t.r);
  detail::put<std::int32_t>(buf, t.j0);
  detail::put<std::int32_t>(buf, t.J);
  detail::put<std::uint8_t>(buf, t.norm == Normalization::L2 ? 0 : 1);
  detail::put<double>(buf, t.p);
  detail::put<std::uint64_t>(buf, t.values.size());
  for (double v : t.values) detail::put<double>(buf, v);
  return buf;
}

inline CoefficientTable table_from_binary(const std::vector<char>& buf) {
  if (buf.size() < 8 || std::memcmp(buf.data(), "BLCT", 4) != 0)
    throw std::runtime_error("not a binary coefficient table");
  std::size_t pos = 4;
  if (detail::get<std::uint32_t>(buf, pos) != 1) throw std::runtime_error("unsupported binary table version");
  CoefficientTable t;
  const auto len = detail::get<std::uint32_t>(buf, pos);
  if (pos + len > buf.size()) throw std::runtime_error("coefficient table: truncated binary data");
  t.family.assign(buf.data() + pos, len);
  pos += len;
  t.r = detail::get<std::int32_t>(buf, pos);
  t.j0 = detail::get<std::int32_t>(buf, pos);
  t.J = detail::get<std::int32_t>(buf, pos);
  t.norm = detail::get<std::uint8_t>(buf, pos) == 0 ? Normalization::L2 : Normalization::Lp;
  t.p = detail::get<double>(buf, pos);
  if (t.j0 < 0 || t.j0 >= t.J) throw std::runtime_error("coefficient table: invalid levels");
  const auto count = detail::get<std::uint64_t>(buf, pos);
  if (count != t.total_size()) throw std::runtime_error("coefficient table: size mismatch");
  t.values.resize(count);
  for (auto& v : t.values) v = detail::get<double>(buf, pos);
  return t;
}

inline void write_binary(const CoefficientTable& t, const std::string& path) {
  const auto buf = to_binary(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline CoefficientTable read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return table_from_binary(buf);
}

}  // namespace besovlab
