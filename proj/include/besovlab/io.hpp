#pragma once

// Output plumbing: CSV text with round-trip precision, SHA-256 digests and
// an output directory that appears only once every file has been written.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <system_error>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace besovlab {

/// Shortest-free, locale-independent decimal with 17 significant digits.
inline std::string format_double(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { append(header); }

  template <class... Cells>
  Csv& row(const Cells&... cells) {
    static_assert(sizeof...(Cells) > 0);
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    if (r.size() != width_) throw std::logic_error("csv: row width does not match header");
    append(r);
    return *this;
  }

  const std::string& str() const noexcept { return text_; }

 private:
  template <class T>
  static std::string cell(const T& v) {
    if constexpr (std::is_floating_point_v<T>) return format_double(static_cast<double>(v));
    else if constexpr (std::is_integral_v<T>) return std::to_string(v);
    else return std::string(v);
  }

  void append(const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) text_ += ',';
      text_ += r[i];
    }
    text_ += '\n';
  }

  std::size_t width_;
  std::string text_;
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

/// Collects files in a staging directory next to the target and renames it
/// into place on commit. An existing target is replaced only if it is empty
/// or holds a manifest.json from an earlier run.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path target) : target_(std::move(target)) {
    namespace fs = std::filesystem;
    if (target_.empty()) throw std::invalid_argument("output directory must be given");
    target_ = fs::absolute(target_).lexically_normal();
    if (target_.filename().empty()) target_ = target_.parent_path();
    if (fs::exists(target_)) {
      if (!fs::is_directory(target_)) throw std::runtime_error("output path exists and is not a directory: " + target_.string());
      if (!fs::is_empty(target_) && !fs::exists(target_ / "manifest.json"))
        throw std::runtime_error("refusing to overwrite a non-empty directory without manifest.json: " + target_.string());
    }
    fs::create_directories(target_.parent_path());
    staging_ = target_.parent_path() / (target_.filename().string() + ".partial");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  const std::filesystem::path& target() const noexcept { return target_; }

  void write(const std::string& rel, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path p = staging_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("cannot write " + p.string());
    files_[rel] = {sha256_hex(content), content.size()};
  }

  /// Writes manifest.json with `meta` plus the file list, then moves the
  /// staging directory to the target.
  void commit(nlohmann::json meta) {
    namespace fs = std::filesystem;
    nlohmann::json list = nlohmann::json::array();
    for (const auto& [path, info] : files_) list.push_back({{"path", path}, {"sha256", info.first}, {"bytes", info.second}});
    meta["files"] = list;
    const std::string text = meta.dump(2) + "\n";
    {
      std::ofstream out(staging_ / "manifest.json", std::ios::binary);
      out << text;
      if (!out) throw std::runtime_error("cannot write manifest.json");
    }
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(staging_, target_);
  }

  ~OutputDir() {
    std::error_code ec;
    std::filesystem::remove_all(staging_, ec);
  }

  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

 private:
  std::filesystem::path target_, staging_;
  std::map<std::string, std::pair<std::string, std::size_t>> files_;
};

}  // namespace besovlab
