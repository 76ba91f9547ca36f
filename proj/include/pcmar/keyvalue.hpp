#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace pcmar {

/// Ordered `key=value` text document. Blank lines and lines starting with '#'
/// are ignored; whitespace around keys and values is trimmed.
class KeyValue {
 public:
  static KeyValue parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValue load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  std::string str() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }

  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;

  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_ = "<string>";
};

/// Shortest decimal that round-trips a double.
std::string format_double(double v);

}  // namespace pcmar
