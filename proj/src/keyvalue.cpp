#include "pcmar/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pcmar/error.hpp"

namespace pcmar {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& text, const std::string& key, const std::string& origin) {
  N v{};
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw ValueError(origin + ": key '" + key + "' has non-numeric value '" + text + "'");
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

KeyValue KeyValue::parse(const std::string& text, const std::string& origin) {
  KeyValue kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ValueError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    const auto key = trim(t.substr(0, eq));
    if (key.empty()) throw ValueError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.values_[key] = trim(t.substr(eq + 1));
  }
  return kv;
}

KeyValue KeyValue::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValue::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << str();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string KeyValue::str() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void KeyValue::set(const std::string& key, double value) { values_[key] = format_double(value); }

std::string KeyValue::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ValueError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KeyValue::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValue::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(it->second, key, origin_);
}

std::int64_t KeyValue::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::int64_t>(it->second, key, origin_);
}

std::uint64_t KeyValue::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::uint64_t>(it->second, key, origin_);
}

}  // namespace pcmar
