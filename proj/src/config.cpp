#include "config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "checksum.hpp"
#include "error.hpp"

namespace clusdiff {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValues KeyValues::parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::MissingInput, "no config file at " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str(), path);
}

KeyValues KeyValues::parse_text(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config,
           origin + ":" + std::to_string(lineno) + ": expected key = value, got \"" + line + "\"");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      fail(ErrorKind::Config, origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.index_.count(key))
      fail(ErrorKind::Config,
           origin + ":" + std::to_string(lineno) + ": duplicate key \"" + key + "\"");
    kv.set(key, value);
  }
  return kv;
}

const std::string* KeyValues::find(const std::string& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &items_[it->second].second;
}

bool KeyValues::has(const std::string& key) const { return index_.count(key) > 0; }

void KeyValues::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    items_[it->second].second = value;
    return;
  }
  index_[key] = items_.size();
  items_.emplace_back(key, value);
}

std::string KeyValues::get_string(const std::string& key, const std::string& def) const {
  const std::string* v = find(key);
  return v ? *v : def;
}

std::string KeyValues::require_string(const std::string& key) const {
  const std::string* v = find(key);
  if (!v) fail(ErrorKind::Config, "config is missing required key \"" + key + "\"");
  return *v;
}

int64_t KeyValues::get_int(const std::string& key, int64_t def) const {
  const std::string* v = find(key);
  if (!v) return def;
  char* end = nullptr;
  long long x = std::strtoll(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0')
    fail(ErrorKind::Config, "config key \"" + key + "\" is not an integer: \"" + *v + "\"");
  return x;
}

uint64_t KeyValues::get_u64(const std::string& key, uint64_t def) const {
  const std::string* v = find(key);
  if (!v) return def;
  char* end = nullptr;
  unsigned long long x = std::strtoull(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0' || v->front() == '-')
    fail(ErrorKind::Config, "config key \"" + key + "\" is not a nonnegative integer: \"" + *v + "\"");
  return x;
}

double KeyValues::get_double(const std::string& key, double def) const {
  const std::string* v = find(key);
  if (!v) return def;
  char* end = nullptr;
  double x = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0')
    fail(ErrorKind::Config, "config key \"" + key + "\" is not a number: \"" + *v + "\"");
  return x;
}

bool KeyValues::get_bool(const std::string& key, bool def) const {
  const std::string* v = find(key);
  if (!v) return def;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  fail(ErrorKind::Config, "config key \"" + key + "\" is not a boolean: \"" + *v + "\"");
}

void KeyValues::check_known(const std::vector<std::string>& allowed) const {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : items_)
    if (!ok.count(k)) fail(ErrorKind::Config, "unknown config key \"" + k + "\"");
}

std::string KeyValues::canonical() const {
  std::vector<std::pair<std::string, std::string>> sorted = items_;
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& [k, v] : sorted) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

uint32_t KeyValues::checksum() const { return crc32_str(canonical()); }

}  // namespace clusdiff
