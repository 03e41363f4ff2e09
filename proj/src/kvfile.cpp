#include "edibert/kvfile.hpp"

#include <fstream>

#include "edibert/errors.hpp"

namespace edibert {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

KvPairs read_kv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  KvPairs kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw FormatError(path + ":" + std::to_string(lineno) + ": empty key");
    kv.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

void write_kv(const std::string& path, const KvPairs& kv) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  if (!out) throw FormatError("write failed: " + path);
}

bool kv_has(const KvPairs& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return true;
  return false;
}

std::string kv_get(const KvPairs& kv, const std::string& key) {
  const std::string* found = nullptr;
  for (const auto& [k, v] : kv)
    if (k == key) found = &v;
  if (!found) throw FormatError("missing key: " + key);
  return *found;
}

std::string kv_get_or(const KvPairs& kv, const std::string& key,
                      const std::string& fallback) {
  return kv_has(kv, key) ? kv_get(kv, key) : fallback;
}

}  // namespace edibert
