#pragma once

#include <string>
#include <utility>
#include <vector>

namespace edibert {

// Line-oriented `key = value` text. '#' lines are comments, blank lines are
// skipped, pairs keep file order. Lookups return the last occurrence so later
// entries override earlier ones.
using KvPairs = std::vector<std::pair<std::string, std::string>>;

KvPairs read_kv(const std::string& path);
void write_kv(const std::string& path, const KvPairs& kv);

bool kv_has(const KvPairs& kv, const std::string& key);
std::string kv_get(const KvPairs& kv, const std::string& key);  // throws FormatError
std::string kv_get_or(const KvPairs& kv, const std::string& key,
                      const std::string& fallback);

}  // namespace edibert
