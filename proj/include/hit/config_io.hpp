#pragma once

#include <map>
#include <string>
#include <vector>

namespace hit {

// Flat key=value text files, used for resolved run configs, model configs and
// metric dumps. Keys are written in sorted order so emitted files are
// byte-stable. '#' starts a comment; blank lines are ignored.
using KvMap = std::map<std::string, std::string>;

KvMap load_kv_file(const std::string& path);
void save_kv_file(const std::string& path, const KvMap& kv);

std::string format_double(double v, int decimals);

}  // namespace hit
