#include "hit/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hit/errors.hpp"

namespace hit {

KvMap load_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open config file: " + path);
    KvMap kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw data_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            const size_t x = s.find_first_not_of(" \t");
            const size_t y = s.find_last_not_of(" \t");
            s = (x == std::string::npos) ? std::string() : s.substr(x, y - x + 1);
        };
        trim(key);
        trim(val);
        if (key.empty()) throw data_error(path + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

void save_kv_file(const std::string& path, const KvMap& kv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw data_error("cannot write config file: " + path);
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::string format_double(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

}  // namespace hit
