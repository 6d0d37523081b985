#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "zenith/common.hpp"

namespace zenith {

// ---------------------------------------------------------------------------
// Run manifest: every CLI run records its command, resolved configuration,
// seed, and the checksums of every artifact it emitted. No timestamps, so a
// re-run with the same inputs reproduces the manifest byte-for-byte.
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string command;
    std::string config_path;
    nlohmann::json resolved_config;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::vector<std::pair<std::string, std::string>> artifacts;  // path, fnv1a64 hex

    nlohmann::json to_json() const {
        nlohmann::json o;
        o["command"] = command;
        o["config_path"] = config_path;
        o["resolved_config"] = resolved_config;
        o["seed"] = seed;
        o["output_dir"] = output_dir;
        nlohmann::json arts = nlohmann::json::array();
        for (const auto& [path, checksum] : artifacts)
            arts.push_back({{"path", path}, {"checksum", checksum}});
        o["artifacts"] = arts;
        return o;
    }
};

inline std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("checksum: cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a64_hex(buf.str());
}

// write-to-temp-then-rename so a manifest is never observed half-written
inline void write_manifest_atomic(const RunManifest& m, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw io_error("manifest: cannot write '" + tmp + "'");
        out << m.to_json().dump(2) << "\n";
        if (!out) throw io_error("manifest: write failed for '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw io_error("manifest: cannot move '" + tmp + "' to '" + path + "'");
}

}  // namespace zenith
