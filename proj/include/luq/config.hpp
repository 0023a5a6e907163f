#pragma once

// Flat run configuration: UTF-8 text with one `key = value` per line and
// `#` starting a comment. Keys mirror the long command-line flags.

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace luq {

struct ConfigEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

// Throws Errc::Config naming the line for malformed lines, duplicate keys
// and keys outside `allowed`.
std::vector<ConfigEntry> parse_config(std::string_view text, const std::set<std::string>& allowed,
                                      std::string_view source = "config");
std::vector<ConfigEntry> read_config(const std::filesystem::path& path, const std::set<std::string>& allowed);

}  // namespace luq
