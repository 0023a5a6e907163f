#include "luq/config.hpp"

#include "luq/error.hpp"
#include "luq/io.hpp"

namespace luq {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<ConfigEntry> parse_config(std::string_view text, const std::set<std::string>& allowed,
                                      std::string_view source) {
    std::vector<ConfigEntry> out;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    if (text.starts_with("\xEF\xBB\xBF")) pos = 3;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = std::string(source) + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(Errc::Config, where + ": expected 'key = value'");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) fail(Errc::Config, where + ": missing key");
        if (!allowed.contains(key)) fail(Errc::Config, where + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) fail(Errc::Config, where + ": duplicate key '" + key + "'");
        out.push_back({std::move(key), std::move(value), line_no});
    }
    return out;
}

std::vector<ConfigEntry> read_config(const std::filesystem::path& path, const std::set<std::string>& allowed) {
    return parse_config(read_file(path), allowed, path.string());
}

}  // namespace luq
