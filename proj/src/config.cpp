// SPDX-License-Identifier: Apache-2.0
#include "dmsr/config.hpp"

#include "dmsr/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

namespace dmsr {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
    const char* first = text.data();
    const char* last = first + text.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

bool parse_bool(std::string text, bool& out) {
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
    if (text == "true" || text == "1" || text == "yes" || text == "on") {
        out = true;
        return true;
    }
    if (text == "false" || text == "0" || text == "no" || text == "off") {
        out = false;
        return true;
    }
    return false;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(value);
}

KeyValues parse_key_values(std::string_view text, const std::string& origin) {
    KeyValues out;
    int line_no = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(line_no);
        if (eq == std::string_view::npos) fail(ErrorKind::Parse, where + ": expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) fail(ErrorKind::Parse, where + ": empty key");
        if (!out.emplace(key, value).second) fail(ErrorKind::Parse, where + ": duplicate key '" + key + "'");
    }
    return out;
}

KeyValues read_key_value_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_key_values(ss.str(), path.string());
}

void ConfigSchema::add(std::string key, int& value, std::string doc) { entries_.push_back({std::move(key), &value, std::move(doc)}); }
void ConfigSchema::add(std::string key, double& value, std::string doc) { entries_.push_back({std::move(key), &value, std::move(doc)}); }
void ConfigSchema::add(std::string key, bool& value, std::string doc) { entries_.push_back({std::move(key), &value, std::move(doc)}); }
void ConfigSchema::add(std::string key, std::string& value, std::string doc) { entries_.push_back({std::move(key), &value, std::move(doc)}); }
void ConfigSchema::add(std::string key, std::uint64_t& value, std::string doc) { entries_.push_back({std::move(key), &value, std::move(doc)}); }

const ConfigSchema::Entry* ConfigSchema::find(const std::string& key) const {
    for (const auto& e : entries_)
        if (e.key == key) return &e;
    return nullptr;
}

void ConfigSchema::set(const std::string& key, const std::string& value, const std::string& origin) {
    const Entry* e = find(key);
    if (!e) fail(ErrorKind::Config, origin + ": unknown key '" + key + "'");
    const bool ok = std::visit(
        [&](auto* target) {
            using T = std::remove_pointer_t<decltype(target)>;
            if constexpr (std::is_same_v<T, bool>) {
                return parse_bool(value, *target);
            } else if constexpr (std::is_same_v<T, std::string>) {
                *target = value;
                return true;
            } else {
                return parse_number(value, *target);
            }
        },
        e->target);
    if (!ok) fail(ErrorKind::Config, origin + ": invalid value '" + value + "' for key '" + key + "'");
}

void ConfigSchema::apply(const KeyValues& values, const std::string& origin) {
    for (const auto& [key, value] : values) set(key, value, origin);
}

int ConfigSchema::apply_environment() {
    int applied = 0;
    for (const auto& e : entries_) {
        const std::string name = env_name(e.key);
        if (const char* v = std::getenv(name.c_str())) {
            set(e.key, v, "environment " + name);
            ++applied;
        }
    }
    return applied;
}

std::string ConfigSchema::get(const std::string& key) const {
    const Entry* e = find(key);
    if (!e) fail(ErrorKind::Config, "unknown key '" + key + "'");
    return std::visit(
        [](auto* target) -> std::string {
            using T = std::remove_pointer_t<decltype(target)>;
            if constexpr (std::is_same_v<T, bool>) {
                return *target ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::string>) {
                return *target;
            } else if constexpr (std::is_same_v<T, double>) {
                return format_double(*target);
            } else {
                return std::to_string(*target);
            }
        },
        e->target);
}

void ConfigSchema::print(std::ostream& out) const {
    for (const auto& e : entries_) {
        out << e.key << " = " << get(e.key);
        if (!e.doc.empty()) out << "  # " << e.doc;
        out << '\n';
    }
}

std::string ConfigSchema::env_name(const std::string& key) {
    std::string out = "DMSR_";
    for (const char c : key) {
        out += (c == '.' || c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    return out;
}

}  // namespace dmsr
