// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dmsr {

using KeyValues = std::map<std::string, std::string>;

// "key = value" lines; '#' starts a comment; blank lines are ignored.
// Throws Parse with origin:line on malformed input or duplicate keys.
KeyValues parse_key_values(std::string_view text, const std::string& origin = "<text>");
KeyValues read_key_value_file(const std::filesystem::path& path);

// Binds dotted keys to fields of a config struct. Every key has an
// environment override named DMSR_<KEY> with '.' and '-' mapped to '_'
// and letters uppercased, e.g. saliency.ema_decay -> DMSR_SALIENCY_EMA_DECAY.
class ConfigSchema {
public:
    using Target = std::variant<int*, double*, bool*, std::string*, std::uint64_t*>;

    struct Entry {
        std::string key;
        Target target;
        std::string doc;
    };

    void add(std::string key, int& value, std::string doc = {});
    void add(std::string key, double& value, std::string doc = {});
    void add(std::string key, bool& value, std::string doc = {});
    void add(std::string key, std::string& value, std::string doc = {});
    void add(std::string key, std::uint64_t& value, std::string doc = {});

    // Unknown keys and unparsable values throw Config.
    void apply(const KeyValues& values, const std::string& origin = "config");
    // Applies every DMSR_* variable that names a known key. Returns the
    // number of overrides applied.
    int apply_environment();
    void set(const std::string& key, const std::string& value, const std::string& origin = "config");
    std::string get(const std::string& key) const;

    // "key = value  # doc" for every entry, in registration order.
    void print(std::ostream& out) const;
    const std::vector<Entry>& entries() const { return entries_; }

    static std::string env_name(const std::string& key);

private:
    const Entry* find(const std::string& key) const;
    std::vector<Entry> entries_;
};

std::string format_double(double value);

}  // namespace dmsr
