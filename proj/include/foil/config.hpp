#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "foil/scm.hpp"
#include "foil/trainer.hpp"
#include "foil/types.hpp"

namespace foil::config {

/// Parsed key/value config file: a flat TOML subset.
///
/// Supported lines: `key = value` with value one of
///   integer, float, true/false, "string", [number, number, ...]
/// plus `#` comments and blank lines. Section headers are rejected. Typed
/// getters consume keys; reject_unknown() then fails on anything left over,
/// which is how typos are caught.
class ConfigMap {
public:
    using Value = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;

    static ConfigMap parse_file(const std::string& path);
    static ConfigMap parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const;

    bool get_bool(const std::string& key, bool fallback);
    std::int64_t get_int(const std::string& key, std::int64_t fallback);
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback);
    double get_double(const std::string& key, double fallback);
    std::string get_string(const std::string& key, const std::string& fallback);
    std::vector<double> get_double_array(const std::string& key,
                                         const std::vector<double>& fallback);

    /// Throws ConfigError naming every unconsumed key.
    void reject_unknown(const std::string& what) const;

private:
    const Value* fetch(const std::string& key);

    std::string origin_;
    std::map<std::string, Value> values_;
    std::map<std::string, bool> consumed_;
};

/// Builds a FoilConfig from the documented key set, starting from defaults.
trainer::FoilConfig foil_config_from(ConfigMap& map);

/// Builds an ScmSpec from the documented key set, starting from defaults.
/// The layout key is a compact string, e.g. "0x600,1x400,0x600".
scm::ScmSpec scm_spec_from(ConfigMap& map);

std::vector<scm::Segment> parse_layout(const std::string& text);

/// Fractions "0.7:0.1:0.2" -> SplitSpec over `total` rows.
data::SplitSpec parse_split_fractions(const std::string& text, Index total);

}  // namespace foil::config
