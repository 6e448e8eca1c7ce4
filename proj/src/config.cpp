#include "foil/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace foil::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_number(const std::string& text, std::int64_t& iv, double& dv, bool& is_int) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    {
        auto [ptr, ec] = std::from_chars(begin, end, iv);
        if (ec == std::errc() && ptr == end) {
            is_int = true;
            return true;
        }
    }
    auto [ptr, ec] = std::from_chars(begin, end, dv);
    if (ec == std::errc() && ptr == end) {
        is_int = false;
        return true;
    }
    return false;
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open '" + path + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str(), path);
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
    ConfigMap map;
    map.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = [&] { return origin + ":" + std::to_string(line_no); };
        // Strip comments outside quotes.
        bool in_quotes = false;
        std::string body;
        for (char c : line) {
            if (c == '"') in_quotes = !in_quotes;
            if (c == '#' && !in_quotes) break;
            body += c;
        }
        body = trim(body);
        if (body.empty()) continue;
        if (body.front() == '[') {
            throw ConfigError("config " + where() + ": section headers are not supported, "
                              "use flat keys");
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config " + where() + ": expected 'key = value'");
        }
        const std::string key = trim(body.substr(0, eq));
        const std::string value_text = trim(body.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config " + where() + ": empty key");
        }
        for (char c : key) {
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) {
                throw ConfigError("config " + where() + ": invalid key '" + key + "'");
            }
        }
        if (map.values_.count(key) > 0) {
            throw ConfigError("config " + where() + ": duplicate key '" + key + "'");
        }
        if (value_text.empty()) {
            throw ConfigError("config " + where() + ": key '" + key + "' has no value");
        }

        Value value;
        if (value_text.front() == '"') {
            if (value_text.size() < 2 || value_text.back() != '"') {
                throw ConfigError("config " + where() + ": unterminated string for '" + key + "'");
            }
            value = value_text.substr(1, value_text.size() - 2);
        } else if (value_text == "true" || value_text == "false") {
            value = (value_text == "true");
        } else if (value_text.front() == '[') {
            if (value_text.back() != ']') {
                throw ConfigError("config " + where() + ": unterminated array for '" + key + "'");
            }
            std::vector<double> items;
            const std::string inner = value_text.substr(1, value_text.size() - 2);
            std::stringstream ss(inner);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                cell = trim(cell);
                if (cell.empty()) continue;
                std::int64_t iv = 0;
                double dv = 0.0;
                bool is_int = false;
                if (!parse_number(cell, iv, dv, is_int)) {
                    throw ConfigError("config " + where() + ": non-numeric array item '" + cell +
                                      "' in '" + key + "'");
                }
                items.push_back(is_int ? static_cast<double>(iv) : dv);
            }
            value = std::move(items);
        } else {
            std::int64_t iv = 0;
            double dv = 0.0;
            bool is_int = false;
            if (!parse_number(value_text, iv, dv, is_int)) {
                throw ConfigError("config " + where() + ": cannot parse value '" + value_text +
                                  "' for '" + key + "'");
            }
            if (is_int) {
                value = iv;
            } else {
                value = dv;
            }
        }
        map.values_.emplace(key, std::move(value));
    }
    return map;
}

bool ConfigMap::has(const std::string& key) const {
    return values_.count(key) > 0;
}

const ConfigMap::Value* ConfigMap::fetch(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_[key] = true;
    return &it->second;
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
    const Value* v = fetch(key);
    if (v == nullptr) return fallback;
    if (const bool* b = std::get_if<bool>(v)) return *b;
    throw ConfigError("config: key '" + key + "' must be true or false");
}

std::int64_t ConfigMap::get_int(const std::string& key, std::int64_t fallback) {
    const Value* v = fetch(key);
    if (v == nullptr) return fallback;
    if (const auto* i = std::get_if<std::int64_t>(v)) return *i;
    throw ConfigError("config: key '" + key + "' must be an integer");
}

std::uint64_t ConfigMap::get_uint64(const std::string& key, std::uint64_t fallback) {
    const Value* v = fetch(key);
    if (v == nullptr) return fallback;
    if (const auto* i = std::get_if<std::int64_t>(v)) {
        if (*i < 0) throw ConfigError("config: key '" + key + "' must be >= 0");
        return static_cast<std::uint64_t>(*i);
    }
    throw ConfigError("config: key '" + key + "' must be an integer");
}

double ConfigMap::get_double(const std::string& key, double fallback) {
    const Value* v = fetch(key);
    if (v == nullptr) return fallback;
    if (const auto* d = std::get_if<double>(v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
    throw ConfigError("config: key '" + key + "' must be a number");
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) {
    const Value* v = fetch(key);
    if (v == nullptr) return fallback;
    if (const auto* s = std::get_if<std::string>(v)) return *s;
    throw ConfigError("config: key '" + key + "' must be a quoted string");
}

std::vector<double> ConfigMap::get_double_array(const std::string& key,
                                                const std::vector<double>& fallback) {
    const Value* v = fetch(key);
    if (v == nullptr) return fallback;
    if (const auto* a = std::get_if<std::vector<double>>(v)) return *a;
    throw ConfigError("config: key '" + key + "' must be an array of numbers");
}

void ConfigMap::reject_unknown(const std::string& what) const {
    std::string unknown;
    for (const auto& [key, value] : values_) {
        if (consumed_.count(key) == 0) {
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
    }
    if (!unknown.empty()) {
        throw ConfigError(what + " (" + origin_ + "): unknown key(s): " + unknown);
    }
}

trainer::FoilConfig foil_config_from(ConfigMap& map) {
    trainer::FoilConfig cfg;
    cfg.lookback = map.get_int("lookback", cfg.lookback);
    cfg.horizon = map.get_int("horizon", cfg.horizon);
    cfg.envs = static_cast<int>(map.get_int("envs", cfg.envs));
    cfg.radius = static_cast<int>(map.get_int("radius", cfg.radius));
    cfg.lambda1 = map.get_double("lambda1", cfg.lambda1);
    cfg.lambda2 = map.get_double("lambda2", cfg.lambda2);
    cfg.lr_til = map.get_double("lr_til", cfg.lr_til);
    cfg.lr_tei = map.get_double("lr_tei", cfg.lr_tei);
    cfg.momentum = map.get_double("momentum", cfg.momentum);
    cfg.lr_decay = map.get_double("lr_decay", cfg.lr_decay);
    cfg.stage1_epochs = static_cast<int>(map.get_int("stage1_epochs", cfg.stage1_epochs));
    cfg.outer_rounds = static_cast<int>(map.get_int("outer_rounds", cfg.outer_rounds));
    cfg.em_delta = map.get_double("em_delta", cfg.em_delta);
    cfg.em_max_iters = static_cast<int>(map.get_int("em_max_iters", cfg.em_max_iters));
    cfg.em_epochs = static_cast<int>(map.get_int("em_epochs", cfg.em_epochs));
    cfg.batch_size = map.get_int("batch_size", cfg.batch_size);
    cfg.patience = static_cast<int>(map.get_int("patience", cfg.patience));
    cfg.seed = map.get_uint64("seed", cfg.seed);
    std::vector<double> hidden_default(cfg.backbone.hidden.begin(), cfg.backbone.hidden.end());
    const auto hidden = map.get_double_array("hidden", hidden_default);
    cfg.backbone.hidden.clear();
    for (double width : hidden) {
        cfg.backbone.hidden.push_back(static_cast<Index>(width));
    }
    cfg.backbone.d_rep = map.get_int("d_rep", cfg.backbone.d_rep);
    cfg.backbone.act =
        nn::activation_from_string(map.get_string("activation", nn::to_string(cfg.backbone.act)));
    cfg.revin = map.get_bool("revin", cfg.revin);
    cfg.feature_affine = map.get_bool("feature_affine", cfg.feature_affine);
    cfg.ablate_suf = map.get_bool("ablate_suf", cfg.ablate_suf);
    cfg.ablate_tei = map.get_bool("ablate_tei", cfg.ablate_tei);
    cfg.ablate_lp = map.get_bool("ablate_lp", cfg.ablate_lp);
    cfg.validate();
    return cfg;
}

scm::ScmSpec scm_spec_from(ConfigMap& map) {
    scm::ScmSpec spec;
    spec.series_len = map.get_int("series_len", spec.series_len);
    spec.k_true = static_cast<int>(map.get_int("k_true", spec.k_true));
    spec.d_inv = map.get_int("d_inv", spec.d_inv);
    spec.d_var = map.get_int("d_var", spec.d_var);
    const std::string layout = map.get_string("layout", "");
    if (!layout.empty()) {
        spec.layout = parse_layout(layout);
    }
    spec.z_block_len = map.get_int("z_block_len", spec.z_block_len);
    spec.alpha_min = map.get_double("alpha_min", spec.alpha_min);
    spec.alpha_max = map.get_double("alpha_max", spec.alpha_max);
    spec.beta_min = map.get_double("beta_min", spec.beta_min);
    spec.beta_max = map.get_double("beta_max", spec.beta_max);
    spec.shift_test_fraction = map.get_double("shift_test_fraction", spec.shift_test_fraction);
    spec.test_alpha_min = map.get_double("test_alpha_min", spec.test_alpha_min);
    spec.test_alpha_max = map.get_double("test_alpha_max", spec.test_alpha_max);
    spec.test_beta_min = map.get_double("test_beta_min", spec.test_beta_min);
    spec.test_beta_max = map.get_double("test_beta_max", spec.test_beta_max);
    spec.sigma_eps = map.get_double("sigma_eps", spec.sigma_eps);
    spec.sigma_var_noise = map.get_double("sigma_var_noise", spec.sigma_var_noise);
    spec.sigma_drive = map.get_double("sigma_drive", spec.sigma_drive);
    spec.ar_coeff = map.get_double("ar_coeff", spec.ar_coeff);
    spec.g_lags = map.get_int("g_lags", spec.g_lags);
    spec.lag_offset = map.get_int("lag_offset", spec.lag_offset);
    spec.g_kind = map.get_string("g_kind", spec.g_kind);
    spec.env_z_coupling = map.get_double("env_z_coupling", spec.env_z_coupling);
    spec.seed = map.get_uint64("seed", spec.seed);
    spec.validate();
    return spec;
}

std::vector<scm::Segment> parse_layout(const std::string& text) {
    std::vector<scm::Segment> segments;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        const auto x = token.find('x');
        if (x == std::string::npos) {
            throw ConfigError("layout: expected ENVxLEN tokens, got '" + token + "'");
        }
        scm::Segment seg;
        try {
            seg.env = std::stoi(token.substr(0, x));
            seg.len = static_cast<Index>(std::stol(token.substr(x + 1)));
        } catch (const std::exception&) {
            throw ConfigError("layout: cannot parse token '" + token + "'");
        }
        segments.push_back(seg);
    }
    if (segments.empty()) {
        throw ConfigError("layout: no segments in '" + text + "'");
    }
    return segments;
}

data::SplitSpec parse_split_fractions(const std::string& text, Index total) {
    std::stringstream ss(text);
    std::string cell;
    std::vector<double> fracs;
    while (std::getline(ss, cell, ':')) {
        cell = trim(cell);
        std::int64_t iv = 0;
        double dv = 0.0;
        bool is_int = false;
        if (!parse_number(cell, iv, dv, is_int)) {
            throw ConfigError("split: cannot parse fraction '" + cell + "'");
        }
        fracs.push_back(is_int ? static_cast<double>(iv) : dv);
    }
    if (fracs.size() != 3) {
        throw ConfigError("split: expected train:val:test fractions, got '" + text + "'");
    }
    return data::SplitSpec::from_fractions(total, fracs[0], fracs[1], fracs[2]);
}

}  // namespace foil::config
