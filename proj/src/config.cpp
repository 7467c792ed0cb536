#include "xmodal/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "xmodal/error.hpp"

namespace xmodal {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_unsigned(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
        throw ValueError("'" + std::string(key) + "': expected a non-negative integer, got '" + std::string(v) + "'");
    }
    return out;
}

double parse_real(std::string_view key, std::string_view v) {
    const std::string s(v);
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (s.empty() || used != s.size() || !std::isfinite(out)) {
        throw ValueError("'" + std::string(key) + "': expected a finite real, got '" + s + "'");
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ValueError("'" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

std::string real_text(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<void(RunConfig&, std::string_view, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename M>
Field size_field(M RunConfig::*member) {
    return {[member](RunConfig& c, std::string_view k, std::string_view v) {
                c.*member = static_cast<M>(parse_unsigned(k, v));
            },
            [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(double RunConfig::*member) {
    return {[member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = parse_real(k, v); },
            [member](const RunConfig& c) { return real_text(c.*member); }};
}

Field bool_field(bool RunConfig::*member) {
    return {[member](RunConfig& c, std::string_view k, std::string_view v) { c.*member = parse_bool(k, v); },
            [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"embed_dim", size_field(&RunConfig::embed_dim)},
        {"model_dim", size_field(&RunConfig::model_dim)},
        {"grid_size", size_field(&RunConfig::grid_size)},
        {"sa_layers", size_field(&RunConfig::sa_layers)},
        {"speech_layers", size_field(&RunConfig::speech_layers)},
        {"shared_layers", size_field(&RunConfig::shared_layers)},
        {"heads", size_field(&RunConfig::heads)},
        {"projection_heads", bool_field(&RunConfig::projection_heads)},
        {"mask_prob", real_field(&RunConfig::mask_prob)},
        {"mask_len", size_field(&RunConfig::mask_len)},
        {"swap_prob", real_field(&RunConfig::swap_prob)},
        {"tau_pred", real_field(&RunConfig::tau_pred)},
        {"tau", real_field(&RunConfig::tau)},
        {"momentum", real_field(&RunConfig::momentum)},
        {"queue_size", size_field(&RunConfig::queue_size)},
        {"mode",
         {[](RunConfig& c, std::string_view, std::string_view v) { c.mode = parse_loss_mode(v); },
          [](const RunConfig& c) { return std::string(loss_mode_name(c.mode)); }}},
        {"pred_loss_weight", real_field(&RunConfig::pred_loss_weight)},
        {"batch_size", size_field(&RunConfig::batch_size)},
        {"epochs", size_field(&RunConfig::epochs)},
        {"lr", real_field(&RunConfig::lr)},
        {"cosine_decay", bool_field(&RunConfig::cosine_decay)},
        {"warmup_steps", size_field(&RunConfig::warmup_steps)},
        {"max_grad_norm", real_field(&RunConfig::max_grad_norm)},
        {"seed", size_field(&RunConfig::seed)},
        {"checkpoint_every", size_field(&RunConfig::checkpoint_every)},
        {"topk", size_field(&RunConfig::topk)},
        {"holdout", real_field(&RunConfig::holdout)},
        {"probe_epochs", size_field(&RunConfig::probe_epochs)},
        {"probe_lr", real_field(&RunConfig::probe_lr)},
        {"pool_size", size_field(&RunConfig::pool_size)},
        {"pools", size_field(&RunConfig::pools)},
    };
    return table;
}

const Field& field(std::string_view key) {
    for (const auto& [name, f] : fields()) {
        if (name == key) return f;
    }
    throw ValueError("unknown config key '" + std::string(key) + "'");
}

struct Check {
    const char* key;  // empty for checks spanning several keys
    bool ok;
    std::string message;
};

std::vector<Check> checks(const RunConfig& c) {
    return {
        {"embed_dim", c.embed_dim >= 1, "embed_dim must be positive"},
        {"model_dim", c.model_dim >= 1, "model_dim must be positive"},
        {"grid_size", c.grid_size >= 1, "grid_size must be positive"},
        {"heads", c.heads >= 1, "heads must be positive"},
        {"", c.heads >= 1 && c.model_dim % c.heads == 0,
         "model_dim (" + std::to_string(c.model_dim) + ") must be divisible by heads (" + std::to_string(c.heads) +
             ")"},
        {"shared_layers", c.shared_layers >= 1, "shared_layers must be at least 1"},
        {"mask_prob", c.mask_prob >= 0.0 && c.mask_prob <= 1.0,
         "mask_prob must lie in [0, 1], got " + real_text(c.mask_prob)},
        {"mask_len", c.mask_len >= 1, "mask_len must be at least 1"},
        {"swap_prob", c.swap_prob >= 0.0 && c.swap_prob <= 1.0,
         "swap_prob must lie in [0, 1], got " + real_text(c.swap_prob)},
        {"tau_pred", c.tau_pred > 0.0, "tau_pred must be > 0, got " + real_text(c.tau_pred)},
        {"tau", c.tau > 0.0, "tau must be > 0, got " + real_text(c.tau)},
        {"momentum", c.momentum >= 0.0 && c.momentum <= 1.0,
         "momentum must lie in [0, 1], got " + real_text(c.momentum)},
        {"queue_size", c.queue_size >= 1, "queue_size must be at least 1"},
        {"pred_loss_weight", c.pred_loss_weight >= 0.0, "pred_loss_weight must be >= 0"},
        {"batch_size", c.batch_size >= 2, "batch_size must be at least 2, got " + std::to_string(c.batch_size)},
        {"lr", c.lr > 0.0, "lr must be > 0, got " + real_text(c.lr)},
        {"max_grad_norm", c.max_grad_norm >= 0.0, "max_grad_norm must be >= 0"},
        {"topk", c.topk >= 1, "topk must be at least 1"},
        {"holdout", c.holdout > 0.0 && c.holdout < 1.0, "holdout must lie in (0, 1), got " + real_text(c.holdout)},
        {"probe_lr", c.probe_lr > 0.0, "probe_lr must be > 0"},
        {"pool_size", c.pool_size >= 1, "pool_size must be at least 1"},
    };
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
    RunConfig next = *this;
    field(key).set(next, key, value);
    for (const auto& c : checks(next)) {
        if (key == c.key && !c.ok) throw ValueError(c.message);
    }
    *this = next;
}

std::string RunConfig::get(std::string_view key) const { return field(key).get(*this); }

void RunConfig::validate() const {
    for (const auto& c : checks(*this)) {
        if (!c.ok) throw ValueError(c.message);
    }
}

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [name, f] : fields()) out.push_back(name);
        return out;
    }();
    return names;
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& [name, f] : fields()) out += name + "=" + f.get(*this) + "\n";
    return out;
}

std::pair<std::string, std::string> split_assignment(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
        throw ValueError("expected KEY=VALUE, got '" + std::string(text) + "'");
    }
    return {std::string(trim(text.substr(0, eq))), std::string(trim(text.substr(eq + 1)))};
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& source) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        try {
            const auto [key, value] = split_assignment(line);
            config.set(key, value);
        } catch (const ValueError& e) {
            throw ValueError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    RunConfig config;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open config '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        apply_config_text(config, ss.str(), path.string());
    }
    for (const auto& o : overrides) {
        try {
            const auto [key, value] = split_assignment(o);
            config.set(key, value);
        } catch (const ValueError& e) {
            throw ValueError("--set " + o + ": " + e.what());
        }
    }
    config.validate();
    return config;
}

}  // namespace xmodal
