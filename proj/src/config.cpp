#include "s3net/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace s3net {

namespace {

struct Binding {
    std::string section;
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& section, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw config_error(format_msg("config: [", section, "] ", key,
                                      " expects an integer, got '", v, "'"));
    }
}

double parse_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw config_error(format_msg("config: [", section, "] ", key,
                                      " expects a number, got '", v, "'"));
    }
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error(format_msg("config: [", section, "] ", key,
                                  " expects true/false, got '", v, "'"));
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

#define BIND_INT(section, key, field)                                                       \
    {section, key,                                                                          \
     [](RunConfig& c, const std::string& v) { c.field = parse_int(section, key, v); },      \
     [](const RunConfig& c) { return std::to_string(c.field); }}
#define BIND_DOUBLE(section, key, field)                                                    \
    {section, key,                                                                          \
     [](RunConfig& c, const std::string& v) { c.field = parse_double(section, key, v); },   \
     [](const RunConfig& c) { return fmt_double(c.field); }}
#define BIND_BOOL(section, key, field)                                                      \
    {section, key,                                                                          \
     [](RunConfig& c, const std::string& v) { c.field = parse_bool(section, key, v); },     \
     [](const RunConfig& c) { return c.field ? std::string("true") : std::string("false"); }}
#define BIND_STRING(section, key, field)                                                    \
    {section, key, [](RunConfig& c, const std::string& v) { c.field = v; },                 \
     [](const RunConfig& c) { return c.field; }}

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> table = {
        BIND_INT("model", "base_channels", model.base_channels),
        BIND_INT("model", "f_d", model.f_d),
        BIND_INT("model", "f_s", model.f_s),
        BIND_INT("model", "num_scales", model.num_scales),
        BIND_INT("model", "d_min", model.d_min),
        BIND_INT("model", "d_max", model.d_max),
        BIND_INT("model", "classes", model.num_classes),
        BIND_BOOL("model", "disable_dm", model.disable_dm),
        BIND_BOOL("model", "disable_sm", model.disable_sm),
        BIND_BOOL("model", "disable_sfm", model.disable_sfm),
        BIND_BOOL("model", "disable_dcv", model.disable_dcv),
        BIND_BOOL("model", "disable_scv", model.disable_scv),
        BIND_BOOL("model", "semantic_left_only", model.semantic_left_only),
        BIND_BOOL("model", "intra_round_skip", model.intra_round_skip),
        BIND_DOUBLE("loss", "lambda_disp", loss.lambda_disp),
        BIND_DOUBLE("loss", "lambda_sem", loss.lambda_sem),
        BIND_DOUBLE("loss", "round_w1", loss.round_weights[0]),
        BIND_DOUBLE("loss", "round_w2", loss.round_weights[1]),
        BIND_DOUBLE("loss", "round_w3", loss.round_weights[2]),
        {"loss", "ignore_class",
         [](RunConfig& c, const std::string& v) {
             c.loss.ignore_class = static_cast<int32_t>(parse_int("loss", "ignore_class", v));
         },
         [](const RunConfig& c) { return std::to_string(c.loss.ignore_class); }},
        BIND_DOUBLE("loss", "smooth_l1_beta", loss.smooth_l1_beta),
        BIND_DOUBLE("optimizer", "lr", optim.lr),
        BIND_INT("optimizer", "steps", optim.steps),
        BIND_INT("optimizer", "batch_size", optim.batch_size),
        {"optimizer", "seed",
         [](RunConfig& c, const std::string& v) {
             c.optim.seed = static_cast<uint64_t>(parse_int("optimizer", "seed", v));
         },
         [](const RunConfig& c) { return std::to_string(c.optim.seed); }},
        BIND_INT("optimizer", "checkpoint_every", optim.checkpoint_every),
        BIND_DOUBLE("optimizer", "beta1", optim.beta1),
        BIND_DOUBLE("optimizer", "beta2", optim.beta2),
        BIND_DOUBLE("optimizer", "eps", optim.eps),
        BIND_DOUBLE("optimizer", "target_epe", optim.target_epe),
        BIND_DOUBLE("optimizer", "target_accuracy", optim.target_accuracy),
        BIND_INT("optimizer", "check_every", optim.check_every),
        BIND_STRING("data", "source", data.source),
        BIND_STRING("data", "root", data.root),
        BIND_STRING("data", "split", data.split),
        BIND_INT("data", "synth_samples", data.synth_samples),
        BIND_INT("data", "synth_size", data.synth_size),
        BIND_INT("data", "synth_objects", data.synth_objects),
        BIND_INT("data", "tile", data.tile),
        BIND_STRING("output", "dir", output.dir),
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    try {
        model.validate();
        loss.validate();
    } catch (const contract_error& e) {
        throw config_error(e.what());
    }
    if (optim.lr <= 0.0) throw config_error("config: [optimizer] lr must be > 0");
    if (optim.steps < 0) throw config_error("config: [optimizer] steps must be >= 0");
    if (optim.batch_size < 1) throw config_error("config: [optimizer] batch_size must be >= 1");
    if (optim.checkpoint_every < 1)
        throw config_error("config: [optimizer] checkpoint_every must be >= 1");
    if (optim.check_every < 1) throw config_error("config: [optimizer] check_every must be >= 1");
    if (data.source != "synth" && data.source != "dir")
        throw config_error(format_msg("config: [data] source must be synth or dir, got '",
                                      data.source, "'"));
    if (data.source == "dir" && data.root.empty())
        throw config_error("config: [data] root is required when source = dir");
    if (data.synth_samples < 1) throw config_error("config: [data] synth_samples must be >= 1");
    if (data.synth_size < 16 || data.synth_size % 16 != 0)
        throw config_error("config: [data] synth_size must be a positive multiple of 16");
    if (data.tile < 16 || data.tile % 16 != 0)
        throw config_error("config: [data] tile must be a positive multiple of 16");
    if (output.dir.empty()) throw config_error("config: [output] dir must not be empty");
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    std::string section;
    for (const auto& b : bindings()) {
        if (b.section != section) {
            if (!section.empty()) os << "\n";
            section = b.section;
            os << "[" << section << "]\n";
        }
        os << b.key << " = " << b.get(*this) << "\n";
    }
    return os.str();
}

uint64_t RunConfig::hash() const {
    const std::string text = to_text();
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash_pos = line.find_first_of("#;");
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error(format_msg("config line ", line_no, ": malformed section '",
                                              line, "'"));
            section = trim(line.substr(1, line.size() - 2));
            bool known = false;
            for (const auto& b : bindings()) known = known || b.section == section;
            if (!known)
                throw config_error(format_msg("config line ", line_no, ": unknown section [",
                                              section, "]"));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(format_msg("config line ", line_no, ": expected key = value, got '",
                                          line, "'"));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw config_error(format_msg("config line ", line_no, ": key '", key,
                                          "' appears before any [section]"));
        bool matched = false;
        for (const auto& b : bindings()) {
            if (b.section == section && b.key == key) {
                b.set(cfg, value);
                matched = true;
                break;
            }
        }
        if (!matched)
            throw config_error(format_msg("config line ", line_no, ": unknown key '", key,
                                          "' in section [", section, "]"));
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is.good()) throw config_error(format_msg("cannot open config file '", path, "'"));
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_text(buf.str());
}

}  // namespace s3net
